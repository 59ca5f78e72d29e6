#include "nilel/crossencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "nilel/checkpoint.hpp"
#include "nilel/errors.hpp"
#include "nilel/rng.hpp"

namespace nilel {

namespace {

constexpr double kBceEps = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_normal_vec(Eigen::VectorXd& v, Rng& rng, double stddev) {
  for (long i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, stddev);
}

}  // namespace

void CrossGrads::set_zero() {
  encoder.set_zero();
  rank_w.setZero();
  rank_b = 0.0;
  nil_w.setZero();
  nil_b = 0.0;
  ft_w.setZero();
  ft_b = 0.0;
}

CrossModel init_cross_model(const EncoderConfig& encoder_config, int k,
                            int fmes_dim, std::uint64_t seed) {
  CrossModel m;
  EncoderConfig cfg = encoder_config;
  cfg.seed = seed;
  m.encoder = init_encoder(cfg);
  Rng rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
  const int d = cfg.embed_dim;
  m.rank_w.resize(d);
  fill_normal_vec(m.rank_w, rng, 0.02);
  m.nil_w.resize(d);
  fill_normal_vec(m.nil_w, rng, 0.02);
  m.k = k;
  m.fmes_dim = fmes_dim;
  if (k > 0) {
    m.ft_w.resize(k + 3 + fmes_dim + d);
    fill_normal_vec(m.ft_w, rng, 0.02);
  }
  return m;
}

CrossGrads make_grads(const CrossModel& model) {
  CrossGrads g;
  g.encoder = nilel::make_grads(model.encoder);
  g.rank_w = Eigen::VectorXd::Zero(model.rank_w.size());
  g.nil_w = Eigen::VectorXd::Zero(model.nil_w.size());
  g.ft_w = Eigen::VectorXd::Zero(model.ft_w.size());
  return g;
}

std::vector<ParamRef> param_refs(CrossModel& model, CrossGrads* grads) {
  std::vector<ParamRef> refs =
      param_refs(model.encoder, grads ? &grads->encoder : nullptr, "encoder.");
  const bool fr = model.freeze_heads;
  refs.push_back({"rank_w", model.rank_w.data(),
                  grads ? grads->rank_w.data() : nullptr, model.rank_w.size(), 1,
                  fr, nullptr});
  refs.push_back({"rank_b", &model.rank_b, grads ? &grads->rank_b : nullptr, 1, 1,
                  fr, nullptr});
  refs.push_back({"nil_w", model.nil_w.data(),
                  grads ? grads->nil_w.data() : nullptr, model.nil_w.size(), 1,
                  fr, nullptr});
  refs.push_back({"nil_b", &model.nil_b, grads ? &grads->nil_b : nullptr, 1, 1,
                  fr, nullptr});
  if (model.ft_w.size() > 0) {
    refs.push_back({"ft_w", model.ft_w.data(),
                    grads ? grads->ft_w.data() : nullptr, model.ft_w.size(), 1,
                    fr, nullptr});
    refs.push_back({"ft_b", &model.ft_b, grads ? &grads->ft_b : nullptr, 1, 1,
                    fr, nullptr});
  }
  return refs;
}

void save_cross_model(const CrossModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = "cross";
  header["config"] = encoder_config_to_json(model.encoder.config);
  header["lambda_nil"] = model.lambda_nil;
  header["k"] = model.k;
  header["fmes_dim"] = model.fmes_dim;
  header["head"] = static_cast<int>(model.trained_head);
  header["nil_rep"] = nil_variant_to_string(model.nil_rep);
  header["synonym_concat"] = model.synonym_concat;
  header["mention_max"] = model.mention_max;
  header["entity_max"] = model.entity_max;
  auto& m = const_cast<CrossModel&>(model);
  checkpoint_write(path, header, param_refs(m, nullptr));
}

CrossModel load_cross_model(const std::filesystem::path& path) {
  const LoadedCheckpoint ckpt = checkpoint_read(path);
  if (ckpt.header.value("kind", "") != "cross") {
    throw ParseError(path.string() + " is not a cross-encoder checkpoint");
  }
  CrossModel model = init_cross_model(
      encoder_config_from_json(ckpt.header.at("config")),
      ckpt.header.at("k").get<int>(), ckpt.header.at("fmes_dim").get<int>(),
      /*seed=*/0);
  model.lambda_nil = ckpt.header.at("lambda_nil").get<double>();
  model.trained_head = static_cast<NilHead>(ckpt.header.at("head").get<int>());
  model.nil_rep = nil_variant_from_string(ckpt.header.at("nil_rep").get<std::string>());
  model.synonym_concat = ckpt.header.at("synonym_concat").get<bool>();
  model.mention_max = ckpt.header.at("mention_max").get<int>();
  model.entity_max = ckpt.header.at("entity_max").get<int>();
  fill_params(ckpt, param_refs(model, nullptr));
  return model;
}

double ce_loss(const std::vector<double>& scores, int gold_index) {
  if (gold_index < 0 || gold_index >= static_cast<int>(scores.size())) {
    throw ValidationError("gold index out of range");
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (const double s : scores) sum += std::exp(s - mx);
  return -(scores[static_cast<std::size_t>(gold_index)] - mx - std::log(sum));
}

double nil_bce_loss(double s, int y) {
  s = std::clamp(s, kBceEps, 1.0 - kBceEps);
  return -(y * std::log(s) + (1 - y) * std::log(1.0 - s));
}

double joint_loss(double ce, double bce, double lambda_nil) {
  return ce + lambda_nil * bce;
}

std::vector<double> softmax(const std::vector<double>& scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> pooled_scores(const std::vector<double>& scores) {
  std::vector<double> out = scores;
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  double avg = 0.0;
  for (const double s : scores) avg += s;
  avg /= static_cast<double>(scores.size());
  out.push_back(*mn);
  out.push_back(*mx);
  out.push_back(avg);
  return out;
}

namespace {

TokenizedInput candidate_pair_input(const MentionRecord& rec,
                                    const Candidate& cand, const Ontology& onto,
                                    const Vocabulary& vocab,
                                    const CrossModel& model) {
  if (is_nil(cand.id)) {
    return pair_input(rec, model.nil_rep, vocab, model.mention_max,
                      model.entity_max);
  }
  const Entity* ent = onto.find(cand.id);
  if (ent == nullptr) {
    throw ValidationError("candidate id " + cand.id + " is absent from the ontology");
  }
  return pair_input(rec, *ent, model.synonym_concat, vocab, model.mention_max,
                    model.entity_max);
}

}  // namespace

double cross_loss_and_grad(const CrossModel& model, const MentionRecord& rec,
                           const CandidateSet& cands, const Ontology& onto,
                           const Vocabulary& vocab, const CrossLossSpec& spec,
                           CrossGrads& grads) {
  if (!cands.contains(kNilLabel)) {
    throw ValidationError("candidate set is missing NIL");
  }
  const std::size_t n = cands.items.size();
  const bool need_scores =
      spec.gold_index >= 0 || spec.head == NilHead::kDynamicFeatures;

  std::vector<ForwardCache> caches;
  std::vector<Eigen::VectorXd> vs;
  std::vector<double> scores;
  if (need_scores) {
    caches.resize(n);
    vs.resize(n);
    scores.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      vs[j] = encode(model.encoder,
                     candidate_pair_input(rec, cands.items[j], onto, vocab, model),
                     caches[j]);
      scores[j] = vs[j].dot(model.rank_w) + model.rank_b;
    }
  }

  double loss = 0.0;
  std::vector<double> dscores(n, 0.0);

  if (spec.gold_index >= 0) {
    loss += ce_loss(scores, spec.gold_index);
    const std::vector<double> p = softmax(scores);
    for (std::size_t j = 0; j < n; ++j) {
      dscores[j] += p[j] - (static_cast<int>(j) == spec.gold_index ? 1.0 : 0.0);
    }
  }

  if (spec.head == NilHead::kSigmoid) {
    ForwardCache mcache;
    const Eigen::VectorXd vm =
        encode(model.encoder, mention_input(rec, vocab, model.mention_max), mcache);
    const double s = sigmoid(vm.dot(model.nil_w) + model.nil_b);
    loss += spec.lambda * nil_bce_loss(s, spec.nil_label);
    const double dlogit = spec.lambda * (s - static_cast<double>(spec.nil_label));
    grads.nil_w += dlogit * vm;
    grads.nil_b += dlogit;
    backward_from_cls(model.encoder, mcache, dlogit * model.nil_w, grads.encoder);
  } else if (spec.head == NilHead::kDynamicFeatures) {
    if (spec.fmes == nullptr) {
      throw ValidationError("dynamic-feature head needs string-match features");
    }
    if (static_cast<int>(n) != model.k) {
      throw ValidationError("candidate count " + std::to_string(n) +
                            " does not match the ft head layout k=" +
                            std::to_string(model.k));
    }
    ForwardCache mcache;
    const Eigen::VectorXd vm =
        encode(model.encoder, mention_input(rec, vocab, model.mention_max), mcache);
    const std::vector<double> dme = pooled_scores(scores);
    const int kd = static_cast<int>(dme.size());  // k + 3
    Eigen::VectorXd feat(kd + model.fmes_dim + vm.size());
    for (int i = 0; i < kd; ++i) feat(i) = dme[static_cast<std::size_t>(i)];
    feat.segment(kd, model.fmes_dim) = *spec.fmes;
    feat.tail(vm.size()) = vm;
    const double s = sigmoid(feat.dot(model.ft_w) + model.ft_b);
    loss += spec.lambda * nil_bce_loss(s, spec.nil_label);
    const double dlogit = spec.lambda * (s - static_cast<double>(spec.nil_label));
    grads.ft_w += dlogit * feat;
    grads.ft_b += dlogit;
    backward_from_cls(model.encoder, mcache,
                      dlogit * model.ft_w.tail(vm.size()), grads.encoder);
    // Pooling routes extra gradient onto the raw scores.
    Eigen::VectorXd dfeat = dlogit * model.ft_w;
    for (std::size_t j = 0; j < n; ++j) dscores[j] += dfeat(static_cast<long>(j));
    const auto mn_it = std::min_element(scores.begin(), scores.end());
    const auto mx_it = std::max_element(scores.begin(), scores.end());
    dscores[static_cast<std::size_t>(mn_it - scores.begin())] +=
        dfeat(static_cast<long>(n));
    dscores[static_cast<std::size_t>(mx_it - scores.begin())] +=
        dfeat(static_cast<long>(n) + 1);
    for (std::size_t j = 0; j < n; ++j) {
      dscores[j] += dfeat(static_cast<long>(n) + 2) / static_cast<double>(n);
    }
  }

  if (!std::isfinite(loss)) {
    throw ValidationError("non-finite loss for mention " +
                          std::to_string(cands.mention_index));
  }

  for (std::size_t j = 0; j < n; ++j) {
    if (dscores[j] == 0.0) continue;
    grads.rank_w += dscores[j] * vs[j];
    grads.rank_b += dscores[j];
    backward_from_cls(model.encoder, caches[j], dscores[j] * model.rank_w,
                      grads.encoder);
  }
  return loss;
}

CrossModel train_crossencoder(const DatasetSplit& train,
                              const std::vector<CandidateSet>& candidates,
                              const Ontology& onto, const Vocabulary& vocab,
                              const CrossencoderConfig& config) {
  if (candidates.size() != train.records.size()) {
    throw ValidationError("candidate sets do not align with the training split");
  }

  EncoderConfig encoder_cfg = config.encoder;
  encoder_cfg.vocab_size = vocab.size();
  encoder_cfg.max_len = config.mention_max + config.entity_max;
  const int k = candidates.empty() ? 0 : static_cast<int>(candidates[0].items.size());
  const int fmes_dim =
      config.fmes != nullptr && !config.fmes->empty()
          ? static_cast<int>((*config.fmes)[0].size())
          : 0;
  CrossModel model = init_cross_model(encoder_cfg, k, fmes_dim, config.seed);
  model.lambda_nil = config.lambda_nil;
  model.nil_rep = config.nil_rep;
  model.synonym_concat = config.synonym_concat;
  model.mention_max = config.mention_max;
  model.entity_max = config.entity_max;
  model.trained_head = config.head;
  if (!config.nil_fine_tuned) {
    model.encoder.frozen_token_rows = {Vocabulary::kNil};
  }
  if (config.freeze_all) {
    model.encoder.freeze_token_embedding = true;
    model.encoder.freeze_position_embedding = true;
    model.encoder.freeze_layers = true;
    model.encoder.freeze_final_norm = true;
    model.freeze_heads = true;
  }
  if (config.head == NilHead::kDynamicFeatures &&
      (config.fmes == nullptr || config.fmes->size() != train.records.size())) {
    throw ValidationError("dynamic-feature head needs one feature vector per record");
  }

  // Candidate hygiene: NIL present, gold present (injected when the
  // bi-encoder missed it).
  std::vector<CandidateSet> sets = candidates;
  long misses = 0;
  std::vector<int> gold_index(sets.size(), -1);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    CandidateSet& cs = sets[i];
    if (!cs.contains(kNilLabel)) {
      throw ValidationError("candidate set " + std::to_string(i) + " is missing NIL");
    }
    const std::string& gold = train.records[i].gold;
    if (!is_nil(gold) && !onto.contains(gold)) {
      throw ValidationError("gold id " + gold + " is absent from the ontology");
    }
    if (!cs.contains(gold)) {
      ++misses;
      // Lowest-scored non-NIL slot; a NIL-only set grows by one instead.
      int slot = -1;
      for (int j = static_cast<int>(cs.items.size()) - 1; j >= 0; --j) {
        if (!is_nil(cs.items[static_cast<std::size_t>(j)].id)) {
          slot = j;
          break;
        }
      }
      if (slot < 0) {
        cs.items.push_back({gold, 0.0});
      } else {
        cs.items[static_cast<std::size_t>(slot)].id = gold;
      }
    }
    for (std::size_t j = 0; j < cs.items.size(); ++j) {
      if (cs.items[j].id == gold) {
        gold_index[i] = static_cast<int>(j);
        break;
      }
    }
  }

  AdamW opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  CrossGrads grads = make_grads(model);
  const auto refs = param_refs(model, &grads);

  std::vector<std::size_t> order(train.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(config.seed ^ 0x94d049bb133111ebULL);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.log != nullptr) {
      (*config.log) << "epoch " << epoch + 1 << " gold-miss rate: "
                    << (train.records.empty()
                            ? 0.0
                            : static_cast<double>(misses) /
                                  static_cast<double>(train.records.size()))
                    << "\n";
    }
    shuffle_rng.shuffle(order);
    for (const std::size_t i : order) {
      const MentionRecord& rec = train.records[i];
      const bool gold_nil = is_nil(rec.gold);
      CrossLossSpec spec;
      // Fixed NIL representation: NIL-labelled mentions do not supervise the
      // ranking loss.
      spec.gold_index =
          (gold_nil && !config.nil_fine_tuned) ? -1 : gold_index[i];
      spec.head = config.head;
      spec.nil_label = gold_nil ? 1 : 0;
      spec.lambda = config.lambda_nil;
      Eigen::VectorXd fmes;
      if (config.head == NilHead::kDynamicFeatures) {
        fmes = (*config.fmes)[i];
        spec.fmes = &fmes;
      }
      if (spec.gold_index < 0 && spec.head == NilHead::kNone) continue;
      if (spec.head != NilHead::kNone && spec.lambda == 0.0 &&
          spec.gold_index < 0) {
        continue;
      }
      grads.set_zero();
      cross_loss_and_grad(model, rec, sets[i], onto, vocab, spec, grads);
      opt.step(refs);
    }
  }
  return model;
}

namespace {

// Best candidate by normalized score among those passing `keep`; exact ties
// prefer NIL, then the smaller id. Returns -1 when none qualify.
int best_candidate(const std::vector<Candidate>& items,
                   const std::vector<double>& p, bool allow_nil) {
  int best = -1;
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (!allow_nil && is_nil(items[j].id)) continue;
    if (best < 0) {
      best = static_cast<int>(j);
      continue;
    }
    const auto b = static_cast<std::size_t>(best);
    if (p[j] > p[b]) {
      best = static_cast<int>(j);
    } else if (p[j] == p[b]) {
      const bool j_wins = (is_nil(items[j].id) && !is_nil(items[b].id)) ||
                          (is_nil(items[j].id) == is_nil(items[b].id) &&
                           items[j].id < items[b].id);
      if (j_wins) best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace

Prediction predict(const CrossModel& model, const MentionRecord& rec,
                   const CandidateSet& cands, const Ontology& onto,
                   const Vocabulary& vocab, PredictMode mode,
                   const PredictOptions& opts) {
  if (!cands.contains(kNilLabel)) {
    throw ValidationError("candidate set is missing NIL");
  }
  const std::size_t n = cands.items.size();
  std::vector<Eigen::VectorXd> vs(n);
  std::vector<double> scores(n);
  for (std::size_t j = 0; j < n; ++j) {
    vs[j] = encode(model.encoder,
                   candidate_pair_input(rec, cands.items[j], onto, vocab, model));
    scores[j] = vs[j].dot(model.rank_w) + model.rank_b;
  }
  const std::vector<double> p = softmax(scores);

  Prediction pred;
  pred.mention_index = cands.mention_index;
  pred.candidate_scores.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    pred.candidate_scores.push_back({cands.items[j].id, p[j]});
  }

  // The auxiliary NIL probability, when one was trained.
  std::optional<double> is_nil_prob;
  if (model.trained_head == NilHead::kSigmoid) {
    const Eigen::VectorXd vm =
        encode(model.encoder, mention_input(rec, vocab, model.mention_max));
    is_nil_prob = sigmoid(vm.dot(model.nil_w) + model.nil_b);
  } else if (model.trained_head == NilHead::kDynamicFeatures &&
             opts.fmes != nullptr && static_cast<int>(n) == model.k) {
    const Eigen::VectorXd vm =
        encode(model.encoder, mention_input(rec, vocab, model.mention_max));
    const std::vector<double> dme = pooled_scores(scores);
    Eigen::VectorXd feat(static_cast<long>(dme.size()) + model.fmes_dim +
                         vm.size());
    for (std::size_t i = 0; i < dme.size(); ++i) {
      feat(static_cast<long>(i)) = dme[i];
    }
    feat.segment(static_cast<long>(dme.size()), model.fmes_dim) = *opts.fmes;
    feat.tail(vm.size()) = vm;
    is_nil_prob = sigmoid(feat.dot(model.ft_w) + model.ft_b);
  }
  pred.is_nil_prob = is_nil_prob;

  int chosen = -1;
  switch (mode) {
    case PredictMode::kArgmax:
      chosen = best_candidate(cands.items, p, /*allow_nil=*/true);
      break;
    case PredictMode::kThreshold: {
      bool all_below = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (!is_nil(cands.items[j].id) && p[j] >= opts.th_cross) {
          all_below = false;
          break;
        }
      }
      chosen = all_below ? -1 : best_candidate(cands.items, p, /*allow_nil=*/false);
      break;
    }
    case PredictMode::kNilHead:
    case PredictMode::kFtHead: {
      if (!is_nil_prob.has_value()) {
        throw ValidationError("model has no trained NIL head for this mode");
      }
      chosen = *is_nil_prob >= opts.nil_head_threshold
                   ? -1
                   : best_candidate(cands.items, p, /*allow_nil=*/false);
      break;
    }
  }

  if (chosen < 0) {
    pred.predicted = kNilLabel;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_nil(cands.items[j].id)) pred.score = p[j];
    }
  } else {
    pred.predicted = cands.items[static_cast<std::size_t>(chosen)].id;
    pred.score = p[static_cast<std::size_t>(chosen)];
  }
  return pred;
}

void save_predictions(const std::vector<Prediction>& preds,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Prediction& p : preds) {
    nlohmann::json obj;
    obj["i"] = p.mention_index;
    obj["pred"] = p.predicted;
    obj["score"] = p.score;
    if (p.is_nil_prob.has_value()) {
      obj["is_nil_prob"] = *p.is_nil_prob;
    } else {
      obj["is_nil_prob"] = nullptr;
    }
    out << obj.dump() << "\n";
  }
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Prediction> preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Prediction p;
    p.mention_index = obj.at("i").get<int>();
    p.predicted = obj.at("pred").get<std::string>();
    p.score = obj.at("score").get<double>();
    if (obj.contains("is_nil_prob") && !obj["is_nil_prob"].is_null()) {
      p.is_nil_prob = obj["is_nil_prob"].get<double>();
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

}  // namespace nilel
