#include "nilel/biencoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "nilel/errors.hpp"
#include "nilel/rng.hpp"

namespace nilel {

double EntityIndex::nil_score(const Eigen::VectorXd& mention_vec) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].variant == "NIL") return vectors.row(i).dot(mention_vec);
  }
  throw ValidationError("index has no NIL row");
}

void EntityIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const char magic[8] = {'N', 'I', 'L', 'E', 'L', 'I', 'X', '1'};
  out.write(magic, sizeof(magic));
  auto write_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto write_str = [&](const std::string& s) {
    write_u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  };
  write_u64(static_cast<std::uint64_t>(dim));
  write_u64(rows.size());
  for (const IndexRow& row : rows) {
    write_str(row.entity_id);
    write_str(row.variant);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < dim; ++c) {
      const double v = vectors(static_cast<long>(r), c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

EntityIndex EntityIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, "NILELIX1", 8) != 0) {
    throw ParseError(path.string() + " is not an entity index");
  }
  auto read_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("index file truncated");
    return v;
  };
  auto read_str = [&]() {
    const auto n = read_u64();
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("index file truncated");
    return s;
  };
  EntityIndex index;
  index.dim = static_cast<int>(read_u64());
  const auto nrows = read_u64();
  index.rows.resize(nrows);
  for (auto& row : index.rows) {
    row.entity_id = read_str();
    row.variant = read_str();
  }
  index.vectors.resize(static_cast<long>(nrows), index.dim);
  for (std::uint64_t r = 0; r < nrows; ++r) {
    for (int c = 0; c < index.dim; ++c) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw ParseError("index file truncated");
      index.vectors(static_cast<long>(r), c) = v;
    }
  }
  return index;
}

EntityIndex build_index(const EncoderModel& entity_encoder, const Ontology& onto,
                        NilVariant nil_rep, bool synonym_augmentation,
                        const Vocabulary& vocab, int entity_max_len) {
  EntityIndex index;
  index.dim = entity_encoder.config.embed_dim;
  std::vector<Eigen::VectorXd> vecs;
  for (const Entity& ent : onto.entities) {
    // Synonyms in index rows take the name slot; the synonym list itself is
    // not concatenated here (that is the cross-encoder enhancement).
    vecs.push_back(encode(entity_encoder, entity_input(ent, false, vocab,
                                                       entity_max_len)));
    index.rows.push_back({ent.id, "NAME"});
    if (synonym_augmentation) {
      for (std::size_t s = 0; s < ent.synonyms.size(); ++s) {
        Entity variant = ent;
        variant.name = ent.synonyms[s];
        variant.synonyms.clear();
        vecs.push_back(encode(entity_encoder,
                              entity_input(variant, false, vocab, entity_max_len)));
        index.rows.push_back({ent.id, "SYN:" + std::to_string(s)});
      }
    }
  }
  vecs.push_back(encode(entity_encoder, nil_input(nil_rep, vocab, entity_max_len)));
  index.rows.push_back({kNilLabel, "NIL"});

  index.vectors.resize(static_cast<long>(vecs.size()), index.dim);
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    index.vectors.row(static_cast<long>(i)) = vecs[i].transpose();
  }
  return index;
}

bool CandidateSet::contains(const std::string& id) const {
  return std::any_of(items.begin(), items.end(),
                     [&](const Candidate& c) { return c.id == id; });
}

CandidateSet retrieve_topk(const Eigen::VectorXd& mention_vec,
                           const EntityIndex& index, int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const Eigen::VectorXd scores = index.vectors * mention_vec;
  std::unordered_map<std::string, double> best;
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    const double s = scores(static_cast<long>(r));
    auto [it, inserted] = best.emplace(index.rows[r].entity_id, s);
    if (!inserted && s > it->second) it->second = s;
  }
  std::vector<Candidate> all;
  all.reserve(best.size());
  for (const auto& [id, score] : best) all.push_back({id, score});
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  CandidateSet cands;
  cands.items = std::move(all);
  return cands;
}

double score_entity(const Eigen::VectorXd& mention_vec, const EntityIndex& index,
                    const std::string& id) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    if (index.rows[r].entity_id != id) continue;
    best = std::max(best, index.vectors.row(static_cast<long>(r)).dot(mention_vec));
  }
  return best;
}

CandidateSet insert_nil(CandidateSet cands, double nil_raw_score, int k) {
  if (cands.contains(kNilLabel)) return cands;
  if (cands.items.empty() || static_cast<int>(cands.items.size()) < k) {
    cands.items.push_back({kNilLabel, nil_raw_score});
  } else {
    cands.items.back() = {kNilLabel, nil_raw_score};
  }
  return cands;
}

double triplet_loss(double score_gold, const std::vector<double>& scores_neg,
                    double alpha) {
  double loss = 0.0;
  for (const double s : scores_neg) {
    loss += std::max(alpha - score_gold + s, 0.0);
  }
  return loss;
}

double triplet_batch_loss_and_grad(const EncoderModel& mention_encoder,
                                   const EncoderModel& entity_encoder,
                                   const std::vector<TokenizedInput>& mentions,
                                   const std::vector<TokenizedInput>& entities,
                                   double alpha, EncoderGrads& d_mention,
                                   EncoderGrads& d_entity) {
  const std::size_t b = mentions.size();
  if (entities.size() != b) {
    throw ValidationError("mention/entity batch size mismatch");
  }
  const int d = mention_encoder.config.embed_dim;

  std::vector<ForwardCache> mc(b), ec(b);
  Eigen::MatrixXd vm(b, d), ve(b, d);
  for (std::size_t i = 0; i < b; ++i) {
    vm.row(static_cast<long>(i)) = encode(mention_encoder, mentions[i], mc[i]).transpose();
    ve.row(static_cast<long>(i)) = encode(entity_encoder, entities[i], ec[i]).transpose();
  }
  const Eigen::MatrixXd scores = vm * ve.transpose();

  double loss = 0.0;
  Eigen::MatrixXd dvm = Eigen::MatrixXd::Zero(b, d);
  Eigen::MatrixXd dve = Eigen::MatrixXd::Zero(b, d);
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const long li = static_cast<long>(i);
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const long lj = static_cast<long>(j);
      const double margin = alpha - scores(li, li) + scores(li, lj);
      if (margin <= 0.0) continue;
      loss += margin * inv_b;
      dvm.row(li) += inv_b * (ve.row(lj) - ve.row(li));
      dve.row(li) -= inv_b * vm.row(li);
      dve.row(lj) += inv_b * vm.row(li);
    }
  }
  if (!std::isfinite(loss)) {
    throw ValidationError("non-finite triplet loss in batch");
  }
  for (std::size_t i = 0; i < b; ++i) {
    const long li = static_cast<long>(i);
    if (!dvm.row(li).isZero(0.0)) {
      backward_from_cls(mention_encoder, mc[i], dvm.row(li).transpose(), d_mention);
    }
    if (!dve.row(li).isZero(0.0)) {
      backward_from_cls(entity_encoder, ec[i], dve.row(li).transpose(), d_entity);
    }
  }
  return loss;
}

namespace {

struct TrainPair {
  int record = 0;           // index into train.records
  const Entity* entity = nullptr;  // nullptr means the NIL template
  int synonym = -1;         // -1: name row, >= 0: that synonym in the name slot
};

}  // namespace

BiencoderModels train_biencoder(const DatasetSplit& train, const Ontology& onto,
                                const Vocabulary& vocab,
                                const BiencoderConfig& config) {
  for (const MentionRecord& rec : train.records) {
    if (!is_nil(rec.gold) && !onto.contains(rec.gold)) {
      throw ValidationError("gold id " + rec.gold + " is absent from the ontology");
    }
  }

  EncoderConfig mention_cfg = config.encoder;
  mention_cfg.vocab_size = vocab.size();
  mention_cfg.max_len = config.mention_max;
  mention_cfg.seed = config.seed;
  EncoderConfig entity_cfg = mention_cfg;
  entity_cfg.max_len = config.entity_max;
  entity_cfg.seed = config.seed + 1;

  BiencoderModels models{init_encoder(mention_cfg), init_encoder(entity_cfg)};
  if (!config.nil_fine_tuned) {
    models.entity_encoder.frozen_token_rows = {Vocabulary::kNil};
  }

  std::vector<TrainPair> pairs;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    const MentionRecord& rec = train.records[i];
    if (is_nil(rec.gold)) {
      if (config.nil_fine_tuned) pairs.push_back({static_cast<int>(i), nullptr, -1});
      continue;
    }
    const Entity* ent = onto.find(rec.gold);
    pairs.push_back({static_cast<int>(i), ent, -1});
    if (config.synonym_augmentation) {
      for (std::size_t s = 0; s < ent->synonyms.size(); ++s) {
        pairs.push_back({static_cast<int>(i), ent, static_cast<int>(s)});
      }
    }
  }

  AdamW opt_m, opt_e;
  opt_m.lr = opt_e.lr = config.lr;
  opt_m.weight_decay = opt_e.weight_decay = config.weight_decay;
  EncoderGrads gm = make_grads(models.mention_encoder);
  EncoderGrads ge = make_grads(models.entity_encoder);
  const auto refs_m = param_refs(models.mention_encoder, &gm);
  const auto refs_e = param_refs(models.entity_encoder, &ge);

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(pairs);
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(pairs.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<TokenizedInput> mention_in, entity_in;
      for (std::size_t p = start; p < end; ++p) {
        const TrainPair& tp = pairs[p];
        mention_in.push_back(mention_input(train.records[tp.record], vocab,
                                           config.mention_max));
        if (tp.entity == nullptr) {
          entity_in.push_back(nil_input(config.nil_rep, vocab, config.entity_max));
        } else if (tp.synonym < 0) {
          entity_in.push_back(entity_input(*tp.entity, false, vocab,
                                           config.entity_max));
        } else {
          Entity variant = *tp.entity;
          variant.name = tp.entity->synonyms[static_cast<std::size_t>(tp.synonym)];
          variant.synonyms.clear();
          entity_in.push_back(entity_input(variant, false, vocab, config.entity_max));
        }
      }
      gm.set_zero();
      ge.set_zero();
      triplet_batch_loss_and_grad(models.mention_encoder, models.entity_encoder,
                                  mention_in, entity_in, config.alpha, gm, ge);
      opt_m.step(refs_m);
      opt_e.step(refs_e);
    }
  }
  return models;
}

std::vector<CandidateSet> retrieve_candidates(const EncoderModel& mention_encoder,
                                              const EntityIndex& index,
                                              const DatasetSplit& split,
                                              const Vocabulary& vocab, int k,
                                              int mention_max) {
  std::vector<CandidateSet> sets;
  sets.reserve(split.records.size());
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    const Eigen::VectorXd vec =
        encode(mention_encoder, mention_input(split.records[i], vocab, mention_max));
    CandidateSet cands = retrieve_topk(vec, index, k);
    cands.mention_index = static_cast<int>(i);
    sets.push_back(insert_nil(std::move(cands), index.nil_score(vec), k));
  }
  return sets;
}

}  // namespace nilel
