#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "nilel/crossencoder.hpp"
#include "nilel/errors.hpp"
#include "nilel/rng.hpp"
#include "nilel/synth.hpp"

using namespace nilel;

namespace {

struct Fixture {
  SynthData data;
  Vocabulary vocab;

  explicit Fixture(int entities = 8, int mentions = 40, std::uint64_t seed = 21) {
    SynthConfig sc;
    sc.n_entities = entities;
    sc.n_mentions = mentions;
    sc.seed = seed;
    data = generate_synthetic(sc);
    std::vector<std::string> texts;
    for (const MentionRecord& rec : data.train.records) {
      texts.push_back(rec.ctxt_l);
      texts.push_back(rec.mention);
      texts.push_back(rec.ctxt_r);
    }
    for (const Entity& e : data.ontology.entities) {
      texts.push_back(e.name);
      for (const std::string& s : e.synonyms) texts.push_back(s);
      texts.push_back(e.definition);
    }
    texts.push_back("nil it is a nil option .");
    vocab = build_vocab(texts, 1);
  }

  EncoderConfig encoder_config() const {
    EncoderConfig c;
    c.vocab_size = vocab.size();
    c.embed_dim = 8;
    c.layers = 1;
    c.heads = 2;
    c.ffn_dim = 12;
    c.max_len = 40;
    return c;
  }

  CrossModel model(int k, std::uint64_t seed = 5, int fmes_dim = 0) const {
    CrossModel m = init_cross_model(encoder_config(), k, fmes_dim, seed);
    m.mention_max = 12;
    m.entity_max = 20;
    return m;
  }

  // Candidate set over the first k-1 entities plus NIL.
  CandidateSet cands(int k) const {
    CandidateSet cs;
    for (int j = 0; j < k - 1; ++j) {
      cs.items.push_back({data.ontology.entities[static_cast<std::size_t>(j)].id,
                          1.0 - 0.1 * j});
    }
    cs.items.push_back({kNilLabel, 0.0});
    return cs;
  }
};

}  // namespace

TEST_CASE("ce_loss values") {
  CHECK(ce_loss({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ce_loss({3.7}, 0) == doctest::Approx(0.0));
  // direct evaluation: -ln(e^2 / (e^2 + e + 1))
  const double direct =
      -std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(1.0) + 1.0));
  CHECK(ce_loss({2.0, 1.0, 0.0}, 0) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(ce_loss({2.0, 1.0, 0.0}, 0) == doctest::Approx(0.40760596444438079));
  CHECK_THROWS_AS(ce_loss({1.0}, 1), ValidationError);
  CHECK_THROWS_AS(ce_loss({1.0}, -1), ValidationError);
}

TEST_CASE("nil_bce_loss values") {
  CHECK(nil_bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(nil_bce_loss(1.0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(nil_bce_loss(0.25, 0) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(nil_bce_loss(0.25, 0) == doctest::Approx(0.2876820724517809));
  // clamping keeps the endpoints finite
  CHECK(std::isfinite(nil_bce_loss(0.0, 1)));
  CHECK(std::isfinite(nil_bce_loss(1.0, 0)));
}

TEST_CASE("joint_loss composes") {
  CHECK(joint_loss(0.4076, 0.2877, 0.0) == doctest::Approx(0.4076));
  CHECK(joint_loss(0.4076, 0.2877, 0.25) == doctest::Approx(0.479525));
}

TEST_CASE("softmax sums to one and ignores shifts") {
  Rng rng(9);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> scores;
    for (int i = 0; i < 6; ++i) scores.push_back(rng.normal(0.0, 3.0));
    const std::vector<double> p = softmax(scores);
    double sum = 0.0;
    for (const double v : p) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<double> shifted = scores;
    for (double& s : shifted) s += 17.5;
    const std::vector<double> q = softmax(shifted);
    const auto argmax_p = std::max_element(p.begin(), p.end()) - p.begin();
    const auto argmax_q = std::max_element(q.begin(), q.end()) - q.begin();
    CHECK(argmax_p == argmax_q);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("pooled_scores appends min, max, avg") {
  CHECK(pooled_scores({1.0, 2.0, 3.0}) ==
        std::vector<double>{1.0, 2.0, 3.0, 1.0, 3.0, 2.0});
}

TEST_CASE("Eq. 6 gradients through the encoder match finite differences") {
  const Fixture fx;
  CrossModel model = fx.model(3);
  const MentionRecord& rec = fx.data.train.records[0];
  const CandidateSet cs = fx.cands(3);

  CrossLossSpec spec;
  spec.gold_index = -1;
  spec.head = NilHead::kSigmoid;
  spec.nil_label = 1;
  spec.lambda = 1.0;

  CrossGrads grads = make_grads(model);
  cross_loss_and_grad(model, rec, cs, fx.data.ontology, fx.vocab, spec, grads);

  CrossGrads scratch = make_grads(model);
  const auto loss_fn = [&] {
    scratch.set_zero();
    return cross_loss_and_grad(model, rec, cs, fx.data.ontology, fx.vocab, spec,
                               scratch);
  };
  CHECK(grad_check(param_refs(model, &grads), loss_fn, 250, 1e-5, 3) < 1e-4);
}

TEST_CASE("Eq. 7 joint gradients match finite differences") {
  const Fixture fx;
  CrossModel model = fx.model(3);
  const MentionRecord& rec = fx.data.train.records[1];
  const CandidateSet cs = fx.cands(3);

  CrossLossSpec spec;
  spec.gold_index = 1;
  spec.head = NilHead::kSigmoid;
  spec.nil_label = 0;
  spec.lambda = 0.25;

  CrossGrads grads = make_grads(model);
  const double loss =
      cross_loss_and_grad(model, rec, cs, fx.data.ontology, fx.vocab, spec, grads);
  CHECK(loss > 0.0);

  CrossGrads scratch = make_grads(model);
  const auto loss_fn = [&] {
    scratch.set_zero();
    return cross_loss_and_grad(model, rec, cs, fx.data.ontology, fx.vocab, spec,
                               scratch);
  };
  CHECK(grad_check(param_refs(model, &grads), loss_fn, 250, 1e-5, 4) < 1e-4);
}

TEST_CASE("zero-weight ranking head yields ln k") {
  const Fixture fx;
  CrossModel model = fx.model(4);
  model.rank_w.setZero();
  model.rank_b = 0.0;
  CrossLossSpec spec;
  spec.gold_index = 2;
  CrossGrads grads = make_grads(model);
  const double loss = cross_loss_and_grad(model, fx.data.train.records[0],
                                          fx.cands(4), fx.data.ontology, fx.vocab,
                                          spec, grads);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("candidate set without NIL is rejected") {
  const Fixture fx;
  CrossModel model = fx.model(2);
  CandidateSet cs;
  cs.items = {{fx.data.ontology.entities[0].id, 1.0},
              {fx.data.ontology.entities[1].id, 0.5}};
  CrossLossSpec spec;
  spec.gold_index = 0;
  CrossGrads grads = make_grads(model);
  CHECK_THROWS_AS(cross_loss_and_grad(model, fx.data.train.records[0], cs,
                                      fx.data.ontology, fx.vocab, spec, grads),
                  ValidationError);
  CHECK_THROWS_AS(predict(model, fx.data.train.records[0], cs, fx.data.ontology,
                          fx.vocab, PredictMode::kArgmax),
                  ValidationError);
}

namespace {

std::vector<CandidateSet> fixed_candidates(const Fixture& fx,
                                           const DatasetSplit& split, int k) {
  std::vector<CandidateSet> sets;
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    CandidateSet cs = fx.cands(k);
    cs.mention_index = static_cast<int>(i);
    sets.push_back(std::move(cs));
  }
  return sets;
}

CrossencoderConfig train_config(const Fixture& fx, int epochs = 1) {
  CrossencoderConfig cc;
  cc.encoder = fx.encoder_config();
  cc.mention_max = 12;
  cc.entity_max = 20;
  cc.epochs = epochs;
  cc.lr = 1e-3;
  cc.seed = 5;
  return cc;
}

std::vector<double> dump_params(CrossModel& model) {
  std::vector<double> out;
  for (const ParamRef& r : param_refs(model, nullptr)) {
    out.insert(out.end(), r.value, r.value + r.size());
  }
  return out;
}

}  // namespace

TEST_CASE("frozen-everything training returns the initialization") {
  const Fixture fx;
  CrossencoderConfig cc = train_config(fx);
  cc.freeze_all = true;
  CrossModel trained = train_crossencoder(
      fx.data.train, fixed_candidates(fx, fx.data.train, 3), fx.data.ontology,
      fx.vocab, cc);
  EncoderConfig fresh_cfg = fx.encoder_config();
  fresh_cfg.max_len = cc.mention_max + cc.entity_max;
  CrossModel fresh = init_cross_model(fresh_cfg, 3, 0, cc.seed);
  CHECK(dump_params(trained) == dump_params(fresh));
}

TEST_CASE("lambda above zero moves the NIL head parameters") {
  const Fixture fx;
  CrossencoderConfig with_head = train_config(fx);
  with_head.head = NilHead::kSigmoid;
  with_head.lambda_nil = 0.25;
  CrossencoderConfig without = with_head;
  without.lambda_nil = 0.0;
  CrossModel a = train_crossencoder(fx.data.train,
                                    fixed_candidates(fx, fx.data.train, 3),
                                    fx.data.ontology, fx.vocab, with_head);
  CrossModel b = train_crossencoder(fx.data.train,
                                    fixed_candidates(fx, fx.data.train, 3),
                                    fx.data.ontology, fx.vocab, without);
  CHECK(dump_params(a) != dump_params(b));
}

TEST_CASE("training injects a missing gold and logs the miss rate") {
  const Fixture fx;
  // candidate sets that never contain the gold
  std::vector<CandidateSet> sets;
  for (std::size_t i = 0; i < fx.data.train.records.size(); ++i) {
    CandidateSet cs;
    cs.mention_index = static_cast<int>(i);
    const std::size_t last = fx.data.ontology.entities.size() - 1;
    cs.items = {{fx.data.ontology.entities[last].id, 0.5}, {kNilLabel, 0.0}};
    // make sure the filler is never the gold
    if (cs.items[0].id == fx.data.train.records[i].gold) {
      cs.items[0].id = fx.data.ontology.entities[last - 1].id;
    }
    sets.push_back(std::move(cs));
  }
  std::ostringstream log;
  CrossencoderConfig cc = train_config(fx);
  cc.log = &log;
  CHECK_NOTHROW(train_crossencoder(fx.data.train, sets, fx.data.ontology,
                                   fx.vocab, cc));
  CHECK(log.str().find("gold-miss rate") != std::string::npos);
}

TEST_CASE("cross model checkpoint round-trips bitwise") {
  const Fixture fx;
  CrossModel model = fx.model(5, 77, 7);
  model.lambda_nil = 0.05;
  model.trained_head = NilHead::kDynamicFeatures;
  model.nil_rep = NilVariant::kTokenNilDef;
  model.synonym_concat = false;
  const auto path = std::filesystem::temp_directory_path() / "cross_rt.ckpt";
  save_cross_model(model, path);
  CrossModel loaded = load_cross_model(path);
  CHECK(dump_params(loaded) == dump_params(model));
  CHECK(loaded.lambda_nil == model.lambda_nil);
  CHECK(loaded.trained_head == NilHead::kDynamicFeatures);
  CHECK(loaded.nil_rep == NilVariant::kTokenNilDef);
  CHECK(loaded.synonym_concat == false);
  CHECK(loaded.k == 5);
  CHECK(loaded.fmes_dim == 7);
}

// Prediction-mode behavior is pinned through a model whose ranking head is
// rigged to produce known normalized scores.
namespace {

// Builds a model/cands pair where predict sees the given normalized scores.
// We bypass encoding subtleties by checking the decision rules on real
// encoder outputs: candidates are distinct entities, so scores differ; the
// tests below instead target the rules directly where exact values matter.
struct Rigged {
  Fixture fx;
  CrossModel model;
  Rigged() : fx(), model(fx.model(3)) {}
};

}  // namespace

TEST_CASE("argmax mode picks NIL when NIL scores highest") {
  Rigged rig;
  // zero head: all scores equal -> tie -> NIL preferred
  rig.model.rank_w.setZero();
  rig.model.rank_b = 0.0;
  const Prediction pred =
      predict(rig.model, rig.fx.data.train.records[0], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kArgmax);
  CHECK(is_nil(pred.predicted));
  double sum = 0.0;
  for (const Candidate& c : pred.candidate_scores) sum += c.score;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("threshold boundaries: 0 never predicts NIL, 1 always does") {
  Rigged rig;
  PredictOptions opts;
  for (const MentionRecord& rec :
       {rig.fx.data.train.records[0], rig.fx.data.train.records[1]}) {
    opts.th_cross = 0.0;
    const Prediction at0 = predict(rig.model, rec, rig.fx.cands(3),
                                   rig.fx.data.ontology, rig.fx.vocab,
                                   PredictMode::kThreshold, opts);
    CHECK_FALSE(is_nil(at0.predicted));
    opts.th_cross = 1.0;
    const Prediction at1 = predict(rig.model, rec, rig.fx.cands(3),
                                   rig.fx.data.ontology, rig.fx.vocab,
                                   PredictMode::kThreshold, opts);
    CHECK(is_nil(at1.predicted));
  }
}

TEST_CASE("threshold mode rejects confident-enough non-NIL candidates") {
  // normalized scores {A: 0.94ish, NIL: rest} with Th = 0.95 -> NIL
  Rigged rig;
  PredictOptions opts;
  opts.th_cross = 0.95;
  // rig a strong but sub-threshold preference for the first candidate:
  // softmax([s, 0, 0]) with s = ln(0.94 * 2 / 0.06) gives ~0.94
  // Easier check through the rule itself: sweep the threshold across the
  // realized max score and watch the decision flip.
  const Prediction base =
      predict(rig.model, rig.fx.data.train.records[2], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kArgmax);
  double best_non_nil = 0.0;
  for (const Candidate& c : base.candidate_scores) {
    if (!is_nil(c.id)) best_non_nil = std::max(best_non_nil, c.score);
  }
  opts.th_cross = best_non_nil + 1e-9;
  const Prediction above =
      predict(rig.model, rig.fx.data.train.records[2], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kThreshold, opts);
  CHECK(is_nil(above.predicted));
  opts.th_cross = best_non_nil - 1e-9;
  const Prediction below =
      predict(rig.model, rig.fx.data.train.records[2], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kThreshold, opts);
  CHECK_FALSE(is_nil(below.predicted));
}

TEST_CASE("nil_head mode follows the head probability") {
  Rigged rig;
  rig.model.trained_head = NilHead::kSigmoid;
  // bias dominates: sigmoid(b) with w = 0
  rig.model.nil_w.setZero();
  rig.model.nil_b = 2.0123;  // sigmoid = 0.882
  const Prediction nil_pred =
      predict(rig.model, rig.fx.data.train.records[0], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kNilHead);
  REQUIRE(nil_pred.is_nil_prob.has_value());
  CHECK(*nil_pred.is_nil_prob == doctest::Approx(0.882).epsilon(1e-3));
  CHECK(is_nil(nil_pred.predicted));

  rig.model.nil_b = -2.0;
  const Prediction in_kb =
      predict(rig.model, rig.fx.data.train.records[0], rig.fx.cands(3),
              rig.fx.data.ontology, rig.fx.vocab, PredictMode::kNilHead);
  CHECK_FALSE(is_nil(in_kb.predicted));
}

TEST_CASE("predictions save/load round-trips") {
  std::vector<Prediction> preds(2);
  preds[0].mention_index = 0;
  preds[0].predicted = "E001";
  preds[0].score = 0.75;
  preds[1].mention_index = 1;
  preds[1].predicted = kNilLabel;
  preds[1].score = 0.5;
  preds[1].is_nil_prob = 0.882;
  const auto path = std::filesystem::temp_directory_path() / "preds_rt.jsonl";
  save_predictions(preds, path);
  const std::vector<Prediction> loaded = load_predictions(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].predicted == "E001");
  CHECK_FALSE(loaded[0].is_nil_prob.has_value());
  CHECK(loaded[1].is_nil_prob == doctest::Approx(0.882));
  CHECK(is_nil(loaded[1].predicted));
}
