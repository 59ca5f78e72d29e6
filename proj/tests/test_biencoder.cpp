#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <set>

#include "nilel/biencoder.hpp"
#include "nilel/errors.hpp"
#include "nilel/rng.hpp"
#include "nilel/synth.hpp"

using namespace nilel;

namespace {

// Random row table, no encoder involved: retrieval rules are geometry-only.
EntityIndex random_index(Rng& rng, int n_entities, int dim, bool synonyms) {
  EntityIndex index;
  index.dim = dim;
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < n_entities; ++i) {
    const std::string id = "E" + std::to_string(100 + i);
    const int variants = synonyms ? 1 + static_cast<int>(rng.below(3)) : 1;
    for (int v = 0; v < variants; ++v) {
      index.rows.push_back({id, v == 0 ? "NAME" : "SYN:" + std::to_string(v - 1)});
      Eigen::VectorXd vec(dim);
      for (int d = 0; d < dim; ++d) vec(d) = rng.normal();
      rows.push_back(vec);
    }
  }
  index.rows.push_back({kNilLabel, "NIL"});
  Eigen::VectorXd nil_vec(dim);
  for (int d = 0; d < dim; ++d) nil_vec(d) = rng.normal();
  rows.push_back(nil_vec);
  index.vectors.resize(static_cast<long>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    index.vectors.row(static_cast<long>(r)) = rows[r].transpose();
  }
  return index;
}

// Exhaustive-scan oracle: per-entity max over rows, full sort, top k.
std::vector<Candidate> oracle_topk(const Eigen::VectorXd& q,
                                   const EntityIndex& index, int k) {
  std::map<std::string, double> best;
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    const double s = index.vectors.row(static_cast<long>(r)).dot(q);
    auto it = best.find(index.rows[r].entity_id);
    if (it == best.end() || s > it->second) best[index.rows[r].entity_id] = s;
  }
  std::vector<Candidate> all;
  for (const auto& [id, s] : best) all.push_back({id, s});
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
  return all;
}

}  // namespace

TEST_CASE("triplet_loss term by term") {
  CHECK(triplet_loss(1.0, {0.5}, 0.2) == doctest::Approx(0.0));
  CHECK(triplet_loss(0.3, {0.4}, 0.2) == doctest::Approx(0.3));
  CHECK(triplet_loss(0.3, {0.4, 0.1}, 0.2) == doctest::Approx(0.3));
  CHECK(triplet_loss(0.0, {}, 0.2) == doctest::Approx(0.0));
}

TEST_CASE("retrieval matches the exhaustive-scan oracle") {
  Rng rng(31);
  const EntityIndex index = random_index(rng, 50, 6, true);
  for (int round = 0; round < 20; ++round) {
    Eigen::VectorXd q(6);
    for (int d = 0; d < 6; ++d) q(d) = rng.normal();
    const CandidateSet got = retrieve_topk(q, index, 5);
    const std::vector<Candidate> want = oracle_topk(q, index, 5);
    REQUIRE(got.items.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.items[i].id == want[i].id);
      CHECK(got.items[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("entity score aggregates rows by max") {
  EntityIndex index;
  index.dim = 2;
  index.rows = {{"E1", "NAME"}, {"E1", "SYN:0"}, {kNilLabel, "NIL"}};
  index.vectors.resize(3, 2);
  index.vectors << 0.7, 0.0,   // name row scores 0.7 against q
                   0.9, 0.0,   // synonym row scores 0.9
                   -1.0, 0.0;
  const Eigen::Vector2d q(1.0, 0.0);
  const CandidateSet cands = retrieve_topk(q, index, 2);
  CHECK(cands.items[0].id == "E1");
  CHECK(cands.items[0].score == doctest::Approx(0.9));
  CHECK(score_entity(q, index, "E1") == doctest::Approx(0.9));
}

TEST_CASE("NIL row competes like any entity") {
  EntityIndex index;
  index.dim = 1;
  index.rows = {{"E1", "NAME"}, {kNilLabel, "NIL"}};
  index.vectors.resize(2, 1);
  index.vectors << 0.3, 0.8;
  Eigen::VectorXd q(1);
  q << 1.0;
  const CandidateSet top1 = retrieve_topk(q, index, 1);
  REQUIRE(top1.items.size() == 1);
  CHECK(is_nil(top1.items[0].id));
}

TEST_CASE("ties break toward the smaller id") {
  EntityIndex index;
  index.dim = 1;
  index.rows = {{"E9", "NAME"}, {"E2", "NAME"}, {kNilLabel, "NIL"}};
  index.vectors.resize(3, 1);
  index.vectors << 0.5, 0.5, -1.0;
  Eigen::VectorXd q(1);
  q << 1.0;
  const CandidateSet cands = retrieve_topk(q, index, 1);
  CHECK(cands.items[0].id == "E2");
}

TEST_CASE("k beyond the unique ids returns everything") {
  Rng rng(33);
  const EntityIndex index = random_index(rng, 4, 3, true);
  Eigen::VectorXd q(3);
  for (int d = 0; d < 3; ++d) q(d) = rng.normal();
  const CandidateSet cands = retrieve_topk(q, index, 50);
  CHECK(cands.items.size() == 5);  // 4 entities + NIL
}

TEST_CASE("insert_nil replaces the last candidate and is idempotent") {
  CandidateSet cands;
  cands.items = {{"A", 0.9}, {"B", 0.8}, {"C", 0.7}};
  const CandidateSet with_nil = insert_nil(cands, 0.1);
  REQUIRE(with_nil.items.size() == 3);
  CHECK(with_nil.items[0].id == "A");
  CHECK(with_nil.items[1].id == "B");
  CHECK(is_nil(with_nil.items[2].id));
  CHECK(with_nil.items[2].score == doctest::Approx(0.1));

  const CandidateSet again = insert_nil(with_nil, -5.0);
  CHECK(again.items[2].score == doctest::Approx(0.1));  // unchanged

  CandidateSet has_nil;
  has_nil.items = {{"A", 0.9}, {kNilLabel, 0.8}, {"C", 0.7}};
  const CandidateSet untouched = insert_nil(has_nil, 0.0);
  CHECK(untouched.items[1].id == kNilLabel);
  CHECK(untouched.items[2].id == "C");

  CandidateSet single;
  single.items = {{"A", 0.9}};
  const CandidateSet k1 = insert_nil(single, 0.2);
  REQUIRE(k1.items.size() == 1);
  CHECK(is_nil(k1.items[0].id));

  long nil_count = 0;
  for (const Candidate& c : with_nil.items) {
    if (is_nil(c.id)) ++nil_count;
  }
  CHECK(nil_count == 1);
}

TEST_CASE("index save/load round-trips") {
  Rng rng(35);
  const EntityIndex index = random_index(rng, 10, 4, true);
  const auto path = std::filesystem::temp_directory_path() / "index_rt.bin";
  index.save(path);
  const EntityIndex loaded = EntityIndex::load(path);
  REQUIRE(loaded.rows.size() == index.rows.size());
  CHECK(loaded.dim == index.dim);
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    CHECK(loaded.rows[r].entity_id == index.rows[r].entity_id);
    CHECK(loaded.rows[r].variant == index.rows[r].variant);
  }
  CHECK(loaded.vectors == index.vectors);
}

namespace {

SynthData tiny_benchmark(int entities, int mentions, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_entities = entities;
  sc.n_mentions = mentions;
  sc.seed = seed;
  return generate_synthetic(sc);
}

BiencoderConfig tiny_bi_config(int epochs = 2) {
  BiencoderConfig bc;
  bc.encoder.embed_dim = 16;
  bc.encoder.layers = 1;
  bc.encoder.heads = 2;
  bc.encoder.ffn_dim = 24;
  bc.mention_max = 16;
  bc.entity_max = 24;
  bc.epochs = epochs;
  bc.batch_size = 16;
  bc.lr = 3e-3;
  bc.seed = 17;
  return bc;
}

Vocabulary benchmark_vocab(const SynthData& data) {
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
  return build_vocab(texts, 1);
}

}  // namespace

TEST_CASE("zero-epoch training returns the initialization") {
  const SynthData data = tiny_benchmark(10, 40, 3);
  const Vocabulary vocab = benchmark_vocab(data);
  BiencoderConfig bc = tiny_bi_config(0);
  const BiencoderModels models = train_biencoder(data.train, data.ontology, vocab, bc);

  EncoderConfig expect_cfg = bc.encoder;
  expect_cfg.vocab_size = vocab.size();
  expect_cfg.max_len = bc.mention_max;
  expect_cfg.seed = bc.seed;
  EncoderModel fresh = init_encoder(expect_cfg);
  CHECK(fresh.token_embedding == models.mention_encoder.token_embedding);
  CHECK(fresh.layers[0].wq == models.mention_encoder.layers[0].wq);
}

TEST_CASE("training rejects golds outside the ontology") {
  SynthData data = tiny_benchmark(10, 30, 4);
  data.train.records[0].gold = "E999x";
  const Vocabulary vocab = benchmark_vocab(data);
  CHECK_THROWS_AS(train_biencoder(data.train, data.ontology, vocab, tiny_bi_config()),
                  ValidationError);
}

TEST_CASE("same seed twice gives identical checkpoints") {
  const SynthData data = tiny_benchmark(12, 60, 5);
  const Vocabulary vocab = benchmark_vocab(data);
  BiencoderConfig bc = tiny_bi_config(1);
  BiencoderModels a = train_biencoder(data.train, data.ontology, vocab, bc);
  BiencoderModels b = train_biencoder(data.train, data.ontology, vocab, bc);
  const auto ra = param_refs(a.entity_encoder, nullptr);
  const auto rb = param_refs(b.entity_encoder, nullptr);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(std::memcmp(ra[i].value, rb[i].value,
                      static_cast<std::size_t>(ra[i].size()) * sizeof(double)) == 0);
  }
}

TEST_CASE("augmentation changes scores but never the scored id set") {
  const SynthData data = tiny_benchmark(15, 50, 6);
  const Vocabulary vocab = benchmark_vocab(data);
  BiencoderConfig bc = tiny_bi_config(0);
  const BiencoderModels models = train_biencoder(data.train, data.ontology, vocab, bc);

  const EntityIndex with_syn = build_index(models.entity_encoder, data.ontology,
                                           NilVariant::kToken, true, vocab, 24);
  const EntityIndex without = build_index(models.entity_encoder, data.ontology,
                                          NilVariant::kToken, false, vocab, 24);
  CHECK(with_syn.rows.size() > without.rows.size());

  Rng rng(7);
  Eigen::VectorXd q(16);
  for (int d = 0; d < 16; ++d) q(d) = rng.normal();
  const CandidateSet a = retrieve_topk(q, with_syn, 100);
  const CandidateSet b = retrieve_topk(q, without, 100);
  std::set<std::string> ids_a, ids_b;
  for (const Candidate& c : a.items) ids_a.insert(c.id);
  for (const Candidate& c : b.items) ids_b.insert(c.id);
  CHECK(ids_a == ids_b);
}

TEST_CASE("separable toy task reaches recall@1 >= 0.9") {
  // 10 entities whose names are unique keywords; mentions repeat the keyword.
  const SynthData data = tiny_benchmark(10, 80, 8);
  const Vocabulary vocab = benchmark_vocab(data);
  BiencoderConfig bc = tiny_bi_config(40);
  bc.lr = 1e-2;
  const BiencoderModels models = train_biencoder(data.train, data.ontology, vocab, bc);
  const EntityIndex index = build_index(models.entity_encoder, data.ontology,
                                        NilVariant::kToken, true, vocab, bc.entity_max);

  // Raw retrieval accuracy: top-1 before the mechanical NIL insertion.
  long hits = 0;
  for (const MentionRecord& rec : data.train.records) {
    const Eigen::VectorXd q =
        encode(models.mention_encoder, mention_input(rec, vocab, bc.mention_max));
    const CandidateSet top1 = retrieve_topk(q, index, 1);
    if (!top1.items.empty() && top1.items[0].id == rec.gold) ++hits;
  }
  const double recall1 =
      static_cast<double>(hits) / static_cast<double>(data.train.records.size());
  CHECK(recall1 >= 0.9);
}

TEST_CASE("retrieve_candidates always includes NIL exactly once") {
  const SynthData data = tiny_benchmark(8, 30, 9);
  const Vocabulary vocab = benchmark_vocab(data);
  const BiencoderModels models =
      train_biencoder(data.train, data.ontology, vocab, tiny_bi_config(0));
  const EntityIndex index = build_index(models.entity_encoder, data.ontology,
                                        NilVariant::kToken, true, vocab, 24);
  for (const CandidateSet& cs :
       retrieve_candidates(models.mention_encoder, index, data.train, vocab, 4, 16)) {
    long nils = 0;
    for (const Candidate& c : cs.items) {
      if (is_nil(c.id)) ++nils;
    }
    CHECK(nils == 1);
  }
}
