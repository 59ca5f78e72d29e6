#ifndef NILEL_BIENCODER_HPP
#define NILEL_BIENCODER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nilel/corpus.hpp"
#include "nilel/neural.hpp"
#include "nilel/ontology.hpp"
#include "nilel/textproc.hpp"

namespace nilel {

// One retrievable row: an entity name, one of its synonyms (with synonym
// augmentation on), or the single NIL row. `entity_id` is kNilLabel for the
// NIL row.
struct IndexRow {
  std::string entity_id;
  std::string variant;  // "NAME", "SYN:<i>", or "NIL"
};

struct EntityIndex {
  int dim = 0;
  std::vector<IndexRow> rows;
  Eigen::MatrixXd vectors;  // rows.size() x dim

  // Raw dot-product score of the NIL row for a mention vector.
  double nil_score(const Eigen::VectorXd& mention_vec) const;

  void save(const std::filesystem::path& path) const;
  static EntityIndex load(const std::filesystem::path& path);
};

// Encodes every entity name (and each synonym when augmentation is on,
// rendered with the synonym in the name slot) plus the NIL template.
EntityIndex build_index(const EncoderModel& entity_encoder, const Ontology& onto,
                        NilVariant nil_rep, bool synonym_augmentation,
                        const Vocabulary& vocab, int entity_max_len);

struct Candidate {
  std::string id;  // entity id or kNilLabel
  double score = 0.0;
};

struct CandidateSet {
  int mention_index = 0;
  std::vector<Candidate> items;

  bool contains(const std::string& id) const;
};

// Scores every index row by dot product, aggregates rows of the same entity
// by max, and returns the k best unique entities in descending score order
// (ties to the lexicographically smaller id). The NIL row competes like any
// other; when fewer than k unique ids exist, all of them are returned.
CandidateSet retrieve_topk(const Eigen::VectorXd& mention_vec,
                           const EntityIndex& index, int k);

// Aggregated (max over rows) score of one entity; kNilLabel scores the NIL
// row. Returns -inf for an unknown id.
double score_entity(const Eigen::VectorXd& mention_vec, const EntityIndex& index,
                    const std::string& id);

// Guarantees NIL membership: if absent, the last candidate is replaced by
// NIL carrying `nil_raw_score`. A set still short of k (possible when the
// ontology has fewer unique ids than k) gets NIL appended instead.
// Idempotent.
CandidateSet insert_nil(CandidateSet cands, double nil_raw_score, int k = 0);

// sum_j max(alpha - score_gold + scores_neg[j], 0)
double triplet_loss(double score_gold, const std::vector<double>& scores_neg,
                    double alpha = 0.2);

// In-batch max-margin loss over aligned (mention, gold entity) inputs,
// averaged over the batch; every other entity in the batch serves as a
// negative. Accumulates analytic gradients for both towers.
double triplet_batch_loss_and_grad(const EncoderModel& mention_encoder,
                                   const EncoderModel& entity_encoder,
                                   const std::vector<TokenizedInput>& mentions,
                                   const std::vector<TokenizedInput>& entities,
                                   double alpha, EncoderGrads& d_mention,
                                   EncoderGrads& d_entity);

struct BiencoderConfig {
  EncoderConfig encoder;  // vocab_size filled from the vocabulary
  int mention_max = 32;
  int entity_max = 128;
  int epochs = 3;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double alpha = 0.2;
  bool synonym_augmentation = true;
  // Fine-tuned NIL: gold-NIL mentions train against the NIL template and the
  // [NIL] embedding learns. Fixed: those mentions are skipped and the row is
  // frozen.
  bool nil_fine_tuned = true;
  NilVariant nil_rep = NilVariant::kToken;
  std::uint64_t seed = 42;
};

struct BiencoderModels {
  EncoderModel mention_encoder;
  EncoderModel entity_encoder;
};

// Trains both towers with in-batch negatives. Throws ValidationError when a
// record's gold id is neither NIL nor in the ontology.
BiencoderModels train_biencoder(const DatasetSplit& train, const Ontology& onto,
                                const Vocabulary& vocab,
                                const BiencoderConfig& config);

// Encode + retrieve + insert_nil for every record of a split.
std::vector<CandidateSet> retrieve_candidates(const EncoderModel& mention_encoder,
                                              const EntityIndex& index,
                                              const DatasetSplit& split,
                                              const Vocabulary& vocab, int k,
                                              int mention_max);

}  // namespace nilel

#endif  // NILEL_BIENCODER_HPP
