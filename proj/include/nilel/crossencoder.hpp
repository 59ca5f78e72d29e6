#ifndef NILEL_CROSSENCODER_HPP
#define NILEL_CROSSENCODER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nilel/biencoder.hpp"
#include "nilel/corpus.hpp"
#include "nilel/neural.hpp"
#include "nilel/ontology.hpp"
#include "nilel/textproc.hpp"

namespace nilel {

// Which auxiliary NIL classifier is attached to the ranking model.
//   kSigmoid:          sigmoid(v_m . w) on the mention representation
//   kDynamicFeatures:  sigmoid over [scores+pooling, string features, v_m]
enum class NilHead { kNone, kSigmoid, kDynamicFeatures };

// Shared sequence encoder with a scalar ranking head; optional NIL heads.
// The template settings travel with the model so prediction rebuilds the
// exact training-time inputs.
struct CrossModel {
  EncoderModel encoder;
  Eigen::VectorXd rank_w;
  double rank_b = 0.0;
  Eigen::VectorXd nil_w;
  double nil_b = 0.0;
  Eigen::VectorXd ft_w;  // size k + 3 + fmes_dim + embed_dim when trained
  double ft_b = 0.0;
  double lambda_nil = 0.25;
  NilHead trained_head = NilHead::kNone;
  int k = 0;         // dynamic-feature layout, fixed at training time
  int fmes_dim = 0;
  NilVariant nil_rep = NilVariant::kToken;
  bool synonym_concat = true;
  int mention_max = 32;
  int entity_max = 128;
  bool freeze_heads = false;
};

struct CrossGrads {
  EncoderGrads encoder;
  Eigen::VectorXd rank_w;
  double rank_b = 0.0;
  Eigen::VectorXd nil_w;
  double nil_b = 0.0;
  Eigen::VectorXd ft_w;
  double ft_b = 0.0;

  void set_zero();
};

CrossModel init_cross_model(const EncoderConfig& encoder_config, int k,
                            int fmes_dim, std::uint64_t seed);
CrossGrads make_grads(const CrossModel& model);
std::vector<ParamRef> param_refs(CrossModel& model, CrossGrads* grads);

void save_cross_model(const CrossModel& model, const std::filesystem::path& path);
CrossModel load_cross_model(const std::filesystem::path& path);

// -log softmax(scores)[gold_index]; numerically stable.
double ce_loss(const std::vector<double>& scores, int gold_index);

// -(y log s + (1-y) log(1-s)), s clamped away from {0,1} by 1e-12.
double nil_bce_loss(double s, int y);

// ce + lambda * bce
double joint_loss(double ce, double bce, double lambda_nil);

std::vector<double> softmax(const std::vector<double>& scores);

// scores ++ [min, max, avg]
std::vector<double> pooled_scores(const std::vector<double>& scores);

// What a single training mention contributes to the loss. gold_index -1
// skips the ranking term, leaving only the head term (scaled by lambda).
struct CrossLossSpec {
  int gold_index = -1;
  NilHead head = NilHead::kNone;
  int nil_label = 0;
  double lambda = 0.25;
  const Eigen::VectorXd* fmes = nullptr;  // required for kDynamicFeatures
};

// Full forward + reverse pass for one mention over its candidate set.
// Accumulates analytic gradients; returns the loss. Throws ValidationError
// when the candidate set lacks NIL or the loss turns non-finite.
double cross_loss_and_grad(const CrossModel& model, const MentionRecord& rec,
                           const CandidateSet& cands, const Ontology& onto,
                           const Vocabulary& vocab, const CrossLossSpec& spec,
                           CrossGrads& grads);

struct CrossencoderConfig {
  EncoderConfig encoder;  // vocab_size filled from the vocabulary
  int mention_max = 32;
  int entity_max = 128;
  int epochs = 4;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double lambda_nil = 0.25;
  NilVariant nil_rep = NilVariant::kToken;
  bool synonym_concat = true;
  // Fine-tuned NIL representation: gold-NIL mentions supervise the ranking
  // loss and the [NIL] embedding trains. Fixed: both are off.
  bool nil_fine_tuned = true;
  NilHead head = NilHead::kNone;
  bool freeze_all = false;
  std::uint64_t seed = 42;
  std::ostream* log = nullptr;  // per-epoch gold-miss rate when set
  const std::vector<Eigen::VectorXd>* fmes = nullptr;  // per record, ft head
};

// Batch-size-1 training over per-mention candidate sets (which must contain
// NIL). A gold entity missing from its set is injected in place of the
// lowest-scored non-NIL candidate; the per-epoch miss rate goes to the log.
CrossModel train_crossencoder(const DatasetSplit& train,
                              const std::vector<CandidateSet>& candidates,
                              const Ontology& onto, const Vocabulary& vocab,
                              const CrossencoderConfig& config);

struct Prediction {
  int mention_index = 0;
  std::string predicted;  // entity id or kNilLabel
  double score = 1.0;     // normalized score of the prediction
  std::vector<Candidate> candidate_scores;  // normalized, sums to 1
  std::optional<double> is_nil_prob;
};

enum class PredictMode { kArgmax, kThreshold, kNilHead, kFtHead };

struct PredictOptions {
  double th_cross = 0.5;
  double nil_head_threshold = 0.5;
  const Eigen::VectorXd* fmes = nullptr;  // required for kFtHead
};

// Scores all candidates, softmax-normalizes, then decides:
//   argmax:    best candidate; exact ties prefer NIL, then the smaller id
//   threshold: NIL iff every non-NIL normalized score < th_cross
//   nil_head:  NIL iff sigmoid(v_m . nil_w + nil_b) >= 0.5
//   ft_head:   NIL iff the dynamic-feature score >= 0.5
// Non-NIL fallbacks pick the best non-NIL candidate.
Prediction predict(const CrossModel& model, const MentionRecord& rec,
                   const CandidateSet& cands, const Ontology& onto,
                   const Vocabulary& vocab, PredictMode mode,
                   const PredictOptions& opts = {});

// Predictions file, one JSON object per line:
//   {"i": int, "pred": str, "score": float, "is_nil_prob": float|null}
// Every method writes this same shape.
void save_predictions(const std::vector<Prediction>& preds,
                      const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace nilel

#endif  // NILEL_CROSSENCODER_HPP
