#ifndef NILEL_NEURAL_HPP
#define NILEL_NEURAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nilel/textproc.hpp"

namespace nilel {

struct EncoderConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int layers = 2;
  int heads = 2;
  int ffn_dim = 128;
  int max_len = 32;
  std::uint64_t seed = 0;

  void validate() const;  // embed_dim divisible by heads, all dims >= 1
};

// One pre-layer-norm transformer block: x += attn(LN1(x)); x += ffn(LN2(x)).
// The same struct doubles as gradient storage.
struct LayerWeights {
  Eigen::MatrixXd wq, wk, wv, wo;  // embed_dim x embed_dim
  Eigen::VectorXd bq, bk, bv, bo;
  Eigen::VectorXd ln1_g, ln1_b, ln2_g, ln2_b;
  Eigen::MatrixXd w1;  // embed_dim x ffn_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // ffn_dim x embed_dim
  Eigen::VectorXd b2;
};

// Micro BERT-style sequence encoder, f64 throughout. The reduction red(.)
// is the final-layer representation at position 0, the [CLS] slot.
struct EncoderModel {
  EncoderConfig config;
  Eigen::MatrixXd token_embedding;     // vocab_size x embed_dim
  Eigen::MatrixXd position_embedding;  // max_len x embed_dim
  std::vector<LayerWeights> layers;
  Eigen::VectorXd final_ln_g, final_ln_b;

  // Optimizer-level freeze flags, per parameter group. frozen_token_rows
  // pins individual embedding rows (the fixed-[NIL] setting).
  bool freeze_token_embedding = false;
  bool freeze_position_embedding = false;
  bool freeze_layers = false;
  bool freeze_final_norm = false;
  std::vector<int> frozen_token_rows;
};

// Deterministic N(0, 0.02) weights / zero biases / unit layer norms, drawn
// in a fixed order from mt19937_64(config.seed).
EncoderModel init_encoder(const EncoderConfig& config);

struct EncoderGrads {
  Eigen::MatrixXd token_embedding, position_embedding;
  std::vector<LayerWeights> layers;
  Eigen::VectorXd final_ln_g, final_ln_b;

  void set_zero();
};

EncoderGrads make_grads(const EncoderModel& model);

// Intermediate activations kept for the backward pass.
struct LayerCache {
  Eigen::MatrixXd x_in, h1, xhat1;
  Eigen::VectorXd invstd1;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> attn;  // per head, seq_len x seq_len
  Eigen::MatrixXd ctx;
  Eigen::MatrixXd x_mid, h2, xhat2;
  Eigen::VectorXd invstd2;
  Eigen::MatrixXd ffn_pre, ffn_act;
};

struct ForwardCache {
  std::vector<int> ids, mask;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd x_final, xhat_final;
  Eigen::VectorXd invstd_final;
};

// red(encoder(input)): deterministic embed_dim vector. Pad positions are
// excluded from attention through the mask, so their token ids never
// influence the result. Throws ValidationError on out-of-range ids.
Eigen::VectorXd encode(const EncoderModel& model, const TokenizedInput& input);
Eigen::VectorXd encode(const EncoderModel& model, const TokenizedInput& input,
                       ForwardCache& cache);

// Reverse pass from an upstream gradient on the [CLS] output; accumulates
// into `grads`.
void backward_from_cls(const EncoderModel& model, const ForwardCache& cache,
                       const Eigen::VectorXd& d_cls, EncoderGrads& grads);

// Flat named view over a tensor, shared by the optimizer, the checkpoint
// container, and the finite-difference checker. Matrices are exposed
// row-major regardless of Eigen's storage order.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;  // may be null when only values are needed
  long rows = 0, cols = 0;
  bool frozen = false;
  const std::vector<int>* frozen_rows = nullptr;  // row indices to skip

  long size() const { return rows * cols; }
};

std::vector<ParamRef> param_refs(EncoderModel& model, EncoderGrads* grads,
                                 const std::string& prefix = "");

// Decoupled-weight-decay Adam. Skips frozen groups and frozen embedding
// rows entirely (no moment update, no decay).
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long step_count = 0;

  void step(const std::vector<ParamRef>& params);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::unordered_map<std::string, Moments> state_;
};

// Central finite differences against the analytic gradients stored in the
// refs. Samples up to n_samples parameters (all of them when the model is
// small enough) and returns the max relative error
//   |g - g_fd| / max(|g|, |g_fd|, 1e-6).
// `loss_fn` must recompute the loss from the current parameter values.
double grad_check(const std::vector<ParamRef>& params,
                  const std::function<double()>& loss_fn, int n_samples = 200,
                  double fd_step = 1e-5, std::uint64_t seed = 0);

}  // namespace nilel

#endif  // NILEL_NEURAL_HPP
