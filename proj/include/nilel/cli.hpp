#ifndef NILEL_CLI_HPP
#define NILEL_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace nilel {

// Everything a pipeline stage can be told. Method-specific requirements are
// validated before any work starts. Defaults follow the documented
// experiment setup: k=10, alpha=0.2, lambda_nil=0.25, bi batch 32, cross
// batch 1, 3/4 epochs, 32/128 token budgets.
struct RunConfig {
  // inputs and artifacts
  std::string ontology, old_ontology, merges;
  std::string train, valid, test, split;
  std::string word_vectors;
  std::string mention_encoder, entity_encoder, index, cross, vocab;
  std::string predictions, gold, manifest;
  std::string out = "out";

  // method roster: blinkout, blinkout_joint, th_blink, nilrep_blink, sieve,
  // bm25_cross_th, ft_classifier, ft_blinkout
  std::string method = "blinkout";
  int k = 10;
  std::string k_grid = "5,10,20,50,100,150,200";
  std::string nil_rep = "[nil]";
  std::string nil_fine_tuned = "auto";  // auto | true | false
  std::string cands = "auto";           // auto | bi | bm25
  double fraction = 0.2;
  double th_cross = 0.5;
  double lambda_nil = 0.25;
  double alpha = 0.2;
  bool syn_augmentation = true;  // bi-encoder synonym rows
  bool syn_concat = true;        // cross-encoder [SYN] concatenation

  // encoder and training
  int embed_dim = 64;
  int layers = 2;
  int heads = 2;
  int ffn_dim = 128;
  int mention_max = 32;
  int entity_max = 128;
  int min_count = 1;
  int bi_epochs = 3;
  int cross_epochs = 4;
  int bi_batch = 32;
  double bi_lr = 1e-3;    // toy default; 3e-5 is the documented value for
  double cross_lr = 1e-3; // pretrained full-size encoders
  double weight_decay = 0.01;

  // word vectors and the feature classifier
  int wv_dim = 16;
  double ft_lr = 0.5;
  int ft_iters = 2000;
  int ctxt_window = 32;

  // synthetic data generation
  int entities = 200;
  int mentions = 1500;

  std::uint64_t seed = 42;
};

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

// Executes one subcommand. Partial outputs are removed when the command
// throws. Used directly by `replay`.
void run_command(const std::string& command, const RunConfig& cfg,
                 std::ostream& log);

// Full argv-level entry: parses flags and an optional `key = value` config
// file (flags win), dispatches, and maps errors to exit codes 0 (ok),
// 1 (usage), 2 (validation), 3 (runtime).
int cli_main(const std::vector<std::string>& args);

}  // namespace nilel

#endif  // NILEL_CLI_HPP
