#ifndef NILEL_METRICS_HPP
#define NILEL_METRICS_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilel/biencoder.hpp"
#include "nilel/crossencoder.hpp"

namespace nilel {

// Out-of-KB / in-KB confusion counts and derived scores. Counting rules:
//   pred NIL,   gold NIL        -> TP_o
//   pred NIL,   gold in-KB      -> FP_o and FN_in
//   pred in-KB, gold NIL        -> FN_o and FP_in
//   pred == gold entity         -> TP_in
//   pred in-KB, wrong entity    -> FP_in and FN_in
// A zero denominator makes the corresponding P or R equal 0, as does an
// all-zero F1.
struct EvalReport {
  long tp_o = 0, fp_o = 0, fn_o = 0;
  long tp_in = 0, fp_in = 0, fn_in = 0;
  long total = 0;
  double p_o = 0, r_o = 0, f1_o = 0;
  double p_in = 0, r_in = 0, f1_in = 0;
  double accuracy = 0;  // (TP_o + TP_in) / total
};

// golds[i] is an entity id or kNilLabel, aligned with preds by index.
// Throws ValidationError on a length mismatch.
EvalReport evaluate(const std::vector<Prediction>& preds,
                    const std::vector<std::string>& golds);

// recall@k' for every k' up to the largest candidate set: the fraction of
// mentions whose gold label (entity or NIL) sits within the first k'
// candidates.
std::map<int, double> recall_at_k(const std::vector<CandidateSet>& cand_sets,
                                  const std::vector<std::string>& golds);

// Aligned table in the column order A, P_o, R_o, F1_o, P_in, R_in, F1_in.
std::string render_report_text(const EvalReport& report);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace nilel

#endif  // NILEL_METRICS_HPP
