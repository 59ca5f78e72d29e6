#include "nilel/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "nilel/errors.hpp"

namespace nilel {

namespace {

double safe_div(long num, long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

EvalReport evaluate(const std::vector<Prediction>& preds,
                    const std::vector<std::string>& golds) {
  if (preds.size() != golds.size()) {
    throw ValidationError("predictions and golds differ in length");
  }
  EvalReport r;
  r.total = static_cast<long>(golds.size());
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool gold_nil = is_nil(golds[i]);
    const bool pred_nil = is_nil(preds[i].predicted);
    if (pred_nil && gold_nil) {
      ++r.tp_o;
    } else if (pred_nil && !gold_nil) {
      ++r.fp_o;
      ++r.fn_in;
    } else if (!pred_nil && gold_nil) {
      ++r.fn_o;
      ++r.fp_in;
    } else if (preds[i].predicted == golds[i]) {
      ++r.tp_in;
    } else {
      ++r.fp_in;
      ++r.fn_in;
    }
  }
  r.p_o = safe_div(r.tp_o, r.tp_o + r.fp_o);
  r.r_o = safe_div(r.tp_o, r.tp_o + r.fn_o);
  r.f1_o = f1(r.p_o, r.r_o);
  r.p_in = safe_div(r.tp_in, r.tp_in + r.fp_in);
  r.r_in = safe_div(r.tp_in, r.tp_in + r.fn_in);
  r.f1_in = f1(r.p_in, r.r_in);
  r.accuracy = safe_div(r.tp_o + r.tp_in, r.total);
  return r;
}

std::map<int, double> recall_at_k(const std::vector<CandidateSet>& cand_sets,
                                  const std::vector<std::string>& golds) {
  if (cand_sets.size() != golds.size()) {
    throw ValidationError("candidate sets and golds differ in length");
  }
  int max_k = 0;
  for (const CandidateSet& cs : cand_sets) {
    max_k = std::max(max_k, static_cast<int>(cs.items.size()));
  }
  std::map<int, double> recall;
  if (golds.empty()) return recall;
  for (int k = 1; k <= max_k; ++k) {
    long hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const auto& items = cand_sets[i].items;
      const auto limit =
          std::min<std::size_t>(items.size(), static_cast<std::size_t>(k));
      for (std::size_t j = 0; j < limit; ++j) {
        if (items[j].id == golds[i]) {
          ++hits;
          break;
        }
      }
    }
    recall[k] = static_cast<double>(hits) / static_cast<double>(golds.size());
  }
  return recall;
}

std::string render_report_text(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::setw(8) << "A" << std::setw(8) << "P_o" << std::setw(8) << "R_o"
      << std::setw(8) << "F1_o" << std::setw(8) << "P_in" << std::setw(8)
      << "R_in" << std::setw(8) << "F1_in" << "\n";
  out << std::setw(8) << r.accuracy << std::setw(8) << r.p_o << std::setw(8)
      << r.r_o << std::setw(8) << r.f1_o << std::setw(8) << r.p_in
      << std::setw(8) << r.r_in << std::setw(8) << r.f1_in << "\n";
  out << "counts: TP_o=" << r.tp_o << " FP_o=" << r.fp_o << " FN_o=" << r.fn_o
      << " TP_in=" << r.tp_in << " FP_in=" << r.fp_in << " FN_in=" << r.fn_in
      << " total=" << r.total << "\n";
  return out.str();
}

nlohmann::json report_to_json(const EvalReport& r) {
  return nlohmann::json{
      {"A", r.accuracy},   {"P_o", r.p_o},     {"R_o", r.r_o},
      {"F1_o", r.f1_o},    {"P_in", r.p_in},   {"R_in", r.r_in},
      {"F1_in", r.f1_in},  {"TP_o", r.tp_o},   {"FP_o", r.fp_o},
      {"FN_o", r.fn_o},    {"TP_in", r.tp_in}, {"FP_in", r.fp_in},
      {"FN_in", r.fn_in},  {"total", r.total}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.accuracy = j.at("A").get<double>();
  r.p_o = j.at("P_o").get<double>();
  r.r_o = j.at("R_o").get<double>();
  r.f1_o = j.at("F1_o").get<double>();
  r.p_in = j.at("P_in").get<double>();
  r.r_in = j.at("R_in").get<double>();
  r.f1_in = j.at("F1_in").get<double>();
  r.tp_o = j.at("TP_o").get<long>();
  r.fp_o = j.at("FP_o").get<long>();
  r.fn_o = j.at("FN_o").get<long>();
  r.tp_in = j.at("TP_in").get<long>();
  r.fp_in = j.at("FP_in").get<long>();
  r.fn_in = j.at("FN_in").get<long>();
  r.total = j.at("total").get<long>();
  return r;
}

}  // namespace nilel
