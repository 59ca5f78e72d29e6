#ifndef NILEL_CORPUS_HPP
#define NILEL_CORPUS_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "nilel/ontology.hpp"

namespace nilel {

// Distinguished gold label for mentions with no KB entity.
inline const std::string kNilLabel = "NIL";

inline bool is_nil(const std::string& label) { return label == kNilLabel; }

// A mention in context. `gold` is an entity id or kNilLabel; existence of
// the id is only checked against an ontology at relabel/eval time.
struct MentionRecord {
  std::string doc_id;
  std::string mention;
  std::string ctxt_l;
  std::string ctxt_r;
  std::string gold;
};

struct DatasetSplit {
  std::string name;  // train, valid, or test
  std::vector<MentionRecord> records;  // stable file order
};

// Reads UTF-8 JSONL:
//   {"doc_id": str, "mention": str, "ctxt_l": str, "ctxt_r": str, "gold": str}
// Throws ParseError with a line number on malformed lines or missing fields,
// ValidationError on an empty mention.
DatasetSplit load_mentions(const std::filesystem::path& path,
                           const std::string& split_name);

void save_mentions(const DatasetSplit& split, const std::filesystem::path& path);

// Gold ids absent from `target` become NIL; everything else is untouched.
// Idempotent.
DatasetSplit relabel_nil(const DatasetSplit& split, const Ontology& target);

struct SplitStats {
  std::string name;
  long n_mentions = 0;
  long n_out_of_kb = 0;
  long n_in_kb = 0;
  double pct_out_of_kb = 0.0;  // 0 for an empty split
};

struct StatsTable {
  std::vector<SplitStats> splits;
  long n_entities = 0;
  long n_entities_plus_synonyms = 0;
};

StatsTable split_stats(const std::vector<DatasetSplit>& splits,
                       const Ontology& onto);

std::string render_stats_text(const StatsTable& table);

}  // namespace nilel

#endif  // NILEL_CORPUS_HPP
