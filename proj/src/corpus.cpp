#include "nilel/corpus.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "nilel/errors.hpp"

namespace nilel {

using nlohmann::json;

DatasetSplit load_mentions(const std::filesystem::path& path,
                           const std::string& split_name) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  DatasetSplit split;
  split.name = split_name;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    MentionRecord rec;
    for (const char* key : {"doc_id", "mention", "ctxt_l", "ctxt_r", "gold"}) {
      if (!obj.contains(key) || !obj[key].is_string()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing field \"" + key + "\"");
      }
    }
    rec.doc_id = obj["doc_id"].get<std::string>();
    rec.mention = obj["mention"].get<std::string>();
    rec.ctxt_l = obj["ctxt_l"].get<std::string>();
    rec.ctxt_r = obj["ctxt_r"].get<std::string>();
    rec.gold = obj["gold"].get<std::string>();
    if (rec.mention.empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": empty mention");
    }
    split.records.push_back(std::move(rec));
  }
  return split;
}

void save_mentions(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const MentionRecord& rec : split.records) {
    json obj;
    obj["doc_id"] = rec.doc_id;
    obj["mention"] = rec.mention;
    obj["ctxt_l"] = rec.ctxt_l;
    obj["ctxt_r"] = rec.ctxt_r;
    obj["gold"] = rec.gold;
    out << obj.dump() << "\n";
  }
}

DatasetSplit relabel_nil(const DatasetSplit& split, const Ontology& target) {
  DatasetSplit out = split;
  for (MentionRecord& rec : out.records) {
    if (!is_nil(rec.gold) && !target.contains(rec.gold)) rec.gold = kNilLabel;
  }
  return out;
}

StatsTable split_stats(const std::vector<DatasetSplit>& splits,
                       const Ontology& onto) {
  StatsTable table;
  for (const DatasetSplit& split : splits) {
    SplitStats s;
    s.name = split.name;
    s.n_mentions = static_cast<long>(split.records.size());
    for (const MentionRecord& rec : split.records) {
      if (is_nil(rec.gold)) ++s.n_out_of_kb;
    }
    s.n_in_kb = s.n_mentions - s.n_out_of_kb;
    s.pct_out_of_kb =
        s.n_mentions == 0
            ? 0.0
            : 100.0 * static_cast<double>(s.n_out_of_kb) /
                  static_cast<double>(s.n_mentions);
    table.splits.push_back(std::move(s));
  }
  const auto [n_entities, n_plus_syn] = synonym_count(onto);
  table.n_entities = n_entities;
  table.n_entities_plus_synonyms = n_plus_syn;
  return table;
}

std::string render_stats_text(const StatsTable& table) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "split" << std::right << std::setw(12)
      << "mentions" << std::setw(12) << "out-of-KB" << std::setw(12)
      << "% out" << std::setw(12) << "in-KB" << "\n";
  for (const SplitStats& s : table.splits) {
    out << std::left << std::setw(10) << s.name << std::right << std::setw(12)
        << s.n_mentions << std::setw(12) << s.n_out_of_kb << std::setw(12)
        << std::fixed << std::setprecision(1) << s.pct_out_of_kb
        << std::setw(12) << s.n_in_kb << "\n";
  }
  out << "entities: " << table.n_entities
      << "  entities+synonyms: " << table.n_entities_plus_synonyms << "\n";
  return out.str();
}

}  // namespace nilel
