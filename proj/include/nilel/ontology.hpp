#ifndef NILEL_ONTOLOGY_HPP
#define NILEL_ONTOLOGY_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nilel {

// One ontology concept. `parents` holds ids of direct superconcepts.
struct Entity {
  std::string id;
  std::string name;
  std::string definition;
  std::vector<std::string> synonyms;
  std::vector<std::string> parents;
};

// Id-keyed entity collection whose parent graph is a DAG. Entities keep
// their file order so that downstream sampling is reproducible.
class Ontology {
 public:
  std::vector<Entity> entities;
  std::string version_tag;

  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const Entity* find(const std::string& id) const;
  std::size_t size() const { return entities.size(); }

  // Rebuilds the id index and checks all invariants: unique non-empty ids,
  // non-empty names, deduplicated synonyms, existing parents, acyclicity.
  void validate();

  // Direct children of `id` (derived from the parent lists).
  std::vector<std::string> children_of(const std::string& id) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Retired id -> surviving id, as recorded between two ontology releases.
struct MergeMap {
  std::map<std::string, std::string> pairs;
};

// Reads a UTF-8 file with one JSON object per line:
//   {"id": str, "name": str, "definition": str, "synonyms": [str], "parents": [str]}
// "id" and "name" are required; the other keys default to empty. Duplicate
// synonyms (or synonyms equal to the name) are dropped. Throws ParseError
// with a line number on malformed JSON and ValidationError on invariant
// violations (duplicate id, dangling parent, cycle).
Ontology load_ontology(const std::filesystem::path& path);

void save_ontology(const Ontology& onto, const std::filesystem::path& path);

// Reads one JSON object per line: {"retired": str, "into": str}.
MergeMap load_merge_map(const std::filesystem::path& path);

// Removes round(fraction * |E|) entities, sampled without replacement with
// mt19937_64(seed), one at a time. Before each removal every (parent, child)
// pair of the removed node gains a direct edge, so ancestor reachability
// among the survivors is preserved. The removal count rounds half-up.
std::pair<Ontology, std::set<std::string>> prune(const Ontology& onto,
                                                 double fraction,
                                                 std::uint64_t seed);

// Ids present in `newer` that do not exist in `older`, after following the
// merge map: a new id recorded as merged into a surviving old id is not
// out-of-KB. Throws ValidationError if the map's keys appear in `older` or
// its values do not.
std::set<std::string> version_diff(const Ontology& newer, const Ontology& older,
                                   const MergeMap& merges);

// (number of entities, number of entities plus synonyms).
std::pair<long, long> synonym_count(const Ontology& onto);

}  // namespace nilel

#endif  // NILEL_ONTOLOGY_HPP
