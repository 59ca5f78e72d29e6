#include "nilel/ontology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "nilel/errors.hpp"
#include "nilel/rng.hpp"

namespace nilel {

using nlohmann::json;

const Entity* Ontology::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entities[it->second];
}

std::vector<std::string> Ontology::children_of(const std::string& id) const {
  std::vector<std::string> out;
  for (const Entity& e : entities) {
    if (std::find(e.parents.begin(), e.parents.end(), id) != e.parents.end()) {
      out.push_back(e.id);
    }
  }
  return out;
}

void Ontology::validate() {
  index_.clear();
  index_.reserve(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Entity& e = entities[i];
    if (e.id.empty()) {
      throw ValidationError("entity at position " + std::to_string(i) +
                            " has empty id");
    }
    if (!index_.emplace(e.id, i).second) {
      throw ValidationError("duplicate id " + e.id);
    }
    if (e.name.empty()) {
      throw ValidationError("entity " + e.id + " has empty name");
    }
    // Synonyms may not repeat each other or the name.
    std::vector<std::string> deduped;
    std::unordered_set<std::string> seen{e.name};
    for (const std::string& s : e.synonyms) {
      if (seen.insert(s).second) deduped.push_back(s);
    }
    e.synonyms = std::move(deduped);
    // Parent lists may not repeat either.
    std::vector<std::string> parents;
    std::unordered_set<std::string> pseen;
    for (const std::string& p : e.parents) {
      if (pseen.insert(p).second) parents.push_back(p);
    }
    e.parents = std::move(parents);
  }
  for (const Entity& e : entities) {
    for (const std::string& p : e.parents) {
      if (!index_.count(p)) {
        throw ValidationError("entity " + e.id + " references unknown parent " + p);
      }
    }
  }
  // Kahn toposort over the parent graph; leftover edges mean a cycle.
  std::vector<int> unresolved(entities.size());
  std::size_t edges = 0;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    unresolved[i] = static_cast<int>(entities[i].parents.size());
    edges += entities[i].parents.size();
  }
  std::vector<std::vector<std::size_t>> children(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (const std::string& p : entities[i].parents) {
      children[index_[p]].push_back(i);
    }
  }
  std::deque<std::size_t> roots;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (unresolved[i] == 0) roots.push_back(i);
  }
  while (!roots.empty()) {
    const std::size_t n = roots.front();
    roots.pop_front();
    for (std::size_t c : children[n]) {
      --edges;
      if (--unresolved[c] == 0) roots.push_back(c);
    }
  }
  if (edges > 0) {
    throw ValidationError("parent graph contains a cycle");
  }
}

namespace {

json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

std::string require_string(const json& obj, const char* key, std::size_t line_no) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    throw ParseError("line " + std::to_string(line_no) + ": missing field \"" +
                     key + "\"");
  }
  return obj[key].get<std::string>();
}

std::vector<std::string> optional_string_list(const json& obj, const char* key,
                                              std::size_t line_no) {
  if (!obj.contains(key)) return {};
  if (!obj[key].is_array()) {
    throw ParseError("line " + std::to_string(line_no) + ": field \"" + key +
                     "\" is not an array");
  }
  std::vector<std::string> out;
  for (const auto& v : obj[key]) {
    if (!v.is_string()) {
      throw ParseError("line " + std::to_string(line_no) + ": field \"" + key +
                       "\" contains a non-string");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  Ontology onto;
  onto.version_tag = path.filename().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json obj = parse_line(line, line_no);
    Entity e;
    e.id = require_string(obj, "id", line_no);
    e.name = require_string(obj, "name", line_no);
    if (obj.contains("definition")) {
      if (!obj["definition"].is_string()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": field \"definition\" is not a string");
      }
      e.definition = obj["definition"].get<std::string>();
    }
    e.synonyms = optional_string_list(obj, "synonyms", line_no);
    e.parents = optional_string_list(obj, "parents", line_no);
    onto.entities.push_back(std::move(e));
  }
  onto.validate();
  return onto;
}

void save_ontology(const Ontology& onto, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Entity& e : onto.entities) {
    json obj;
    obj["id"] = e.id;
    obj["name"] = e.name;
    obj["definition"] = e.definition;
    obj["synonyms"] = e.synonyms;
    obj["parents"] = e.parents;
    out << obj.dump() << "\n";
  }
}

MergeMap load_merge_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  MergeMap merges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json obj = parse_line(line, line_no);
    const std::string retired = require_string(obj, "retired", line_no);
    const std::string into = require_string(obj, "into", line_no);
    merges.pairs[retired] = into;
  }
  return merges;
}

std::pair<Ontology, std::set<std::string>> prune(const Ontology& onto,
                                                 double fraction,
                                                 std::uint64_t seed) {
  const std::size_t n = onto.size();
  const auto count =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  Rng rng(seed);
  const std::vector<std::size_t> order = rng.sample_indices(n, count);

  // Work on an index-based copy; ids are resolved once up front.
  std::vector<Entity> nodes = onto.entities;
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].id] = i;
  std::vector<std::vector<std::size_t>> parents(n), children(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const std::string& p : nodes[i].parents) {
      const std::size_t pi = pos.at(p);
      parents[i].push_back(pi);
      children[pi].push_back(i);
    }
  }
  std::vector<bool> removed(n, false);

  auto link = [&](std::size_t p, std::size_t c) {
    if (std::find(parents[c].begin(), parents[c].end(), p) == parents[c].end()) {
      parents[c].push_back(p);
      children[p].push_back(c);
    }
  };

  std::set<std::string> removed_ids;
  for (const std::size_t v : order) {
    // Bridge every (parent, child) pair of v before dropping it.
    for (const std::size_t p : parents[v]) {
      if (removed[p]) continue;
      for (const std::size_t c : children[v]) {
        if (!removed[c]) link(p, c);
      }
    }
    for (const std::size_t p : parents[v]) {
      if (removed[p]) continue;
      auto& ch = children[p];
      ch.erase(std::remove(ch.begin(), ch.end(), v), ch.end());
    }
    for (const std::size_t c : children[v]) {
      if (removed[c]) continue;
      auto& pa = parents[c];
      pa.erase(std::remove(pa.begin(), pa.end(), v), pa.end());
    }
    removed[v] = true;
    removed_ids.insert(nodes[v].id);
  }

  Ontology result;
  result.version_tag = onto.version_tag + "-pruned";
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i]) continue;
    Entity e = nodes[i];
    e.parents.clear();
    for (const std::size_t p : parents[i]) e.parents.push_back(nodes[p].id);
    result.entities.push_back(std::move(e));
  }
  result.validate();
  return {std::move(result), std::move(removed_ids)};
}

std::set<std::string> version_diff(const Ontology& newer, const Ontology& older,
                                   const MergeMap& merges) {
  for (const auto& [retired, into] : merges.pairs) {
    if (older.contains(retired)) {
      throw ValidationError("merge map retires " + retired +
                            " which exists in the older ontology");
    }
    if (!older.contains(into)) {
      throw ValidationError("merge map target " + into +
                            " is absent from the older ontology");
    }
  }
  std::set<std::string> out;
  for (const Entity& e : newer.entities) {
    if (older.contains(e.id)) continue;
    if (merges.pairs.count(e.id)) continue;
    out.insert(e.id);
  }
  return out;
}

std::pair<long, long> synonym_count(const Ontology& onto) {
  long with_synonyms = 0;
  for (const Entity& e : onto.entities) {
    with_synonyms += 1 + static_cast<long>(e.synonyms.size());
  }
  return {static_cast<long>(onto.size()), with_synonyms};
}

}  // namespace nilel
