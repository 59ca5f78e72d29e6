#include "nilel/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "nilel/errors.hpp"

namespace nilel {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

const std::vector<std::string>& Vocabulary::special_names() {
  static const std::vector<std::string> names = {
      "[CLS]", "[SEP]", "[UNK]", "[PAD]", "[M_s]",
      "[M_e]", "[ENT]", "[SYN]", "[NIL]"};
  return names;
}

Vocabulary::Vocabulary() : tokens_(special_names()) {}

int Vocabulary::word_id(const std::string& word) const {
  auto it = word_ids_.find(word);
  return it == word_ids_.end() ? kUnk : it->second;
}

void Vocabulary::add_word(const std::string& word) {
  if (word_ids_.count(word)) return;
  word_ids_[word] = static_cast<int>(tokens_.size());
  tokens_.push_back(word);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const std::string& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  Vocabulary vocab;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (id < kNumSpecials) {
      if (line != special_names()[id]) {
        throw ParseError("vocabulary line " + std::to_string(id + 1) +
                         ": expected special token " + special_names()[id]);
      }
    } else {
      vocab.add_word(line);
    }
    ++id;
  }
  return vocab;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_count) {
  std::map<std::string, long> counts;  // ordered: ties resolve lexicographically
  for (const std::string& text : texts) {
    for (const std::string& tok : tokenize(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [word, count] : items) {
    if (count >= min_count) vocab.add_word(word);
  }
  return vocab;
}

namespace {

std::vector<int> word_ids(const std::vector<std::string>& words,
                          const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(vocab.word_id(w));
  return ids;
}

TokenizedInput pad_to(std::vector<int> ids, int max_len) {
  TokenizedInput input;
  if (static_cast<int>(ids.size()) > max_len) ids.resize(max_len);
  input.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) input.mask[i] = 1;
  ids.resize(max_len, Vocabulary::kPad);
  input.ids = std::move(ids);
  return input;
}

// Tail truncation that keeps the closing [SEP].
void truncate_keep_sep(std::vector<int>& ids, int max_len) {
  if (static_cast<int>(ids.size()) <= max_len) return;
  ids.resize(max_len);
  ids.back() = Vocabulary::kSep;
}

}  // namespace

std::vector<int> mention_template_ids(const MentionRecord& rec,
                                      const Vocabulary& vocab, int max_len,
                                      bool* mention_truncated) {
  std::vector<int> left = word_ids(tokenize(rec.ctxt_l), vocab);
  std::vector<int> mention = word_ids(tokenize(rec.mention), vocab);
  std::vector<int> right = word_ids(tokenize(rec.ctxt_r), vocab);
  if (mention_truncated) *mention_truncated = false;

  const int specials = 4;  // [CLS] [M_s] [M_e] [SEP]
  int budget = max_len - specials - static_cast<int>(mention.size());
  if (budget < 0) {
    mention.resize(std::max(0, max_len - specials));
    if (mention_truncated) *mention_truncated = true;
    budget = 0;
  }
  // Trim the contexts from their outer ends, splitting the budget evenly
  // and letting a short side donate its slack to the other.
  int l_keep = std::min<int>(static_cast<int>(left.size()), budget / 2);
  int r_keep = std::min<int>(static_cast<int>(right.size()), budget - budget / 2);
  int slack = budget - l_keep - r_keep;
  l_keep = std::min<int>(static_cast<int>(left.size()), l_keep + slack);
  slack = budget - l_keep - r_keep;
  r_keep = std::min<int>(static_cast<int>(right.size()), r_keep + slack);

  std::vector<int> ids;
  ids.reserve(specials + mention.size() + l_keep + r_keep);
  ids.push_back(Vocabulary::kCls);
  ids.insert(ids.end(), left.end() - l_keep, left.end());
  ids.push_back(Vocabulary::kMentionStart);
  ids.insert(ids.end(), mention.begin(), mention.end());
  ids.push_back(Vocabulary::kMentionEnd);
  ids.insert(ids.end(), right.begin(), right.begin() + r_keep);
  ids.push_back(Vocabulary::kSep);
  return ids;
}

std::vector<int> entity_template_ids(const Entity& ent, bool with_synonyms,
                                     const Vocabulary& vocab, int max_len) {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kCls);
  for (const int id : word_ids(tokenize(ent.name), vocab)) ids.push_back(id);
  ids.push_back(Vocabulary::kEnt);
  if (with_synonyms) {
    for (const std::string& syn : ent.synonyms) {
      for (const int id : word_ids(tokenize(syn), vocab)) ids.push_back(id);
      ids.push_back(Vocabulary::kSyn);
    }
  }
  for (const int id : word_ids(tokenize(ent.definition), vocab)) ids.push_back(id);
  ids.push_back(Vocabulary::kSep);
  truncate_keep_sep(ids, max_len);
  return ids;
}

std::vector<int> nil_template_ids(NilVariant variant, const Vocabulary& vocab,
                                  int max_len) {
  // The definition body reads "it is a {nil} option ." with {nil} rendered
  // as the word or the special token depending on the variant.
  std::vector<int> ids;
  ids.push_back(Vocabulary::kCls);
  const bool special = variant != NilVariant::kWord && variant != NilVariant::kWordDef;
  const int nil_name =
      special ? Vocabulary::kNil : vocab.word_id("nil");
  ids.push_back(nil_name);
  if (variant == NilVariant::kWordDef || variant == NilVariant::kTokenDef ||
      variant == NilVariant::kTokenNilDef) {
    ids.push_back(Vocabulary::kEnt);
    for (const char* w : {"it", "is", "a"}) ids.push_back(vocab.word_id(w));
    ids.push_back(variant == NilVariant::kTokenNilDef ? Vocabulary::kNil
                                                      : vocab.word_id("nil"));
    ids.push_back(vocab.word_id("option"));
    ids.push_back(vocab.word_id("."));
  }
  ids.push_back(Vocabulary::kSep);
  truncate_keep_sep(ids, max_len);
  return ids;
}

TokenizedInput mention_input(const MentionRecord& rec, const Vocabulary& vocab,
                             int max_len) {
  bool truncated = false;
  TokenizedInput input = pad_to(mention_template_ids(rec, vocab, max_len, &truncated),
                                max_len);
  input.mention_truncated = truncated;
  return input;
}

TokenizedInput entity_input(const Entity& ent, bool with_synonyms,
                            const Vocabulary& vocab, int max_len) {
  return pad_to(entity_template_ids(ent, with_synonyms, vocab, max_len), max_len);
}

TokenizedInput nil_input(NilVariant variant, const Vocabulary& vocab,
                         int max_len) {
  return pad_to(nil_template_ids(variant, vocab, max_len), max_len);
}

namespace {

TokenizedInput join_pair(std::vector<int> mention_ids,
                         const std::vector<int>& entity_ids, int mention_max,
                         int entity_max, bool truncated) {
  // The entity template already starts with [CLS]; drop it so the pair
  // shares the mention's [CLS] and keeps a single separating [SEP].
  std::vector<int> ids = std::move(mention_ids);
  ids.insert(ids.end(), entity_ids.begin() + 1, entity_ids.end());
  TokenizedInput input = pad_to(std::move(ids), mention_max + entity_max);
  input.mention_truncated = truncated;
  return input;
}

}  // namespace

TokenizedInput pair_input(const MentionRecord& rec, const Entity& ent,
                          bool with_synonyms, const Vocabulary& vocab,
                          int mention_max, int entity_max) {
  bool truncated = false;
  return join_pair(mention_template_ids(rec, vocab, mention_max, &truncated),
                   entity_template_ids(ent, with_synonyms, vocab, entity_max),
                   mention_max, entity_max, truncated);
}

TokenizedInput pair_input(const MentionRecord& rec, NilVariant variant,
                          const Vocabulary& vocab, int mention_max,
                          int entity_max) {
  bool truncated = false;
  return join_pair(mention_template_ids(rec, vocab, mention_max, &truncated),
                   nil_template_ids(variant, vocab, entity_max), mention_max,
                   entity_max, truncated);
}

std::vector<std::string> detokenize(const TokenizedInput& input,
                                    const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int i = 0; i < input.length(); ++i) {
    if (input.mask[i] == 0) continue;
    out.push_back(vocab.token(input.ids[i]));
  }
  return out;
}

NilVariant nil_variant_from_string(const std::string& name) {
  if (name == "nil") return NilVariant::kWord;
  if (name == "nil+def") return NilVariant::kWordDef;
  if (name == "[nil]") return NilVariant::kToken;
  if (name == "[nil]+def") return NilVariant::kTokenDef;
  if (name == "[nil]+nildef") return NilVariant::kTokenNilDef;
  throw ValidationError("unknown NIL representation \"" + name +
                        "\" (expected nil, nil+def, [nil], [nil]+def, "
                        "[nil]+nildef)");
}

std::string nil_variant_to_string(NilVariant v) {
  switch (v) {
    case NilVariant::kWord: return "nil";
    case NilVariant::kWordDef: return "nil+def";
    case NilVariant::kToken: return "[nil]";
    case NilVariant::kTokenDef: return "[nil]+def";
    case NilVariant::kTokenNilDef: return "[nil]+nildef";
  }
  return "[nil]";
}

}  // namespace nilel
