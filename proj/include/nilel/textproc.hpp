#ifndef NILEL_TEXTPROC_HPP
#define NILEL_TEXTPROC_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nilel/corpus.hpp"
#include "nilel/ontology.hpp"

namespace nilel {

// Lowercases and splits on whitespace; each punctuation character becomes
// its own token ("flu," -> "flu" ","). Stands in for a subword tokenizer.
std::vector<std::string> tokenize(std::string_view text);

// Token table with nine special tokens pinned at ids 0..8. Corpus tokens
// start at id 9, ordered by descending frequency then lexicographically,
// which makes the assignment deterministic for a given text stream.
class Vocabulary {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kUnk = 2;
  static constexpr int kPad = 3;
  static constexpr int kMentionStart = 4;  // [M_s]
  static constexpr int kMentionEnd = 5;    // [M_e]
  static constexpr int kEnt = 6;
  static constexpr int kSyn = 7;
  static constexpr int kNil = 8;
  static constexpr int kNumSpecials = 9;

  static const std::vector<std::string>& special_names();

  Vocabulary();

  int size() const { return static_cast<int>(tokens_.size()); }

  // Id for a corpus word; kUnk when absent. Special names do not resolve
  // here, so "[nil]" appearing in raw text cannot forge the reserved id.
  int word_id(const std::string& word) const;

  const std::string& token(int id) const { return tokens_.at(id); }

  void add_word(const std::string& word);

  // One token per line, line number == id, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> word_ids_;
};

// Tokenizes every text, drops words seen fewer than min_count times, and
// assigns ids deterministically (frequency desc, then lexicographic).
Vocabulary build_vocab(const std::vector<std::string>& texts, int min_count);

// Fixed-length id sequence plus its 0/1 attention mask.
struct TokenizedInput {
  std::vector<int> ids;
  std::vector<int> mask;
  bool mention_truncated = false;  // warning flag from mention_input
  int length() const { return static_cast<int>(ids.size()); }
};

// The five NIL entity surface templates, fixed or fine-tuned downstream:
//   kWord         "NIL"
//   kWordDef      "NIL [ENT] It is a NIL option."
//   kToken        "[NIL]"
//   kTokenDef     "[NIL] [ENT] It is a NIL option."
//   kTokenNilDef  "[NIL] [ENT] It is a [NIL] option."
enum class NilVariant { kWord, kWordDef, kToken, kTokenDef, kTokenNilDef };

NilVariant nil_variant_from_string(const std::string& name);
std::string nil_variant_to_string(NilVariant v);

// Unpadded id sequences for the input templates. All sequences start with
// [CLS] and end with [SEP].
std::vector<int> mention_template_ids(const MentionRecord& rec,
                                      const Vocabulary& vocab, int max_len,
                                      bool* mention_truncated = nullptr);
std::vector<int> entity_template_ids(const Entity& ent, bool with_synonyms,
                                     const Vocabulary& vocab, int max_len);
std::vector<int> nil_template_ids(NilVariant variant, const Vocabulary& vocab,
                                  int max_len);

// [CLS] ctxt_l [M_s] mention [M_e] ctxt_r [SEP], padded to max_len. When the
// template overflows, context is trimmed from the outer ends and the mention
// span with its markers is kept; a mention that alone exceeds the budget is
// tail-truncated and flagged.
TokenizedInput mention_input(const MentionRecord& rec, const Vocabulary& vocab,
                             int max_len = 32);

// [CLS] name [ENT] definition [SEP], or with synonyms
// [CLS] name [ENT] syn_1 [SYN] ... syn_n [SYN] definition [SEP].
// Tail-truncated (the final [SEP] survives truncation), then padded.
TokenizedInput entity_input(const Entity& ent, bool with_synonyms,
                            const Vocabulary& vocab, int max_len = 128);

// The NIL template rendered through the entity input shape.
TokenizedInput nil_input(NilVariant variant, const Vocabulary& vocab,
                         int max_len = 128);

// Mention template (mention_max budget) and entity template (entity_max
// budget) sharing one [CLS]; one [SEP] separates the segments. Padded to
// mention_max + entity_max.
TokenizedInput pair_input(const MentionRecord& rec, const Entity& ent,
                          bool with_synonyms, const Vocabulary& vocab,
                          int mention_max = 32, int entity_max = 128);
TokenizedInput pair_input(const MentionRecord& rec, NilVariant variant,
                          const Vocabulary& vocab, int mention_max = 32,
                          int entity_max = 128);

// Token strings for non-pad ids (specials rendered by their bracket names).
std::vector<std::string> detokenize(const TokenizedInput& input,
                                    const Vocabulary& vocab);

}  // namespace nilel

#endif  // NILEL_TEXTPROC_HPP
