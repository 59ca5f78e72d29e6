#include <doctest.h>

#include <filesystem>
#include <set>

#include "nilel/textproc.hpp"

using namespace nilel;

namespace {

Vocabulary vocab_of(const std::vector<std::string>& texts, int min_count = 1) {
  return build_vocab(texts, min_count);
}

std::vector<std::string> strings_of(const std::vector<int>& ids,
                                    const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const int id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("Flu, or COLD?") ==
        std::vector<std::string>{"flu", ",", "or", "cold", "?"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("  spaced   out ") == std::vector<std::string>{"spaced", "out"});
}

TEST_CASE("build_vocab honors min_count and adds nine specials") {
  const Vocabulary v1 = vocab_of({"a b", "b c"});
  CHECK(v1.size() == Vocabulary::kNumSpecials + 3);
  const Vocabulary v2 = vocab_of({"a b", "b c"}, 2);
  CHECK(v2.size() == Vocabulary::kNumSpecials + 1);
  CHECK(v2.word_id("b") == Vocabulary::kNumSpecials);
  CHECK(v2.word_id("a") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab is deterministic") {
  const std::vector<std::string> texts = {"c b a", "b c", "c"};
  const Vocabulary a = vocab_of(texts);
  const Vocabulary b = vocab_of(texts);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) CHECK(a.token(i) == b.token(i));
  // frequency desc then lexicographic: c(3), b(2), a(1)
  CHECK(a.token(9) == "c");
  CHECK(a.token(10) == "b");
  CHECK(a.token(11) == "a");
}

TEST_CASE("special tokens sit at reserved indices") {
  const Vocabulary v = vocab_of({"x"});
  CHECK(v.token(0) == "[CLS]");
  CHECK(v.token(1) == "[SEP]");
  CHECK(v.token(2) == "[UNK]");
  CHECK(v.token(3) == "[PAD]");
  CHECK(v.token(4) == "[M_s]");
  CHECK(v.token(5) == "[M_e]");
  CHECK(v.token(6) == "[ENT]");
  CHECK(v.token(7) == "[SYN]");
  CHECK(v.token(8) == "[NIL]");
  // corpus text cannot forge special ids
  CHECK(v.word_id("[NIL]") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary save/load round-trips") {
  const Vocabulary v = vocab_of({"alpha beta gamma", "beta"});
  const auto p = std::filesystem::temp_directory_path() / "vocab_rt.txt";
  v.save(p);
  const Vocabulary loaded = Vocabulary::load(p);
  REQUIRE(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));
}

TEST_CASE("mention_input wraps the mention with markers and pads") {
  const Vocabulary v = vocab_of({"flu"});
  MentionRecord rec{"d", "flu", "", "", "E1"};
  const TokenizedInput in = mention_input(rec, v, 8);
  CHECK(in.ids == std::vector<int>{Vocabulary::kCls, Vocabulary::kMentionStart,
                                   v.word_id("flu"), Vocabulary::kMentionEnd,
                                   Vocabulary::kSep, Vocabulary::kPad,
                                   Vocabulary::kPad, Vocabulary::kPad});
  CHECK(in.mask == std::vector<int>{1, 1, 1, 1, 1, 0, 0, 0});
  CHECK_FALSE(in.mention_truncated);
}

TEST_CASE("mention_input trims long context from the outer ends") {
  const Vocabulary v =
      vocab_of({"w1 w2 w3 w4 w5 w6 w7 w8 flu r1 r2"});
  MentionRecord rec{"d", "flu", "w1 w2 w3 w4 w5 w6 w7 w8", "r1 r2", "E1"};
  const TokenizedInput in = mention_input(rec, v, 12);
  // budget = 12 - 4 - 1 = 7; the short right side donates its slack, so the
  // left keeps its innermost 5 tokens
  const std::vector<std::string> toks = strings_of(in.ids, v);
  CHECK(toks == std::vector<std::string>{"[CLS]", "w4", "w5", "w6", "w7", "w8",
                                         "[M_s]", "flu", "[M_e]", "r1", "r2",
                                         "[SEP]"});
  CHECK_FALSE(in.mention_truncated);
}

TEST_CASE("mention longer than the budget is tail-truncated and flagged") {
  const Vocabulary v = vocab_of({"m1 m2 m3 m4 m5 m6"});
  MentionRecord rec{"d", "m1 m2 m3 m4 m5 m6", "", "", "E1"};
  const TokenizedInput in = mention_input(rec, v, 8);
  CHECK(in.mention_truncated);
  const std::vector<std::string> toks = strings_of(in.ids, v);
  CHECK(toks == std::vector<std::string>{"[CLS]", "[M_s]", "m1", "m2", "m3", "m4",
                                         "[M_e]", "[SEP]"});
}

TEST_CASE("out-of-vocabulary words map to [UNK]") {
  const Vocabulary v = vocab_of({"known"});
  MentionRecord rec{"d", "unknown", "", "", "E1"};
  const TokenizedInput in = mention_input(rec, v, 8);
  CHECK(in.ids[2] == Vocabulary::kUnk);
}

TEST_CASE("entity_input renders the synonym template") {
  const Vocabulary v = vocab_of({"bradycardia slow heart beat"});
  Entity e;
  e.id = "C0428977";
  e.name = "Bradycardia";
  e.synonyms = {"Slow heart beat"};
  const TokenizedInput in = entity_input(e, true, v, 16);
  const std::vector<std::string> toks = strings_of(in.ids, v);
  CHECK(std::vector<std::string>(toks.begin(), toks.begin() + 8) ==
        std::vector<std::string>{"[CLS]", "bradycardia", "[ENT]", "slow", "heart",
                                 "beat", "[SYN]", "[SEP]"});
  for (std::size_t i = 8; i < toks.size(); ++i) CHECK(toks[i] == "[PAD]");
}

TEST_CASE("entity_input without synonyms has no [SYN]") {
  const Vocabulary v = vocab_of({"bradycardia slow heart beat defined here"});
  Entity e;
  e.name = "Bradycardia";
  e.synonyms = {"Slow heart beat"};
  e.definition = "defined here";
  const TokenizedInput without = entity_input(e, false, v, 16);
  for (const int id : without.ids) CHECK(id != Vocabulary::kSyn);

  Entity no_syn = e;
  no_syn.synonyms.clear();
  const TokenizedInput with_flag = entity_input(no_syn, true, v, 16);
  CHECK(with_flag.ids == entity_input(no_syn, false, v, 16).ids);
}

TEST_CASE("all five NIL variants render distinct sequences sharing [NIL]") {
  const Vocabulary v = vocab_of({"nil it is a option ."});
  std::set<std::vector<int>> rendered;
  for (const NilVariant variant :
       {NilVariant::kWord, NilVariant::kWordDef, NilVariant::kToken,
        NilVariant::kTokenDef, NilVariant::kTokenNilDef}) {
    rendered.insert(nil_template_ids(variant, v, 32));
  }
  CHECK(rendered.size() == 5);

  const std::vector<int> token_var = nil_template_ids(NilVariant::kToken, v, 32);
  CHECK(token_var == std::vector<int>{Vocabulary::kCls, Vocabulary::kNil,
                                      Vocabulary::kSep});
  const std::vector<int> nildef = nil_template_ids(NilVariant::kTokenNilDef, v, 32);
  CHECK(std::count(nildef.begin(), nildef.end(), Vocabulary::kNil) == 2);
}

TEST_CASE("NIL word variant renders the nil+def template words") {
  const Vocabulary v = vocab_of({"nil it is a option ."});
  const std::vector<int> ids = nil_template_ids(NilVariant::kWordDef, v, 32);
  CHECK(strings_of(ids, v) ==
        std::vector<std::string>{"[CLS]", "nil", "[ENT]", "it", "is", "a", "nil",
                                 "option", ".", "[SEP]"});
}

TEST_CASE("pair_input concatenates segments with a single [CLS]") {
  const Vocabulary v = vocab_of({"flu influenza a viral illness"});
  MentionRecord rec{"d", "flu", "", "", "E1"};
  Entity e;
  e.name = "influenza";
  e.definition = "a viral illness";

  const TokenizedInput pair = pair_input(rec, e, false, v, 8, 12);
  CHECK(pair.length() == 20);
  const std::vector<std::string> toks = strings_of(pair.ids, v);
  CHECK(std::count(toks.begin(), toks.end(), "[CLS]") == 1);
  CHECK(std::count(toks.begin(), toks.end(), "[SEP]") == 2);
  CHECK(std::vector<std::string>(toks.begin(), toks.begin() + 11) ==
        std::vector<std::string>{"[CLS]", "[M_s]", "flu", "[M_e]", "[SEP]",
                                 "influenza", "[ENT]", "a", "viral", "illness",
                                 "[SEP]"});
}

TEST_CASE("pair_input with a NIL variant ends ... [SEP] [NIL] [SEP]") {
  const Vocabulary v = vocab_of({"flu"});
  MentionRecord rec{"d", "flu", "", "", "NIL"};
  const TokenizedInput pair = pair_input(rec, NilVariant::kToken, v, 8, 8);
  const std::vector<std::string> toks = strings_of(pair.ids, v);
  CHECK(std::vector<std::string>(toks.begin(), toks.begin() + 7) ==
        std::vector<std::string>{"[CLS]", "[M_s]", "flu", "[M_e]", "[SEP]",
                                 "[NIL]", "[SEP]"});
}

TEST_CASE("pair length is always mention_max + entity_max") {
  const Vocabulary v = vocab_of({"a b c d e f g h i j k l m n o p q r s t"});
  MentionRecord rec{"d", "a b c", "d e f g h i j", "k l m n o", "E1"};
  Entity e;
  e.name = "p q r";
  e.definition = "s t a b c d e f g h i j k l m n o p q r s t";
  e.synonyms = {"g h", "i j k"};
  for (const int m_max : {8, 16}) {
    for (const int e_max : {8, 32}) {
      CHECK(pair_input(rec, e, true, v, m_max, e_max).length() == m_max + e_max);
      CHECK(pair_input(rec, NilVariant::kTokenNilDef, v, m_max, e_max).length() ==
            m_max + e_max);
    }
  }
}

TEST_CASE("round-trip: detokenized non-pad ids reproduce the template") {
  const Vocabulary v = vocab_of({"flu shot in the left arm yesterday"});
  MentionRecord rec{"d", "flu shot", "in the left", "arm yesterday", "E1"};
  const TokenizedInput in = mention_input(rec, v, 16);
  CHECK(detokenize(in, v) ==
        std::vector<std::string>{"[CLS]", "in", "the", "left", "[M_s]", "flu",
                                 "shot", "[M_e]", "arm", "yesterday", "[SEP]"});
}

TEST_CASE("nil variant names round-trip through their parser") {
  for (const NilVariant variant :
       {NilVariant::kWord, NilVariant::kWordDef, NilVariant::kToken,
        NilVariant::kTokenDef, NilVariant::kTokenNilDef}) {
    CHECK(nil_variant_from_string(nil_variant_to_string(variant)) == variant);
  }
  CHECK_THROWS(nil_variant_from_string("bogus"));
}

TEST_CASE("entity_input truncation keeps the closing [SEP]") {
  const Vocabulary v = vocab_of({"w x y z"});
  Entity e;
  e.name = "w x y z w x y z";
  e.definition = "w x y z w x y z w x y z";
  const TokenizedInput in = entity_input(e, false, v, 10);
  CHECK(in.length() == 10);
  CHECK(in.ids[9] == Vocabulary::kSep);
  CHECK(in.mask[9] == 1);
}
