#include "nilel/synth.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "nilel/rng.hpp"

namespace nilel {

namespace {

const char* const kConsonants = "bcdfghklmnprstvz";
const char* const kVowels = "aeiou";

std::string make_word(Rng& rng, int syllables) {
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[rng.below(16)]);
    w.push_back(kVowels[rng.below(5)]);
  }
  return w;
}

std::string fresh_word(Rng& rng, std::set<std::string>& used, int syllables) {
  for (;;) {
    std::string w = make_word(rng, syllables);
    if (used.insert(w).second) return w;
  }
}

std::vector<std::string> make_pool(Rng& rng, std::set<std::string>& used,
                                   int count, int syllables) {
  std::vector<std::string> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pool.push_back(fresh_word(rng, used, syllables));
  return pool;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& pool) {
  return pool[rng.below(pool.size())];
}

}  // namespace

SynthData generate_synthetic(const SynthConfig& config) {
  Rng rng(config.seed);
  std::set<std::string> used;

  const std::vector<std::string> suffixes = make_pool(rng, used, 8, 3);
  const std::vector<std::string> variant_suffixes = make_pool(rng, used, 6, 3);
  const std::vector<std::string> adjectives = make_pool(rng, used, 12, 2);
  const std::vector<std::string> organs = make_pool(rng, used, 10, 2);
  const std::vector<std::string> fillers = make_pool(rng, used, 40, 2);
  const std::vector<std::string> def_words = make_pool(rng, used, 6, 2);

  SynthData data;
  struct Meta {
    std::string root, alias, organ, assoc;
  };
  std::vector<Meta> metas;

  const int width = config.n_entities >= 1000 ? 4 : 3;
  for (int i = 0; i < config.n_entities; ++i) {
    Meta meta;
    meta.root = fresh_word(rng, used, 3);
    meta.alias = fresh_word(rng, used, 3);
    meta.organ = pick(rng, organs);
    meta.assoc = fresh_word(rng, used, 2);

    Entity e;
    std::ostringstream id;
    id << "E" << std::setw(width) << std::setfill('0') << i;
    e.id = id.str();
    e.name = meta.root + " " + pick(rng, suffixes);

    const int n_syn = config.min_synonyms +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(
                          config.max_synonyms - config.min_synonyms + 1)));
    // First synonym always reaches through the alias word.
    e.synonyms.push_back(meta.alias + " " + pick(rng, suffixes));
    if (n_syn >= 2) e.synonyms.push_back(meta.root + " " + pick(rng, suffixes));
    if (n_syn >= 3) e.synonyms.push_back(meta.alias);
    if (n_syn >= 4) e.synonyms.push_back(pick(rng, adjectives) + " " + meta.root);

    e.definition = def_words[rng.below(def_words.size())] + " " + meta.organ +
                   " " + meta.root + " " + pick(rng, def_words);

    // Sparse random DAG over earlier entities.
    if (i > 0) {
      const double u = rng.uniform();
      const int n_parents = u < 0.7 ? 1 : (u < 0.85 ? 2 : 0);
      std::set<std::string> chosen;
      for (int p = 0; p < n_parents; ++p) {
        chosen.insert(data.ontology.entities[rng.below(static_cast<std::uint64_t>(i))].id);
      }
      e.parents.assign(chosen.begin(), chosen.end());
    }

    data.ontology.entities.push_back(std::move(e));
    metas.push_back(std::move(meta));
  }
  data.ontology.version_tag = "synthetic";
  data.ontology.validate();

  std::vector<MentionRecord> mentions;
  mentions.reserve(static_cast<std::size_t>(config.n_mentions));
  for (int m = 0; m < config.n_mentions; ++m) {
    const auto ei = static_cast<std::size_t>(
        rng.below(static_cast<std::uint64_t>(config.n_entities)));
    const Entity& e = data.ontology.entities[ei];
    const Meta& meta = metas[ei];

    MentionRecord rec;
    rec.doc_id = "doc" + std::to_string(m / 5);
    rec.gold = e.id;
    const double u = rng.uniform();
    if (u < 0.40) {
      rec.mention = e.name;
    } else if (u < 0.60 && e.synonyms.size() >= 2) {
      rec.mention = e.synonyms[1];  // root family
    } else if (u < 0.80) {
      rec.mention = e.synonyms[rng.below(e.synonyms.size())];
    } else {
      rec.mention = meta.root + " " + pick(rng, variant_suffixes);
    }

    std::ostringstream left, right;
    const int nl = 2 + static_cast<int>(rng.below(3));
    for (int w = 0; w < nl; ++w) left << pick(rng, fillers) << " ";
    left << meta.organ;
    right << meta.assoc;
    const int nr = 2 + static_cast<int>(rng.below(3));
    for (int w = 0; w < nr; ++w) right << " " << pick(rng, fillers);
    rec.ctxt_l = left.str();
    rec.ctxt_r = right.str();
    mentions.push_back(std::move(rec));
  }

  rng.shuffle(mentions);
  const auto n_train = static_cast<std::size_t>(
      config.train_frac * static_cast<double>(mentions.size()));
  const auto n_valid = static_cast<std::size_t>(
      config.valid_frac * static_cast<double>(mentions.size()));
  data.train.name = "train";
  data.valid.name = "valid";
  data.test.name = "test";
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (i < n_train) {
      data.train.records.push_back(std::move(mentions[i]));
    } else if (i < n_train + n_valid) {
      data.valid.records.push_back(std::move(mentions[i]));
    } else {
      data.test.records.push_back(std::move(mentions[i]));
    }
  }
  return data;
}

}  // namespace nilel
