#ifndef NILEL_SYNTH_HPP
#define NILEL_SYNTH_HPP

#include <cstdint>

#include "nilel/corpus.hpp"
#include "nilel/ontology.hpp"

namespace nilel {

// Generator for the synthetic benchmark: an ontology of invented concepts
// plus in-KB-labelled mention splits. Every entity owns a unique root word
// (shared by its name, some synonyms, and its definition) and a unique
// alias word reachable only through synonyms, so synonym-aware retrieval
// has something real to gain. Out-of-KB labels arise later from pruning or
// versioning plus relabeling.
struct SynthConfig {
  int n_entities = 200;
  int n_mentions = 1500;
  int min_synonyms = 2;
  int max_synonyms = 4;
  double train_frac = 0.6;
  double valid_frac = 0.2;
  std::uint64_t seed = 7;
};

struct SynthData {
  Ontology ontology;
  DatasetSplit train, valid, test;
};

SynthData generate_synthetic(const SynthConfig& config);

}  // namespace nilel

#endif  // NILEL_SYNTH_HPP
