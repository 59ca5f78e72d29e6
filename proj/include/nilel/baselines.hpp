#ifndef NILEL_BASELINES_HPP
#define NILEL_BASELINES_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "nilel/corpus.hpp"
#include "nilel/crossencoder.hpp"
#include "nilel/ontology.hpp"

namespace nilel {

// Ordered rule cascade; the first sieve with a hit wins (smallest id on
// ties) and no hit means NIL:
//   1. exact name match (case-insensitive)
//   2. exact synonym match
//   3. exact inclusion either direction vs the name
//   4. first-letter matching: the mention's letters equal the initials of a
//      multi-word name or synonym
Prediction sieve_link(const MentionRecord& rec, const Ontology& onto);

// Okapi BM25 (k1=1.5, b=0.75) over documents made of entity name, synonyms,
// and definition; idf(t) = ln(1 + (N - n_t + 0.5)/(n_t + 0.5)), every query
// token occurrence contributing. Top-k by (score desc, id asc), then NIL is
// inserted with raw score 0.
CandidateSet bm25_rank(const std::string& mention, const Ontology& onto, int k);

// Plain text word vectors: word followed by dim floats per line. Unknown
// words look up as zero vectors.
struct WordVectors {
  int dim = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors;

  Eigen::VectorXd get(const std::string& word) const;
  // Mean vector of the tokens of `text` (zero when nothing is known).
  Eigen::VectorXd embed(const std::string& text) const;
};

WordVectors load_word_vectors(const std::filesystem::path& path);
void save_word_vectors(const WordVectors& wv, const std::filesystem::path& path);

// Fallback when no vector file is supplied: hashed co-occurrence counts
// within +/-window, log-scaled and L2-normalized per word.
WordVectors cooccurrence_vectors(const std::vector<std::string>& texts, int dim,
                                 int window = 2);

inline constexpr int kNumStringFeatures = 7;

// Static feature block for one mention. String features, in order:
//   0 exact name match            1 exact synonym match
//   2 mention substring of name   3 name substring of mention
//   4 fuzzy name match (normalized Levenshtein similarity >= 0.8)
//   5 mention included in name+definition
//   6 match multiplicity bucket (0 / 1 / 2=many exact name-or-synonym hits)
// All string comparisons are case-insensitive.
struct FeatureVector {
  Eigen::VectorXd string_match;  // kNumStringFeatures
  double max_cosine = 0.0;       // best mention/entity embedding similarity
  Eigen::VectorXd context;       // averaged embeddings of in-context entities

  Eigen::VectorXd flat() const;  // [string_match, max_cosine, context]
};

FeatureVector extract_features(const MentionRecord& rec, const Ontology& onto,
                               const WordVectors& wv, int ctxt_window = 32);

// dist(a, b) / max(|a|, |b|) subtracted from 1; 1.0 for two empty strings.
double levenshtein_similarity(const std::string& a, const std::string& b);

// Logistic regression stand-in for the SVM / random-forest NIL classifier.
struct FtClassifier {
  Eigen::VectorXd w;
  double b = 0.0;
  int constant_label = -1;  // >= 0 when training saw a single class
};

struct FtTrainConfig {
  double lr = 0.5;
  int iterations = 2000;
};

FtClassifier ft_train(const std::vector<Eigen::VectorXd>& features,
                      const std::vector<int>& labels,
                      const FtTrainConfig& config = {});

double ft_predict_prob(const FtClassifier& model, const Eigen::VectorXd& features);
int ft_predict(const FtClassifier& model, const Eigen::VectorXd& features);

// Full feature-based linking: the classifier decides NIL; otherwise
// candidates come from the four matching rules (exact name, inclusion,
// synonyms, first letters) and the best cosine similarity wins. No rule
// candidate also means NIL.
Prediction ft_link(const FtClassifier& model, const MentionRecord& rec,
                   const Ontology& onto, const WordVectors& wv,
                   int ctxt_window = 32);

// sigmoid([scores ++ min/max/avg, f_mes, v_cross_m] . w + b)
double dynamic_nil_score(const std::vector<double>& cross_scores,
                         const Eigen::VectorXd& f_mes,
                         const Eigen::VectorXd& v_cross_m,
                         const Eigen::VectorXd& w, double b);

}  // namespace nilel

#endif  // NILEL_BASELINES_HPP
