#include "nilel/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "nilel/errors.hpp"
#include "nilel/textproc.hpp"

namespace nilel {

namespace {

std::string lower(const std::string& s) {
  std::string out(s.size(), '\0');
  std::transform(s.begin(), s.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Letters-and-digits-only form used by the acronym rule ("CKD" -> "ckd").
std::string squeeze_alnum(const std::string& s) {
  std::string out;
  for (const char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> whitespace_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Initials of a multi-word surface form; empty for single words.
std::string initials(const std::string& s) {
  const std::vector<std::string> words = whitespace_words(s);
  if (words.size() < 2) return {};
  std::string out;
  for (const std::string& w : words) {
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(w[0]))));
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Prediction sieve_link(const MentionRecord& rec, const Ontology& onto) {
  const std::string mention = lower(rec.mention);
  const std::string acronym = squeeze_alnum(rec.mention);

  using Matcher = std::function<bool(const Entity&)>;
  const Matcher sieves[] = {
      [&](const Entity& e) { return lower(e.name) == mention; },
      [&](const Entity& e) {
        return std::any_of(e.synonyms.begin(), e.synonyms.end(),
                           [&](const std::string& s) { return lower(s) == mention; });
      },
      [&](const Entity& e) {
        const std::string name = lower(e.name);
        return name.find(mention) != std::string::npos ||
               mention.find(name) != std::string::npos;
      },
      [&](const Entity& e) {
        if (acronym.size() < 2) return false;
        if (initials(lower(e.name)) == acronym) return true;
        return std::any_of(e.synonyms.begin(), e.synonyms.end(),
                           [&](const std::string& s) {
                             return initials(lower(s)) == acronym;
                           });
      },
  };

  Prediction pred;
  pred.predicted = kNilLabel;
  for (const Matcher& sieve : sieves) {
    const Entity* best = nullptr;
    for (const Entity& e : onto.entities) {
      if (!sieve(e)) continue;
      if (best == nullptr || e.id < best->id) best = &e;
    }
    if (best != nullptr) {
      pred.predicted = best->id;
      break;
    }
  }
  return pred;
}

CandidateSet bm25_rank(const std::string& mention, const Ontology& onto, int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  constexpr double k1 = 1.5;
  constexpr double b = 0.75;

  const std::size_t n = onto.size();
  std::vector<std::vector<std::string>> docs(n);
  std::unordered_map<std::string, long> doc_freq;
  double total_len = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Entity& e = onto.entities[i];
    std::string text = e.name;
    for (const std::string& s : e.synonyms) text += " " + s;
    text += " " + e.definition;
    docs[i] = tokenize(text);
    total_len += static_cast<double>(docs[i].size());
    std::unordered_map<std::string, bool> seen;
    for (const std::string& t : docs[i]) {
      if (!seen.emplace(t, true).second) continue;
      ++doc_freq[t];
    }
  }
  const double avgdl = n == 0 ? 0.0 : total_len / static_cast<double>(n);

  const std::vector<std::string> query = tokenize(mention);
  std::vector<Candidate> scored;
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::unordered_map<std::string, long> tf;
    for (const std::string& t : docs[i]) ++tf[t];
    double score = 0.0;
    for (const std::string& q : query) {
      const auto tf_it = tf.find(q);
      if (tf_it == tf.end()) continue;
      const auto df_it = doc_freq.find(q);
      const double nt = static_cast<double>(df_it->second);
      const double idf =
          std::log(1.0 + (static_cast<double>(n) - nt + 0.5) / (nt + 0.5));
      const double f = static_cast<double>(tf_it->second);
      const double dl = static_cast<double>(docs[i].size());
      score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl));
    }
    scored.push_back({onto.entities[i].id, score});
  }
  std::sort(scored.begin(), scored.end(), [](const Candidate& a, const Candidate& c) {
    if (a.score != c.score) return a.score > c.score;
    return a.id < c.id;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  CandidateSet cands;
  cands.items = std::move(scored);
  return insert_nil(std::move(cands), 0.0, k);
}

Eigen::VectorXd WordVectors::get(const std::string& word) const {
  auto it = vectors.find(word);
  if (it != vectors.end()) return it->second;
  return Eigen::VectorXd::Zero(dim);
}

Eigen::VectorXd WordVectors::embed(const std::string& text) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) return sum;
  for (const std::string& t : tokens) sum += get(t);
  return sum / static_cast<double>(tokens.size());
}

WordVectors load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  WordVectors wv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (values.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": no vector values");
    }
    if (wv.dim == 0) {
      wv.dim = static_cast<int>(values.size());
    } else if (static_cast<int>(values.size()) != wv.dim) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": vector dimension mismatch");
    }
    Eigen::VectorXd vec(wv.dim);
    for (int i = 0; i < wv.dim; ++i) vec(i) = values[static_cast<std::size_t>(i)];
    wv.vectors[word] = std::move(vec);
  }
  return wv;
}

void save_word_vectors(const WordVectors& wv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<std::string> words;
  words.reserve(wv.vectors.size());
  for (const auto& [word, vec] : wv.vectors) words.push_back(word);
  std::sort(words.begin(), words.end());
  out.precision(17);
  for (const std::string& word : words) {
    out << word;
    const Eigen::VectorXd& vec = wv.vectors.at(word);
    for (int i = 0; i < wv.dim; ++i) out << " " << vec(i);
    out << "\n";
  }
}

WordVectors cooccurrence_vectors(const std::vector<std::string>& texts, int dim,
                                 int window) {
  WordVectors wv;
  wv.dim = dim;
  for (const std::string& text : texts) {
    const std::vector<std::string> tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto [it, fresh] = wv.vectors.emplace(tokens[i], Eigen::VectorXd::Zero(dim));
      Eigen::VectorXd& vec = it->second;
      for (int off = -window; off <= window; ++off) {
        if (off == 0) continue;
        const long j = static_cast<long>(i) + off;
        if (j < 0 || j >= static_cast<long>(tokens.size())) continue;
        vec(static_cast<long>(fnv1a(tokens[static_cast<std::size_t>(j)]) %
                              static_cast<std::uint64_t>(dim))) += 1.0;
      }
    }
  }
  for (auto& [word, vec] : wv.vectors) {
    vec = vec.unaryExpr([](double v) { return std::log1p(v); });
    const double norm = vec.norm();
    if (norm > 0.0) vec /= norm;
  }
  return wv;
}

Eigen::VectorXd FeatureVector::flat() const {
  Eigen::VectorXd out(string_match.size() + 1 + context.size());
  out.head(string_match.size()) = string_match;
  out(string_match.size()) = max_cosine;
  out.tail(context.size()) = context;
  return out;
}

double levenshtein_similarity(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[m]);
  return 1.0 - dist / static_cast<double>(std::max(n, m));
}

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Context tokens around the mention, budgeted like the mention input:
// the innermost window/2 tokens on each side, slack donated across.
std::vector<std::string> context_window(const MentionRecord& rec, int window) {
  const std::vector<std::string> left = tokenize(rec.ctxt_l);
  const std::vector<std::string> right = tokenize(rec.ctxt_r);
  int l_keep = std::min<int>(static_cast<int>(left.size()), window / 2);
  int r_keep = std::min<int>(static_cast<int>(right.size()), window - window / 2);
  int slack = window - l_keep - r_keep;
  l_keep = std::min<int>(static_cast<int>(left.size()), l_keep + slack);
  slack = window - l_keep - r_keep;
  r_keep = std::min<int>(static_cast<int>(right.size()), r_keep + slack);
  std::vector<std::string> out(left.end() - l_keep, left.end());
  out.insert(out.end(), right.begin(), right.begin() + r_keep);
  return out;
}

bool contains_subsequence(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
  }
  return false;
}

}  // namespace

FeatureVector extract_features(const MentionRecord& rec, const Ontology& onto,
                               const WordVectors& wv, int ctxt_window) {
  FeatureVector fv;
  fv.string_match = Eigen::VectorXd::Zero(kNumStringFeatures);
  const std::string mention = lower(rec.mention);

  long exact_hits = 0;
  for (const Entity& e : onto.entities) {
    const std::string name = lower(e.name);
    bool exact = name == mention;
    if (exact) fv.string_match(0) = 1.0;
    for (const std::string& s : e.synonyms) {
      if (lower(s) == mention) {
        fv.string_match(1) = 1.0;
        exact = true;
      }
    }
    if (name.find(mention) != std::string::npos) fv.string_match(2) = 1.0;
    if (mention.find(name) != std::string::npos) fv.string_match(3) = 1.0;
    if (levenshtein_similarity(name, mention) >= 0.8) fv.string_match(4) = 1.0;
    const std::string name_def = name + " " + lower(e.definition);
    if (name_def.find(mention) != std::string::npos) fv.string_match(5) = 1.0;
    if (exact) ++exact_hits;
  }
  fv.string_match(6) = exact_hits == 0 ? 0.0 : (exact_hits == 1 ? 1.0 : 2.0);

  const Eigen::VectorXd mention_emb = wv.embed(rec.mention);
  double best_cos = 0.0;
  for (const Entity& e : onto.entities) {
    best_cos = std::max(best_cos, cosine(mention_emb, wv.embed(e.name)));
    for (const std::string& s : e.synonyms) {
      best_cos = std::max(best_cos, cosine(mention_emb, wv.embed(s)));
    }
  }
  fv.max_cosine = best_cos;

  const std::vector<std::string> window = context_window(rec, ctxt_window);
  Eigen::VectorXd ctx = Eigen::VectorXd::Zero(wv.dim);
  long located = 0;
  for (const Entity& e : onto.entities) {
    bool found = contains_subsequence(window, tokenize(e.name));
    for (const std::string& s : e.synonyms) {
      if (found) break;
      found = contains_subsequence(window, tokenize(s));
    }
    if (found) {
      ctx += wv.embed(e.name);
      ++located;
    }
  }
  if (located > 0) ctx /= static_cast<double>(located);
  fv.context = std::move(ctx);
  return fv;
}

FtClassifier ft_train(const std::vector<Eigen::VectorXd>& features,
                      const std::vector<int>& labels,
                      const FtTrainConfig& config) {
  if (features.size() != labels.size() || features.empty()) {
    throw ValidationError("features and labels must align and be non-empty");
  }
  FtClassifier model;
  const bool has_pos = std::any_of(labels.begin(), labels.end(),
                                   [](int y) { return y == 1; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(),
                                   [](int y) { return y == 0; });
  if (!has_pos || !has_neg) {
    model.constant_label = has_pos ? 1 : 0;
    model.w = Eigen::VectorXd::Zero(features[0].size());
    return model;
  }

  const long d = features[0].size();
  const auto n = static_cast<double>(features.size());
  model.w = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::VectorXd gw = Eigen::VectorXd::Zero(d);
    double gb = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const double err =
          sigmoid(features[i].dot(model.w) + model.b) - static_cast<double>(labels[i]);
      gw += err * features[i];
      gb += err;
    }
    model.w -= config.lr / n * gw;
    model.b -= config.lr / n * gb;
  }
  return model;
}

double ft_predict_prob(const FtClassifier& model, const Eigen::VectorXd& features) {
  if (model.constant_label >= 0) return model.constant_label == 1 ? 1.0 : 0.0;
  return sigmoid(features.dot(model.w) + model.b);
}

int ft_predict(const FtClassifier& model, const Eigen::VectorXd& features) {
  return ft_predict_prob(model, features) >= 0.5 ? 1 : 0;
}

Prediction ft_link(const FtClassifier& model, const MentionRecord& rec,
                   const Ontology& onto, const WordVectors& wv,
                   int ctxt_window) {
  const FeatureVector fv = extract_features(rec, onto, wv, ctxt_window);
  Prediction pred;
  const double prob = ft_predict_prob(model, fv.flat());
  pred.is_nil_prob = prob;
  if (prob >= 0.5) {
    pred.predicted = kNilLabel;
    return pred;
  }

  // Rule-based candidates, resolved by embedding similarity.
  const std::string mention = lower(rec.mention);
  const std::string acronym = squeeze_alnum(rec.mention);
  const Eigen::VectorXd mention_emb = wv.embed(rec.mention);
  const Entity* best = nullptr;
  double best_cos = 0.0;
  for (const Entity& e : onto.entities) {
    const std::string name = lower(e.name);
    bool hit = name == mention || name.find(mention) != std::string::npos ||
               mention.find(name) != std::string::npos;
    if (!hit) {
      hit = std::any_of(e.synonyms.begin(), e.synonyms.end(),
                        [&](const std::string& s) { return lower(s) == mention; });
    }
    if (!hit && acronym.size() >= 2) {
      hit = initials(name) == acronym ||
            std::any_of(e.synonyms.begin(), e.synonyms.end(),
                        [&](const std::string& s) {
                          return initials(lower(s)) == acronym;
                        });
    }
    if (!hit) continue;
    double cos = cosine(mention_emb, wv.embed(e.name));
    for (const std::string& s : e.synonyms) {
      cos = std::max(cos, cosine(mention_emb, wv.embed(s)));
    }
    if (best == nullptr || cos > best_cos ||
        (cos == best_cos && e.id < best->id)) {
      best = &e;
      best_cos = cos;
    }
  }
  if (best == nullptr) {
    pred.predicted = kNilLabel;
  } else {
    pred.predicted = best->id;
    pred.score = best_cos;
  }
  return pred;
}

double dynamic_nil_score(const std::vector<double>& cross_scores,
                         const Eigen::VectorXd& f_mes,
                         const Eigen::VectorXd& v_cross_m,
                         const Eigen::VectorXd& w, double b) {
  const std::vector<double> dme = pooled_scores(cross_scores);
  Eigen::VectorXd feat(static_cast<long>(dme.size()) + f_mes.size() +
                       v_cross_m.size());
  for (std::size_t i = 0; i < dme.size(); ++i) feat(static_cast<long>(i)) = dme[i];
  feat.segment(static_cast<long>(dme.size()), f_mes.size()) = f_mes;
  feat.tail(v_cross_m.size()) = v_cross_m;
  if (feat.size() != w.size()) {
    throw ValidationError("dynamic feature vector does not match weight size");
  }
  return sigmoid(feat.dot(w) + b);
}

}  // namespace nilel
