#include "nilel/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nilel/baselines.hpp"
#include "nilel/biencoder.hpp"
#include "nilel/checkpoint.hpp"
#include "nilel/corpus.hpp"
#include "nilel/crossencoder.hpp"
#include "nilel/errors.hpp"
#include "nilel/manifest.hpp"
#include "nilel/metrics.hpp"
#include "nilel/ontology.hpp"
#include "nilel/synth.hpp"
#include "nilel/textproc.hpp"

namespace fs = std::filesystem;

namespace nilel {

namespace {

struct MethodTraits {
  bool nil_fine_tuned = true;
  NilHead head = NilHead::kNone;
  PredictMode mode = PredictMode::kArgmax;
  std::string cands = "bi";
  bool neural = true;  // uses the cross-encoder
};

MethodTraits method_traits(const std::string& method) {
  if (method == "blinkout") return {true, NilHead::kNone, PredictMode::kArgmax, "bi", true};
  if (method == "blinkout_joint") {
    return {true, NilHead::kSigmoid, PredictMode::kNilHead, "bi", true};
  }
  if (method == "th_blink") {
    return {false, NilHead::kNone, PredictMode::kThreshold, "bi", true};
  }
  if (method == "nilrep_blink") {
    return {false, NilHead::kNone, PredictMode::kArgmax, "bi", true};
  }
  if (method == "bm25_cross_th") {
    return {false, NilHead::kNone, PredictMode::kThreshold, "bm25", true};
  }
  if (method == "ft_blinkout") {
    return {true, NilHead::kDynamicFeatures, PredictMode::kFtHead, "bi", true};
  }
  if (method == "sieve" || method == "ft_classifier") {
    return {true, NilHead::kNone, PredictMode::kArgmax, "none", false};
  }
  throw ValidationError("unknown method \"" + method + "\"");
}

bool resolved_nil_fine_tuned(const RunConfig& cfg) {
  if (cfg.nil_fine_tuned == "auto") return method_traits(cfg.method).nil_fine_tuned;
  if (cfg.nil_fine_tuned == "true") return true;
  if (cfg.nil_fine_tuned == "false") return false;
  throw ValidationError("nil_fine_tuned must be auto, true, or false");
}

std::string resolved_cands(const RunConfig& cfg) {
  if (cfg.cands == "auto") return method_traits(cfg.method).cands;
  if (cfg.cands == "bi" || cfg.cands == "bm25") return cfg.cands;
  throw ValidationError("cands must be auto, bi, or bm25");
}

void require(const std::string& value, const char* flag, const std::string& command) {
  if (value.empty()) {
    throw ValidationError(command + " needs " + std::string(flag));
  }
}

// Tracks created files so a failing command leaves no partial outputs, and
// assembles the manifest for a successful one.
struct Ctx {
  const RunConfig& cfg;
  std::string command;
  fs::path out;
  std::ostream& log;
  Manifest manifest;
  std::vector<fs::path> created;

  Ctx(const RunConfig& c, std::string cmd, std::ostream& l)
      : cfg(c), command(std::move(cmd)), out(c.out), log(l) {
    manifest.command = command;
    manifest.config = config_to_json(cfg);
  }

  fs::path path(const std::string& name) const {
    fs::create_directories(out);
    return out / name;
  }

  void note_input(const std::string& p) {
    if (p.empty()) return;
    manifest.inputs[p] = hash_file_hex(p);
  }

  void note_output(const fs::path& p) { created.push_back(p); }

  void commit() {
    for (const fs::path& p : created) {
      manifest.outputs[p.string()] = hash_file_hex(p);
    }
    write_manifest(manifest, path("manifest.json"));
  }

  void cleanup() {
    for (const fs::path& p : created) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

void write_id_file(Ctx& ctx, const std::string& name,
                   const std::set<std::string>& ids) {
  const fs::path p = ctx.path(name);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  for (const std::string& id : ids) out << id << "\n";
  out.close();
  ctx.note_output(p);
}

void write_text_file(Ctx& ctx, const std::string& name, const std::string& text) {
  const fs::path p = ctx.path(name);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  out.close();
  ctx.note_output(p);
}

// Vocabulary source: training mentions with contexts, all entity text, and
// the words of the NIL templates.
std::vector<std::string> vocab_texts(const DatasetSplit& train, const Ontology& onto) {
  std::vector<std::string> texts;
  for (const MentionRecord& rec : train.records) {
    texts.push_back(rec.ctxt_l);
    texts.push_back(rec.mention);
    texts.push_back(rec.ctxt_r);
  }
  for (const Entity& e : onto.entities) {
    texts.push_back(e.name);
    for (const std::string& s : e.synonyms) texts.push_back(s);
    texts.push_back(e.definition);
  }
  texts.push_back("nil it is a nil option .");
  return texts;
}

std::vector<std::string> gold_labels(const DatasetSplit& split) {
  std::vector<std::string> golds;
  golds.reserve(split.records.size());
  for (const MentionRecord& rec : split.records) golds.push_back(rec.gold);
  return golds;
}

EncoderConfig encoder_from_cfg(const RunConfig& cfg) {
  EncoderConfig ec;
  ec.embed_dim = cfg.embed_dim;
  ec.layers = cfg.layers;
  ec.heads = cfg.heads;
  ec.ffn_dim = cfg.ffn_dim;
  ec.seed = cfg.seed;
  return ec;
}

WordVectors resolve_word_vectors(Ctx& ctx, const Ontology& onto,
                                 const DatasetSplit* train) {
  if (!ctx.cfg.word_vectors.empty()) {
    ctx.note_input(ctx.cfg.word_vectors);
    return load_word_vectors(ctx.cfg.word_vectors);
  }
  if (train == nullptr) {
    throw ValidationError(
        "this method needs --word-vectors or --train (for the co-occurrence "
        "fallback)");
  }
  std::vector<std::string> texts = vocab_texts(*train, onto);
  return cooccurrence_vectors(texts, ctx.cfg.wv_dim);
}

std::vector<CandidateSet> make_candidates(Ctx& ctx, const Ontology& onto,
                                          const DatasetSplit& split,
                                          const Vocabulary* vocab,
                                          const EncoderModel* mention_encoder,
                                          const EntityIndex* index) {
  const std::string source = resolved_cands(ctx.cfg);
  if (source == "bm25") {
    std::vector<CandidateSet> sets;
    sets.reserve(split.records.size());
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      CandidateSet cs = bm25_rank(split.records[i].mention, onto, ctx.cfg.k);
      cs.mention_index = static_cast<int>(i);
      sets.push_back(std::move(cs));
    }
    return sets;
  }
  if (mention_encoder == nullptr || index == nullptr || vocab == nullptr) {
    throw ValidationError("bi-encoder candidates need --mention-encoder, "
                          "--index, and --vocab");
  }
  return retrieve_candidates(*mention_encoder, *index, split, *vocab, ctx.cfg.k,
                             ctx.cfg.mention_max);
}

std::vector<Eigen::VectorXd> string_features(const DatasetSplit& split,
                                             const Ontology& onto,
                                             const WordVectors& wv,
                                             int ctxt_window) {
  std::vector<Eigen::VectorXd> fmes;
  fmes.reserve(split.records.size());
  for (const MentionRecord& rec : split.records) {
    fmes.push_back(extract_features(rec, onto, wv, ctxt_window).string_match);
  }
  return fmes;
}

// ---- commands -------------------------------------------------------------

void run_prune(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  auto [pruned, removed] = prune(onto, ctx.cfg.fraction, ctx.cfg.seed);
  save_ontology(pruned, ctx.path("ontology.jsonl"));
  ctx.note_output(ctx.path("ontology.jsonl"));
  write_id_file(ctx, "removed_ids.txt", removed);
  ctx.log << "pruned " << removed.size() << " of " << onto.size() << " entities\n";
}

void run_diff(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.old_ontology, "--old-ontology", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  ctx.note_input(ctx.cfg.old_ontology);
  const Ontology newer = load_ontology(ctx.cfg.ontology);
  const Ontology older = load_ontology(ctx.cfg.old_ontology);
  MergeMap merges;
  if (!ctx.cfg.merges.empty()) {
    ctx.note_input(ctx.cfg.merges);
    merges = load_merge_map(ctx.cfg.merges);
  }
  const std::set<std::string> out_ids = version_diff(newer, older, merges);
  write_id_file(ctx, "out_of_kb_ids.txt", out_ids);
  ctx.log << out_ids.size() << " out-of-KB ids\n";
}

void run_build_dataset(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  const Ontology onto = load_ontology(ctx.cfg.ontology);

  Ontology target;
  MergeMap merges;
  std::set<std::string> out_ids;
  if (!ctx.cfg.old_ontology.empty()) {
    // Versioning: link against the older release. Golds recorded as merged
    // map onto their surviving old ids before relabeling.
    ctx.note_input(ctx.cfg.old_ontology);
    target = load_ontology(ctx.cfg.old_ontology);
    if (!ctx.cfg.merges.empty()) {
      ctx.note_input(ctx.cfg.merges);
      merges = load_merge_map(ctx.cfg.merges);
    }
    out_ids = version_diff(onto, target, merges);
  } else {
    auto [pruned, removed] = prune(onto, ctx.cfg.fraction, ctx.cfg.seed);
    target = std::move(pruned);
    out_ids = std::move(removed);
  }
  save_ontology(target, ctx.path("ontology.jsonl"));
  ctx.note_output(ctx.path("ontology.jsonl"));
  write_id_file(ctx, "out_of_kb_ids.txt", out_ids);

  std::vector<DatasetSplit> relabeled;
  const std::pair<const std::string*, const char*> splits[] = {
      {&ctx.cfg.train, "train"}, {&ctx.cfg.valid, "valid"}, {&ctx.cfg.test, "test"}};
  for (const auto& [path, name] : splits) {
    if (path->empty()) continue;
    ctx.note_input(*path);
    DatasetSplit split = load_mentions(*path, name);
    for (MentionRecord& rec : split.records) {
      auto it = merges.pairs.find(rec.gold);
      if (it != merges.pairs.end()) rec.gold = it->second;
    }
    split = relabel_nil(split, target);
    const fs::path out_path = ctx.path(std::string(name) + ".jsonl");
    save_mentions(split, out_path);
    ctx.note_output(out_path);
    relabeled.push_back(std::move(split));
  }

  const StatsTable table = split_stats(relabeled, target);
  write_text_file(ctx, "stats.txt", render_stats_text(table));
  nlohmann::json stats_json;
  stats_json["entities"] = table.n_entities;
  stats_json["entities_plus_synonyms"] = table.n_entities_plus_synonyms;
  for (const SplitStats& s : table.splits) {
    stats_json["splits"][s.name] = {{"mentions", s.n_mentions},
                                    {"out_of_kb", s.n_out_of_kb},
                                    {"pct_out_of_kb", s.pct_out_of_kb},
                                    {"in_kb", s.n_in_kb}};
  }
  write_text_file(ctx, "stats.json", stats_json.dump(2) + "\n");
  ctx.log << render_stats_text(table);
}

void run_stats(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  std::vector<DatasetSplit> splits;
  const std::pair<const std::string*, const char*> sources[] = {
      {&ctx.cfg.train, "train"}, {&ctx.cfg.valid, "valid"}, {&ctx.cfg.test, "test"}};
  for (const auto& [path, name] : sources) {
    if (path->empty()) continue;
    ctx.note_input(*path);
    splits.push_back(load_mentions(*path, name));
  }
  const StatsTable table = split_stats(splits, onto);
  write_text_file(ctx, "stats.txt", render_stats_text(table));
  ctx.log << render_stats_text(table);
}

void run_synth(Ctx& ctx) {
  SynthConfig sc;
  sc.n_entities = ctx.cfg.entities;
  sc.n_mentions = ctx.cfg.mentions;
  sc.seed = ctx.cfg.seed;
  const SynthData data = generate_synthetic(sc);
  save_ontology(data.ontology, ctx.path("ontology.jsonl"));
  ctx.note_output(ctx.path("ontology.jsonl"));
  for (const DatasetSplit* split : {&data.train, &data.valid, &data.test}) {
    const fs::path p = ctx.path(split->name + ".jsonl");
    save_mentions(*split, p);
    ctx.note_output(p);
  }
  ctx.log << "generated " << data.ontology.size() << " entities, "
          << data.train.records.size() + data.valid.records.size() +
                 data.test.records.size()
          << " mentions\n";
}

void run_train_bi(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.train, "--train", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  ctx.note_input(ctx.cfg.train);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  const DatasetSplit train = load_mentions(ctx.cfg.train, "train");

  const Vocabulary vocab = build_vocab(vocab_texts(train, onto), ctx.cfg.min_count);
  vocab.save(ctx.path("vocab.txt"));
  ctx.note_output(ctx.path("vocab.txt"));

  BiencoderConfig bc;
  bc.encoder = encoder_from_cfg(ctx.cfg);
  bc.mention_max = ctx.cfg.mention_max;
  bc.entity_max = ctx.cfg.entity_max;
  bc.epochs = ctx.cfg.bi_epochs;
  bc.batch_size = ctx.cfg.bi_batch;
  bc.lr = ctx.cfg.bi_lr;
  bc.weight_decay = ctx.cfg.weight_decay;
  bc.alpha = ctx.cfg.alpha;
  bc.synonym_augmentation = ctx.cfg.syn_augmentation;
  bc.nil_fine_tuned = resolved_nil_fine_tuned(ctx.cfg);
  bc.nil_rep = nil_variant_from_string(ctx.cfg.nil_rep);
  bc.seed = ctx.cfg.seed;
  const BiencoderModels models = train_biencoder(train, onto, vocab, bc);

  save_encoder(models.mention_encoder, ctx.path("mention_encoder.ckpt"));
  ctx.note_output(ctx.path("mention_encoder.ckpt"));
  save_encoder(models.entity_encoder, ctx.path("entity_encoder.ckpt"));
  ctx.note_output(ctx.path("entity_encoder.ckpt"));
  ctx.log << "trained bi-encoder on " << train.records.size() << " mentions\n";
}

void run_index(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.entity_encoder, "--entity-encoder", ctx.command);
  require(ctx.cfg.vocab, "--vocab", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  ctx.note_input(ctx.cfg.entity_encoder);
  ctx.note_input(ctx.cfg.vocab);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  const EncoderModel entity_encoder = load_encoder(ctx.cfg.entity_encoder);
  const Vocabulary vocab = Vocabulary::load(ctx.cfg.vocab);
  const EntityIndex index = build_index(
      entity_encoder, onto, nil_variant_from_string(ctx.cfg.nil_rep),
      ctx.cfg.syn_augmentation, vocab, ctx.cfg.entity_max);
  index.save(ctx.path("index.bin"));
  ctx.note_output(ctx.path("index.bin"));
  ctx.log << "indexed " << index.rows.size() << " rows\n";
}

void run_train_cross(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.train, "--train", ctx.command);
  require(ctx.cfg.vocab, "--vocab", ctx.command);
  const MethodTraits traits = method_traits(ctx.cfg.method);
  if (!traits.neural) {
    throw ValidationError("method " + ctx.cfg.method + " has no cross-encoder");
  }
  ctx.note_input(ctx.cfg.ontology);
  ctx.note_input(ctx.cfg.train);
  ctx.note_input(ctx.cfg.vocab);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  const DatasetSplit train = load_mentions(ctx.cfg.train, "train");
  const Vocabulary vocab = Vocabulary::load(ctx.cfg.vocab);

  EncoderModel mention_encoder;
  EntityIndex index;
  const bool use_bi = resolved_cands(ctx.cfg) == "bi";
  if (use_bi) {
    require(ctx.cfg.mention_encoder, "--mention-encoder", ctx.command);
    require(ctx.cfg.index, "--index", ctx.command);
    ctx.note_input(ctx.cfg.mention_encoder);
    ctx.note_input(ctx.cfg.index);
    mention_encoder = load_encoder(ctx.cfg.mention_encoder);
    index = EntityIndex::load(ctx.cfg.index);
  }
  const std::vector<CandidateSet> candidates =
      make_candidates(ctx, onto, train, &vocab, use_bi ? &mention_encoder : nullptr,
                      use_bi ? &index : nullptr);

  CrossencoderConfig cc;
  cc.encoder = encoder_from_cfg(ctx.cfg);
  cc.mention_max = ctx.cfg.mention_max;
  cc.entity_max = ctx.cfg.entity_max;
  cc.epochs = ctx.cfg.cross_epochs;
  cc.lr = ctx.cfg.cross_lr;
  cc.weight_decay = ctx.cfg.weight_decay;
  cc.lambda_nil = ctx.cfg.lambda_nil;
  cc.nil_rep = nil_variant_from_string(ctx.cfg.nil_rep);
  cc.synonym_concat = ctx.cfg.syn_concat;
  cc.nil_fine_tuned = resolved_nil_fine_tuned(ctx.cfg);
  cc.head = traits.head;
  cc.seed = ctx.cfg.seed;
  cc.log = &ctx.log;

  std::vector<Eigen::VectorXd> fmes;
  if (traits.head == NilHead::kDynamicFeatures) {
    const WordVectors wv = resolve_word_vectors(ctx, onto, &train);
    save_word_vectors(wv, ctx.path("word_vectors.txt"));
    ctx.note_output(ctx.path("word_vectors.txt"));
    fmes = string_features(train, onto, wv, ctx.cfg.ctxt_window);
    cc.fmes = &fmes;
  }

  const CrossModel model = train_crossencoder(train, candidates, onto, vocab, cc);
  save_cross_model(model, ctx.path("cross.ckpt"));
  ctx.note_output(ctx.path("cross.ckpt"));
  ctx.log << "trained cross-encoder (" << ctx.cfg.method << ") on "
          << train.records.size() << " mentions\n";
}

void run_predict(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.split, "--split", ctx.command);
  ctx.note_input(ctx.cfg.ontology);
  ctx.note_input(ctx.cfg.split);
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  const DatasetSplit split = load_mentions(ctx.cfg.split, "split");
  const MethodTraits traits = method_traits(ctx.cfg.method);

  std::vector<Prediction> preds;
  preds.reserve(split.records.size());

  if (ctx.cfg.method == "sieve") {
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      Prediction p = sieve_link(split.records[i], onto);
      p.mention_index = static_cast<int>(i);
      preds.push_back(std::move(p));
    }
  } else if (ctx.cfg.method == "ft_classifier") {
    require(ctx.cfg.train, "--train", ctx.command);
    ctx.note_input(ctx.cfg.train);
    const DatasetSplit train = load_mentions(ctx.cfg.train, "train");
    const WordVectors wv = resolve_word_vectors(ctx, onto, &train);
    std::vector<Eigen::VectorXd> feats;
    std::vector<int> labels;
    for (const MentionRecord& rec : train.records) {
      feats.push_back(extract_features(rec, onto, wv, ctx.cfg.ctxt_window).flat());
      labels.push_back(is_nil(rec.gold) ? 1 : 0);
    }
    FtTrainConfig ft_cfg;
    ft_cfg.lr = ctx.cfg.ft_lr;
    ft_cfg.iterations = ctx.cfg.ft_iters;
    const FtClassifier clf = ft_train(feats, labels, ft_cfg);
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      Prediction p = ft_link(clf, split.records[i], onto, wv, ctx.cfg.ctxt_window);
      p.mention_index = static_cast<int>(i);
      preds.push_back(std::move(p));
    }
  } else {
    require(ctx.cfg.cross, "--cross", ctx.command);
    require(ctx.cfg.vocab, "--vocab", ctx.command);
    ctx.note_input(ctx.cfg.cross);
    ctx.note_input(ctx.cfg.vocab);
    const CrossModel model = load_cross_model(ctx.cfg.cross);
    const Vocabulary vocab = Vocabulary::load(ctx.cfg.vocab);

    EncoderModel mention_encoder;
    EntityIndex index;
    const bool use_bi = resolved_cands(ctx.cfg) == "bi";
    if (use_bi) {
      require(ctx.cfg.mention_encoder, "--mention-encoder", ctx.command);
      require(ctx.cfg.index, "--index", ctx.command);
      ctx.note_input(ctx.cfg.mention_encoder);
      ctx.note_input(ctx.cfg.index);
      mention_encoder = load_encoder(ctx.cfg.mention_encoder);
      index = EntityIndex::load(ctx.cfg.index);
    }
    const std::vector<CandidateSet> candidates =
        make_candidates(ctx, onto, split, &vocab,
                        use_bi ? &mention_encoder : nullptr,
                        use_bi ? &index : nullptr);

    std::vector<Eigen::VectorXd> fmes;
    if (traits.head == NilHead::kDynamicFeatures) {
      require(ctx.cfg.train, "--train", ctx.command);  // rebuilds the vectors
      ctx.note_input(ctx.cfg.train);
      const DatasetSplit train = load_mentions(ctx.cfg.train, "train");
      const WordVectors wv = resolve_word_vectors(ctx, onto, &train);
      fmes = string_features(split, onto, wv, ctx.cfg.ctxt_window);
    }

    PredictOptions opts;
    opts.th_cross = ctx.cfg.th_cross;
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      if (!fmes.empty()) opts.fmes = &fmes[i];
      Prediction p = predict(model, split.records[i], candidates[i], onto, vocab,
                             traits.mode, opts);
      p.mention_index = static_cast<int>(i);
      preds.push_back(std::move(p));
    }
  }

  save_predictions(preds, ctx.path("predictions.jsonl"));
  ctx.note_output(ctx.path("predictions.jsonl"));
  ctx.log << "wrote " << preds.size() << " predictions (" << ctx.cfg.method
          << ")\n";
}

void run_eval(Ctx& ctx) {
  require(ctx.cfg.predictions, "--predictions", ctx.command);
  require(ctx.cfg.gold, "--gold", ctx.command);
  ctx.note_input(ctx.cfg.predictions);
  ctx.note_input(ctx.cfg.gold);
  const std::vector<Prediction> preds = load_predictions(ctx.cfg.predictions);
  const DatasetSplit gold_split = load_mentions(ctx.cfg.gold, "gold");
  const EvalReport report = evaluate(preds, gold_labels(gold_split));
  write_text_file(ctx, "report.json", report_to_json(report).dump(2) + "\n");
  write_text_file(ctx, "report.txt", render_report_text(report));
  ctx.log << render_report_text(report);
}

std::vector<int> parse_k_grid(const std::string& grid) {
  std::vector<int> ks;
  std::stringstream ss(grid);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ks.push_back(std::stoi(item));
  }
  if (ks.empty()) throw ValidationError("empty k grid");
  return ks;
}

void run_sweep_k(Ctx& ctx) {
  require(ctx.cfg.ontology, "--ontology", ctx.command);
  require(ctx.cfg.train, "--train", ctx.command);
  require(ctx.cfg.split, "--split", ctx.command);
  require(ctx.cfg.vocab, "--vocab", ctx.command);
  require(ctx.cfg.mention_encoder, "--mention-encoder", ctx.command);
  require(ctx.cfg.index, "--index", ctx.command);
  for (const std::string* p : {&ctx.cfg.ontology, &ctx.cfg.train, &ctx.cfg.split,
                               &ctx.cfg.vocab, &ctx.cfg.mention_encoder,
                               &ctx.cfg.index}) {
    ctx.note_input(*p);
  }
  const Ontology onto = load_ontology(ctx.cfg.ontology);
  const DatasetSplit train = load_mentions(ctx.cfg.train, "train");
  const DatasetSplit test = load_mentions(ctx.cfg.split, "test");
  const Vocabulary vocab = Vocabulary::load(ctx.cfg.vocab);
  const EncoderModel mention_encoder = load_encoder(ctx.cfg.mention_encoder);
  const EntityIndex index = EntityIndex::load(ctx.cfg.index);
  const MethodTraits traits = method_traits(ctx.cfg.method);
  if (!traits.neural) {
    throw ValidationError("sweep-k needs a cross-encoder method");
  }

  const std::vector<int> ks = parse_k_grid(ctx.cfg.k_grid);
  const int max_k = *std::max_element(ks.begin(), ks.end());
  const std::vector<CandidateSet> recall_sets = retrieve_candidates(
      mention_encoder, index, test, vocab, max_k, ctx.cfg.mention_max);
  const std::map<int, double> recall = recall_at_k(recall_sets, gold_labels(test));

  nlohmann::json summary_json = nlohmann::json::array();
  std::ostringstream summary;
  summary << std::fixed << std::setprecision(4);
  summary << std::setw(6) << "k" << std::setw(10) << "A" << std::setw(10)
          << "F1_o" << std::setw(10) << "F1_in" << std::setw(12) << "recall@k"
          << "\n";
  for (const int k : ks) {
    RunConfig sub = ctx.cfg;
    sub.k = k;
    const fs::path k_dir = ctx.path("k_" + std::to_string(k));
    fs::create_directories(k_dir);

    const std::vector<CandidateSet> train_cands = retrieve_candidates(
        mention_encoder, index, train, vocab, k, ctx.cfg.mention_max);
    CrossencoderConfig cc;
    cc.encoder = encoder_from_cfg(ctx.cfg);
    cc.mention_max = ctx.cfg.mention_max;
    cc.entity_max = ctx.cfg.entity_max;
    cc.epochs = ctx.cfg.cross_epochs;
    cc.lr = ctx.cfg.cross_lr;
    cc.weight_decay = ctx.cfg.weight_decay;
    cc.lambda_nil = ctx.cfg.lambda_nil;
    cc.nil_rep = nil_variant_from_string(ctx.cfg.nil_rep);
    cc.synonym_concat = ctx.cfg.syn_concat;
    cc.nil_fine_tuned = resolved_nil_fine_tuned(ctx.cfg);
    cc.head = traits.head;
    cc.seed = ctx.cfg.seed;
    const CrossModel model = train_crossencoder(train, train_cands, onto, vocab, cc);

    const std::vector<CandidateSet> test_cands = retrieve_candidates(
        mention_encoder, index, test, vocab, k, ctx.cfg.mention_max);
    std::vector<Prediction> preds;
    PredictOptions opts;
    opts.th_cross = ctx.cfg.th_cross;
    for (std::size_t i = 0; i < test.records.size(); ++i) {
      Prediction p = predict(model, test.records[i], test_cands[i], onto, vocab,
                             traits.mode, opts);
      p.mention_index = static_cast<int>(i);
      preds.push_back(std::move(p));
    }
    save_predictions(preds, k_dir / "predictions.jsonl");
    ctx.note_output(k_dir / "predictions.jsonl");
    const EvalReport report = evaluate(preds, gold_labels(test));
    {
      std::ofstream out(k_dir / "report.json");
      out << report_to_json(report).dump(2) << "\n";
    }
    ctx.note_output(k_dir / "report.json");

    const double r_at_k = recall.count(k) ? recall.at(k) : recall.rbegin()->second;
    summary << std::setw(6) << k << std::setw(10) << report.accuracy
            << std::setw(10) << report.f1_o << std::setw(10) << report.f1_in
            << std::setw(12) << r_at_k << "\n";
    summary_json.push_back({{"k", k},
                            {"A", report.accuracy},
                            {"F1_o", report.f1_o},
                            {"F1_in", report.f1_in},
                            {"recall_at_k", r_at_k}});
    ctx.log << "k=" << k << " F1_o=" << report.f1_o << "\n";
  }
  write_text_file(ctx, "sweep_summary.txt", summary.str());
  write_text_file(ctx, "sweep_summary.json", summary_json.dump(2) + "\n");
}

void run_replay(Ctx& ctx);

void dispatch(const std::string& command, Ctx& ctx) {
  if (command == "prune") return run_prune(ctx);
  if (command == "diff") return run_diff(ctx);
  if (command == "build-dataset") return run_build_dataset(ctx);
  if (command == "stats") return run_stats(ctx);
  if (command == "synth") return run_synth(ctx);
  if (command == "train-bi") return run_train_bi(ctx);
  if (command == "index") return run_index(ctx);
  if (command == "train-cross") return run_train_cross(ctx);
  if (command == "predict") return run_predict(ctx);
  if (command == "eval") return run_eval(ctx);
  if (command == "sweep-k") return run_sweep_k(ctx);
  if (command == "replay") return run_replay(ctx);
  throw ValidationError("unknown command " + command);
}

// Re-runs the recorded command in place and verifies every output hash, so
// a successful replay proves byte-for-byte reproduction.
void run_replay(Ctx& ctx) {
  require(ctx.cfg.manifest, "--manifest", ctx.command);
  const Manifest recorded = read_manifest(ctx.cfg.manifest);
  for (const auto& [path, hash] : recorded.inputs) {
    if (hash_file_hex(path) != hash) {
      throw ValidationError("input " + path + " changed since the recorded run");
    }
  }
  const RunConfig cfg = config_from_json(recorded.config);
  run_command(recorded.command, cfg, ctx.log);
  std::vector<std::string> mismatches;
  for (const auto& [path, hash] : recorded.outputs) {
    if (!fs::exists(path) || hash_file_hex(path) != hash) {
      mismatches.push_back(path);
    }
  }
  if (!mismatches.empty()) {
    std::string msg = "replay outputs differ:";
    for (const std::string& m : mismatches) msg += " " + m;
    throw ValidationError(msg);
  }
  ctx.log << "replay reproduced " << recorded.outputs.size()
          << " outputs byte-for-byte\n";
}

}  // namespace

void run_command(const std::string& command, const RunConfig& cfg,
                 std::ostream& log) {
  Ctx ctx(cfg, command, log);
  try {
    dispatch(command, ctx);
    if (command != "replay") ctx.commit();
  } catch (...) {
    ctx.cleanup();
    throw;
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  return nlohmann::json{
      {"ontology", c.ontology},
      {"old_ontology", c.old_ontology},
      {"merges", c.merges},
      {"train", c.train},
      {"valid", c.valid},
      {"test", c.test},
      {"split", c.split},
      {"word_vectors", c.word_vectors},
      {"mention_encoder", c.mention_encoder},
      {"entity_encoder", c.entity_encoder},
      {"index", c.index},
      {"cross", c.cross},
      {"vocab", c.vocab},
      {"predictions", c.predictions},
      {"gold", c.gold},
      {"manifest", c.manifest},
      {"out", c.out},
      {"method", c.method},
      {"k", c.k},
      {"k_grid", c.k_grid},
      {"nil_rep", c.nil_rep},
      {"nil_fine_tuned", c.nil_fine_tuned},
      {"cands", c.cands},
      {"fraction", c.fraction},
      {"th_cross", c.th_cross},
      {"lambda_nil", c.lambda_nil},
      {"alpha", c.alpha},
      {"syn_augmentation", c.syn_augmentation},
      {"syn_concat", c.syn_concat},
      {"embed_dim", c.embed_dim},
      {"layers", c.layers},
      {"heads", c.heads},
      {"ffn_dim", c.ffn_dim},
      {"mention_max", c.mention_max},
      {"entity_max", c.entity_max},
      {"min_count", c.min_count},
      {"bi_epochs", c.bi_epochs},
      {"cross_epochs", c.cross_epochs},
      {"bi_batch", c.bi_batch},
      {"bi_lr", c.bi_lr},
      {"cross_lr", c.cross_lr},
      {"weight_decay", c.weight_decay},
      {"wv_dim", c.wv_dim},
      {"ft_lr", c.ft_lr},
      {"ft_iters", c.ft_iters},
      {"ctxt_window", c.ctxt_window},
      {"entities", c.entities},
      {"mentions", c.mentions},
      {"seed", c.seed}};
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.ontology = j.value("ontology", c.ontology);
  c.old_ontology = j.value("old_ontology", c.old_ontology);
  c.merges = j.value("merges", c.merges);
  c.train = j.value("train", c.train);
  c.valid = j.value("valid", c.valid);
  c.test = j.value("test", c.test);
  c.split = j.value("split", c.split);
  c.word_vectors = j.value("word_vectors", c.word_vectors);
  c.mention_encoder = j.value("mention_encoder", c.mention_encoder);
  c.entity_encoder = j.value("entity_encoder", c.entity_encoder);
  c.index = j.value("index", c.index);
  c.cross = j.value("cross", c.cross);
  c.vocab = j.value("vocab", c.vocab);
  c.predictions = j.value("predictions", c.predictions);
  c.gold = j.value("gold", c.gold);
  c.manifest = j.value("manifest", c.manifest);
  c.out = j.value("out", c.out);
  c.method = j.value("method", c.method);
  c.k = j.value("k", c.k);
  c.k_grid = j.value("k_grid", c.k_grid);
  c.nil_rep = j.value("nil_rep", c.nil_rep);
  c.nil_fine_tuned = j.value("nil_fine_tuned", c.nil_fine_tuned);
  c.cands = j.value("cands", c.cands);
  c.fraction = j.value("fraction", c.fraction);
  c.th_cross = j.value("th_cross", c.th_cross);
  c.lambda_nil = j.value("lambda_nil", c.lambda_nil);
  c.alpha = j.value("alpha", c.alpha);
  c.syn_augmentation = j.value("syn_augmentation", c.syn_augmentation);
  c.syn_concat = j.value("syn_concat", c.syn_concat);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.mention_max = j.value("mention_max", c.mention_max);
  c.entity_max = j.value("entity_max", c.entity_max);
  c.min_count = j.value("min_count", c.min_count);
  c.bi_epochs = j.value("bi_epochs", c.bi_epochs);
  c.cross_epochs = j.value("cross_epochs", c.cross_epochs);
  c.bi_batch = j.value("bi_batch", c.bi_batch);
  c.bi_lr = j.value("bi_lr", c.bi_lr);
  c.cross_lr = j.value("cross_lr", c.cross_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.wv_dim = j.value("wv_dim", c.wv_dim);
  c.ft_lr = j.value("ft_lr", c.ft_lr);
  c.ft_iters = j.value("ft_iters", c.ft_iters);
  c.ctxt_window = j.value("ctxt_window", c.ctxt_window);
  c.entities = j.value("entities", c.entities);
  c.mentions = j.value("mentions", c.mentions);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// One `key = value` assignment. Keys use the flag spelling without dashes;
// either separator style works ("nil-rep" or "nil_rep").
void apply_config_entry(RunConfig& c, std::string key, const std::string& value) {
  std::replace(key.begin(), key.end(), '-', '_');
  const auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ValidationError("config key " + key + " expects true/false");
  };
  if (key == "ontology") c.ontology = value;
  else if (key == "old_ontology") c.old_ontology = value;
  else if (key == "merges") c.merges = value;
  else if (key == "train") c.train = value;
  else if (key == "valid") c.valid = value;
  else if (key == "test") c.test = value;
  else if (key == "split") c.split = value;
  else if (key == "word_vectors") c.word_vectors = value;
  else if (key == "mention_encoder") c.mention_encoder = value;
  else if (key == "entity_encoder") c.entity_encoder = value;
  else if (key == "index") c.index = value;
  else if (key == "cross") c.cross = value;
  else if (key == "vocab") c.vocab = value;
  else if (key == "predictions") c.predictions = value;
  else if (key == "gold") c.gold = value;
  else if (key == "manifest") c.manifest = value;
  else if (key == "out") c.out = value;
  else if (key == "method") c.method = value;
  else if (key == "k") c.k = std::stoi(value);
  else if (key == "k_grid") c.k_grid = value;
  else if (key == "nil_rep") c.nil_rep = value;
  else if (key == "nil_fine_tuned") c.nil_fine_tuned = value;
  else if (key == "cands") c.cands = value;
  else if (key == "fraction") c.fraction = std::stod(value);
  else if (key == "th_cross") c.th_cross = std::stod(value);
  else if (key == "lambda_nil") c.lambda_nil = std::stod(value);
  else if (key == "alpha") c.alpha = std::stod(value);
  else if (key == "syn_augmentation") c.syn_augmentation = as_bool();
  else if (key == "syn_concat") c.syn_concat = as_bool();
  else if (key == "embed_dim") c.embed_dim = std::stoi(value);
  else if (key == "layers") c.layers = std::stoi(value);
  else if (key == "heads") c.heads = std::stoi(value);
  else if (key == "ffn_dim") c.ffn_dim = std::stoi(value);
  else if (key == "mention_max") c.mention_max = std::stoi(value);
  else if (key == "entity_max") c.entity_max = std::stoi(value);
  else if (key == "min_count") c.min_count = std::stoi(value);
  else if (key == "bi_epochs") c.bi_epochs = std::stoi(value);
  else if (key == "cross_epochs") c.cross_epochs = std::stoi(value);
  else if (key == "bi_batch") c.bi_batch = std::stoi(value);
  else if (key == "bi_lr") c.bi_lr = std::stod(value);
  else if (key == "cross_lr") c.cross_lr = std::stod(value);
  else if (key == "weight_decay") c.weight_decay = std::stod(value);
  else if (key == "wv_dim") c.wv_dim = std::stoi(value);
  else if (key == "ft_lr") c.ft_lr = std::stod(value);
  else if (key == "ft_iters") c.ft_iters = std::stoi(value);
  else if (key == "ctxt_window") c.ctxt_window = std::stoi(value);
  else if (key == "entities") c.entities = std::stoi(value);
  else if (key == "mentions") c.mentions = std::stoi(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else throw ValidationError("unknown config key \"" + key + "\"");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": expected key = value");
    }
    try {
      apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument&) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": bad numeric value");
    }
  }
}

}  // namespace

int cli_main(const std::vector<std::string>& args_in) {
  // The config file applies first so that explicit flags override it.
  std::vector<std::string> args;
  std::vector<std::string> config_files;
  for (std::size_t i = 0; i < args_in.size(); ++i) {
    if (args_in[i] == "--config" && i + 1 < args_in.size()) {
      config_files.push_back(args_in[++i]);
    } else if (args_in[i].rfind("--config=", 0) == 0) {
      config_files.push_back(args_in[i].substr(9));
    } else {
      args.push_back(args_in[i]);
    }
  }

  CLI::App app{"NIL-aware entity linking pipeline"};
  app.require_subcommand(1);
  RunConfig cfg;
  try {
    for (const std::string& file : config_files) load_config_file(cfg, file);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const std::vector<std::string> commands = {
      "prune",      "diff",    "build-dataset", "stats",  "synth",
      "train-bi",   "index",   "train-cross",   "predict", "eval",
      "sweep-k",    "replay"};
  std::string config_help;  // consumed before parsing; listed for --help
  for (const std::string& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_help, "key = value configuration file");
    sub->add_option("--ontology", cfg.ontology);
    sub->add_option("--old-ontology", cfg.old_ontology);
    sub->add_option("--merges", cfg.merges);
    sub->add_option("--train", cfg.train);
    sub->add_option("--valid", cfg.valid);
    sub->add_option("--test", cfg.test);
    sub->add_option("--split", cfg.split);
    sub->add_option("--word-vectors", cfg.word_vectors);
    sub->add_option("--mention-encoder", cfg.mention_encoder);
    sub->add_option("--entity-encoder", cfg.entity_encoder);
    sub->add_option("--index", cfg.index);
    sub->add_option("--cross", cfg.cross);
    sub->add_option("--vocab", cfg.vocab);
    sub->add_option("--predictions", cfg.predictions);
    sub->add_option("--gold", cfg.gold);
    sub->add_option("--manifest", cfg.manifest);
    sub->add_option("--out", cfg.out);
    sub->add_option("--method", cfg.method);
    sub->add_option("--k", cfg.k);
    sub->add_option("--k-grid", cfg.k_grid);
    sub->add_option("--nil-rep", cfg.nil_rep);
    sub->add_option("--nil-fine-tuned", cfg.nil_fine_tuned);
    sub->add_option("--cands", cfg.cands);
    sub->add_option("--fraction", cfg.fraction);
    sub->add_option("--th-cross", cfg.th_cross);
    sub->add_option("--lambda-nil", cfg.lambda_nil);
    sub->add_option("--alpha", cfg.alpha);
    sub->add_option("--syn-augmentation", cfg.syn_augmentation);
    sub->add_option("--syn-concat", cfg.syn_concat);
    sub->add_option("--embed-dim", cfg.embed_dim);
    sub->add_option("--layers", cfg.layers);
    sub->add_option("--heads", cfg.heads);
    sub->add_option("--ffn-dim", cfg.ffn_dim);
    sub->add_option("--mention-max", cfg.mention_max);
    sub->add_option("--entity-max", cfg.entity_max);
    sub->add_option("--min-count", cfg.min_count);
    sub->add_option("--bi-epochs", cfg.bi_epochs);
    sub->add_option("--cross-epochs", cfg.cross_epochs);
    sub->add_option("--bi-batch", cfg.bi_batch);
    sub->add_option("--bi-lr", cfg.bi_lr);
    sub->add_option("--cross-lr", cfg.cross_lr);
    sub->add_option("--weight-decay", cfg.weight_decay);
    sub->add_option("--wv-dim", cfg.wv_dim);
    sub->add_option("--ft-lr", cfg.ft_lr);
    sub->add_option("--ft-iters", cfg.ft_iters);
    sub->add_option("--ctxt-window", cfg.ctxt_window);
    sub->add_option("--entities", cfg.entities);
    sub->add_option("--mentions", cfg.mentions);
    sub->add_option("--seed", cfg.seed);
  }

  std::vector<const char*> argv;
  argv.push_back("nilel");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    run_command(command, cfg, std::cout);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace nilel
