#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nilel/cli.hpp"
#include "nilel/manifest.hpp"
#include "nilel/metrics.hpp"

#include <json.hpp>

using namespace nilel;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

int run(const std::vector<std::string>& args) { return cli_main(args); }

// Small synthetic corpus on disk, shared by the pipeline tests.
struct Workspace {
  fs::path dir;
  fs::path onto, train, valid, test;

  explicit Workspace(const std::string& name, int entities = 12, int mentions = 60) {
    dir = fresh_dir(name);
    REQUIRE(run({"synth", "--entities", std::to_string(entities), "--mentions",
                 std::to_string(mentions), "--seed", "3", "--out",
                 (dir / "data").string()}) == 0);
    onto = dir / "data" / "ontology.jsonl";
    train = dir / "data" / "train.jsonl";
    valid = dir / "data" / "valid.jsonl";
    test = dir / "data" / "test.jsonl";
  }
};

const std::vector<std::string> kTinyEncoderFlags = {
    "--embed-dim", "8",  "--layers",     "1",  "--heads",      "2",
    "--ffn-dim",   "12", "--mention-max", "12", "--entity-max", "20"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyEncoderFlags.begin(), kTinyEncoderFlags.end());
  return args;
}

}  // namespace

TEST_CASE("usage errors exit with 1, validation with 2") {
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({"prune", "--no-such-flag", "1"}) == 1);
  // missing required input
  CHECK(run({"prune", "--out", fresh_dir("cli_prune_noin").string()}) == 2);
  // unreadable input file
  CHECK(run({"prune", "--ontology", "/nonexistent/onto.jsonl", "--out",
             fresh_dir("cli_prune_badin").string()}) == 2);
}

TEST_CASE("prune runs are deterministic and leave a manifest") {
  const Workspace ws("cli_ws_prune");
  const fs::path out1 = ws.dir / "p1";
  const fs::path out2 = ws.dir / "p2";
  for (const fs::path& out : {out1, out2}) {
    CHECK(run({"prune", "--ontology", ws.onto.string(), "--fraction", "0.2",
               "--seed", "1", "--out", out.string()}) == 0);
  }
  CHECK(slurp(out1 / "ontology.jsonl") == slurp(out2 / "ontology.jsonl"));
  CHECK(slurp(out1 / "removed_ids.txt") == slurp(out2 / "removed_ids.txt"));

  // re-running into the same directory reproduces the manifest byte-for-byte
  const std::string manifest_before = slurp(out1 / "manifest.json");
  CHECK(run({"prune", "--ontology", ws.onto.string(), "--fraction", "0.2",
             "--seed", "1", "--out", out1.string()}) == 0);
  CHECK(slurp(out1 / "manifest.json") == manifest_before);

  const Manifest m = read_manifest(out1 / "manifest.json");
  CHECK(m.command == "prune");
  CHECK(m.inputs.count(ws.onto.string()) == 1);
  CHECK(m.outputs.size() == 2);
}

TEST_CASE("eval reproduces the worked example report") {
  const fs::path dir = fresh_dir("cli_eval");
  write_file(dir / "gold.jsonl",
             R"({"doc_id":"d","mention":"m1","ctxt_l":"","ctxt_r":"","gold":"e1"})" "\n"
             R"({"doc_id":"d","mention":"m2","ctxt_l":"","ctxt_r":"","gold":"e2"})" "\n"
             R"({"doc_id":"d","mention":"m3","ctxt_l":"","ctxt_r":"","gold":"NIL"})" "\n"
             R"({"doc_id":"d","mention":"m4","ctxt_l":"","ctxt_r":"","gold":"NIL"})" "\n"
             R"({"doc_id":"d","mention":"m5","ctxt_l":"","ctxt_r":"","gold":"e3"})" "\n");
  write_file(dir / "preds.jsonl",
             R"({"i":0,"pred":"e1","score":1.0,"is_nil_prob":null})" "\n"
             R"({"i":1,"pred":"e9","score":1.0,"is_nil_prob":null})" "\n"
             R"({"i":2,"pred":"NIL","score":1.0,"is_nil_prob":null})" "\n"
             R"({"i":3,"pred":"e4","score":1.0,"is_nil_prob":null})" "\n"
             R"({"i":4,"pred":"NIL","score":1.0,"is_nil_prob":null})" "\n");
  CHECK(run({"eval", "--predictions", (dir / "preds.jsonl").string(), "--gold",
             (dir / "gold.jsonl").string(), "--out", (dir / "report").string()}) == 0);
  const EvalReport r = report_from_json(
      nlohmann::json::parse(slurp(dir / "report" / "report.json")));
  CHECK(r.f1_o == doctest::Approx(0.5));
  CHECK(r.accuracy == doctest::Approx(0.4));
}

TEST_CASE("config file values apply and flags override them") {
  const Workspace ws("cli_ws_cfg");
  const fs::path cfg = ws.dir / "run.cfg";
  write_file(cfg, "fraction = 0.5\nseed = 9\n");
  const fs::path out_cfg = ws.dir / "cfg_out";
  CHECK(run({"prune", "--config", cfg.string(), "--ontology", ws.onto.string(),
             "--out", out_cfg.string()}) == 0);
  // 12 entities, fraction 0.5 -> 6 removed
  std::istringstream removed(slurp(out_cfg / "removed_ids.txt"));
  long lines = 0;
  std::string line;
  while (std::getline(removed, line)) ++lines;
  CHECK(lines == 6);

  const fs::path out_flag = ws.dir / "flag_out";
  CHECK(run({"prune", "--config", cfg.string(), "--ontology", ws.onto.string(),
             "--fraction", "0.25", "--out", out_flag.string()}) == 0);
  std::istringstream removed2(slurp(out_flag / "removed_ids.txt"));
  lines = 0;
  while (std::getline(removed2, line)) ++lines;
  CHECK(lines == 3);
}

TEST_CASE("build-dataset relabels against the pruned ontology") {
  const Workspace ws("cli_ws_bd");
  const fs::path out = ws.dir / "dataset";
  CHECK(run({"build-dataset", "--ontology", ws.onto.string(), "--train",
             ws.train.string(), "--valid", ws.valid.string(), "--test",
             ws.test.string(), "--fraction", "0.25", "--seed", "5", "--out",
             out.string()}) == 0);
  CHECK(fs::exists(out / "ontology.jsonl"));
  CHECK(fs::exists(out / "train.jsonl"));
  CHECK(fs::exists(out / "stats.json"));
  const nlohmann::json stats = nlohmann::json::parse(slurp(out / "stats.json"));
  CHECK(stats["entities"].get<long>() == 9);  // 12 - 3 removed
  const std::string train_text = slurp(out / "train.jsonl");
  CHECK(train_text.find("\"NIL\"") != std::string::npos);
}

TEST_CASE("diff composes with versioning data") {
  const Workspace ws("cli_ws_diff");
  const fs::path pruned_out = ws.dir / "pruned";
  REQUIRE(run({"prune", "--ontology", ws.onto.string(), "--fraction", "0.25",
               "--seed", "5", "--out", pruned_out.string()}) == 0);
  const fs::path diff_out = ws.dir / "diff";
  CHECK(run({"diff", "--ontology", ws.onto.string(), "--old-ontology",
             (pruned_out / "ontology.jsonl").string(), "--out",
             diff_out.string()}) == 0);
  CHECK(slurp(diff_out / "out_of_kb_ids.txt") ==
        slurp(pruned_out / "removed_ids.txt"));
}

TEST_CASE("full tiny pipeline: train, index, cross, predict, eval, replay") {
  const Workspace ws("cli_ws_pipe");
  const fs::path ds = ws.dir / "ds";
  REQUIRE(run({"build-dataset", "--ontology", ws.onto.string(), "--train",
               ws.train.string(), "--valid", ws.valid.string(), "--test",
               ws.test.string(), "--fraction", "0.25", "--seed", "5", "--out",
               ds.string()}) == 0);
  const std::string pruned = (ds / "ontology.jsonl").string();
  const std::string train = (ds / "train.jsonl").string();
  const std::string test = (ds / "test.jsonl").string();

  const fs::path bi = ws.dir / "bi";
  REQUIRE(run(with_tiny({"train-bi", "--ontology", pruned, "--train", train,
                         "--bi-epochs", "1", "--seed", "7", "--out",
                         bi.string()})) == 0);
  CHECK(fs::exists(bi / "mention_encoder.ckpt"));
  CHECK(fs::exists(bi / "vocab.txt"));

  const fs::path index_dir = ws.dir / "index";
  REQUIRE(run(with_tiny({"index", "--ontology", pruned, "--entity-encoder",
                         (bi / "entity_encoder.ckpt").string(), "--vocab",
                         (bi / "vocab.txt").string(), "--out",
                         index_dir.string()})) == 0);

  const fs::path cross = ws.dir / "cross";
  REQUIRE(run(with_tiny({"train-cross", "--ontology", pruned, "--train", train,
                         "--vocab", (bi / "vocab.txt").string(),
                         "--mention-encoder", (bi / "mention_encoder.ckpt").string(),
                         "--index", (index_dir / "index.bin").string(),
                         "--method", "blinkout", "--k", "4", "--cross-epochs",
                         "1", "--seed", "7", "--out", cross.string()})) == 0);
  CHECK(fs::exists(cross / "cross.ckpt"));

  const fs::path preds = ws.dir / "preds";
  REQUIRE(run(with_tiny({"predict", "--ontology", pruned, "--split", test,
                         "--vocab", (bi / "vocab.txt").string(),
                         "--mention-encoder", (bi / "mention_encoder.ckpt").string(),
                         "--index", (index_dir / "index.bin").string(), "--cross",
                         (cross / "cross.ckpt").string(), "--method", "blinkout",
                         "--k", "4", "--out", preds.string()})) == 0);
  CHECK(fs::exists(preds / "predictions.jsonl"));

  const fs::path report = ws.dir / "report";
  REQUIRE(run({"eval", "--predictions", (preds / "predictions.jsonl").string(),
               "--gold", test, "--out", report.string()}) == 0);
  CHECK(fs::exists(report / "report.json"));

  // replay re-runs predict in place and must reproduce every byte
  CHECK(run({"replay", "--manifest", (preds / "manifest.json").string()}) == 0);

  // sieve and bm25 methods consume the same eval path
  const fs::path sieve = ws.dir / "sieve";
  REQUIRE(run({"predict", "--ontology", pruned, "--split", test, "--method",
               "sieve", "--out", sieve.string()}) == 0);
  REQUIRE(run({"eval", "--predictions", (sieve / "predictions.jsonl").string(),
               "--gold", test, "--out", (ws.dir / "sieve_report").string()}) == 0);

  const fs::path ft = ws.dir / "ft";
  REQUIRE(run({"predict", "--ontology", pruned, "--split", test, "--train",
               train, "--method", "ft_classifier", "--out", ft.string()}) == 0);
  REQUIRE(run({"eval", "--predictions", (ft / "predictions.jsonl").string(),
               "--gold", test, "--out", (ws.dir / "ft_report").string()}) == 0);
}

TEST_CASE("replay rejects changed inputs") {
  const Workspace ws("cli_ws_replay");
  const fs::path out = ws.dir / "pruned";
  REQUIRE(run({"prune", "--ontology", ws.onto.string(), "--fraction", "0.2",
               "--seed", "1", "--out", out.string()}) == 0);
  // tamper with the input
  std::ofstream(ws.onto, std::ios::app) <<
      R"({"id":"EXTRA","name":"extra entity"})" << "\n";
  CHECK(run({"replay", "--manifest", (out / "manifest.json").string()}) == 2);
}

TEST_CASE("failed runs leave no partial outputs") {
  const Workspace ws("cli_ws_cleanup");
  const fs::path out = ws.dir / "bad";
  // diff with a missing old ontology fails after out dir exists
  CHECK(run({"diff", "--ontology", ws.onto.string(), "--old-ontology",
             "/nonexistent/old.jsonl", "--out", out.string()}) == 2);
  CHECK_FALSE(fs::exists(out / "out_of_kb_ids.txt"));
  CHECK_FALSE(fs::exists(out / "manifest.json"));
}

TEST_CASE("stats command writes the table") {
  const Workspace ws("cli_ws_stats");
  const fs::path out = ws.dir / "stats";
  CHECK(run({"stats", "--ontology", ws.onto.string(), "--train",
             ws.train.string(), "--test", ws.test.string(), "--out",
             out.string()}) == 0);
  const std::string text = slurp(out / "stats.txt");
  CHECK(text.find("train") != std::string::npos);
  CHECK(text.find("entities:") != std::string::npos);
}
