#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "catch_amalgamated.hpp"
#include "pkde/cli.hpp"
#include "pkde/json_compat.hpp"

using namespace pkde;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("pkde_pipe_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json::json read_json(const fs::path& p) { return json::json::parse(read_file_bytes(p.string())); }

}  // namespace

TEST_CASE("library pipeline: synth, label, train, eval, report", "[pipeline]") {
  const auto dir = fresh_dir("lib");

  cli::SynthCmd synth;
  synth.layers = 12;
  synth.width = 32;
  synth.height = 32;
  synth.seed = 404;
  synth.out_dir = (dir / "data").string();
  synth.base_rate = 2.0;
  REQUIRE(cli::run_synth(synth) == 0);

  const auto manifest_path = dir / "data" / "manifest.json";
  REQUIRE(fs::exists(manifest_path));
  const auto m0 = load_manifest(manifest_path);
  CHECK(m0.triplet_count() == 120);
  CHECK(m0.image_width == 32);

  cli::LabelCmd label;
  label.manifest_path = manifest_path.string();
  label.bandwidth = 5.0;
  REQUIRE(cli::run_label(label) == 0);
  const auto m1 = load_manifest(manifest_path);
  for (const auto& e : m1.entries) {
    REQUIRE(e.has_label());
    REQUIRE(fs::exists(dir / "data" / e.pp_path));
  }

  cli::TrainCmd train;
  train.manifest_path = manifest_path.string();
  train.out_dir = (dir / "run").string();
  train.depth = 2;
  train.base_width = 4;
  train.epochs = 2;
  train.batch_size = 8;
  train.learning_rate = 2e-3;
  train.seed = 7;
  REQUIRE(cli::run_train(train) == 0);
  REQUIRE(fs::exists(dir / "run" / "weights.pkw"));
  const auto report_json_doc = read_json(dir / "run" / "train_report.json");
  CHECK(report_json_doc.at("epochs").size() == 2);
  CHECK(!report_json_doc.contains("wall_seconds"));

  cli::EvalCmd eval;
  eval.manifest_path = manifest_path.string();
  eval.out_dir = (dir / "eval").string();
  eval.weights_path = (dir / "run" / "weights.pkw").string();
  eval.split_file = (dir / "run" / "split.json").string();
  eval.subset = "test";
  REQUIRE(cli::run_eval(eval) == 0);
  const auto scores = read_json(dir / "eval" / "scores.json");
  CHECK(scores.at("scores").size() == 24);  // 20% of 120

  cli::ReportCmd report;
  report.scores_path = (dir / "eval" / "scores.json").string();
  report.manifest_path = manifest_path.string();
  report.out_dir = (dir / "report").string();
  REQUIRE(cli::run_report(report) == 0);
  const auto rep = read_json(dir / "report" / "report.json");
  CHECK(rep.at("groups").contains("part"));
  CHECK(rep.at("groups").contains("laser_power"));
  // Complex parts carry sections after eval.
  bool any_section = false;
  for (const auto& s : scores.at("scores"))
    any_section |= s.contains("section");
  CHECK(any_section);
  CHECK(fs::exists(dir / "report" / "report.csv"));
}

TEST_CASE("eval on perfect predictions reports zero error", "[pipeline]") {
  const auto dir = fresh_dir("perfect");
  cli::SynthCmd synth;
  synth.layers = 4;
  synth.width = 32;
  synth.height = 32;
  synth.seed = 11;
  synth.out_dir = (dir / "data").string();
  REQUIRE(cli::run_synth(synth) == 0);
  const auto manifest_path = dir / "data" / "manifest.json";
  cli::LabelCmd label;
  label.manifest_path = manifest_path.string();
  label.bandwidth = 5.0;
  REQUIRE(cli::run_label(label) == 0);

  // Copy the labels as the "predictions".
  const auto m = load_manifest(manifest_path);
  const auto pred_dir = dir / "preds";
  fs::create_directories(pred_dir);
  for (const auto& e : m.entries) {
    fs::copy_file(dir / "data" / e.pp_path,
                  pred_dir / (cli::layer_tag(e.part, e.layer) + "_pp.tens"));
  }
  cli::EvalCmd eval;
  eval.manifest_path = manifest_path.string();
  eval.out_dir = (dir / "eval").string();
  eval.pred_dir = pred_dir.string();
  eval.subset = "all";
  REQUIRE(cli::run_eval(eval) == 0);
  const auto scores = read_json(dir / "eval" / "scores.json");
  for (const auto& s : scores.at("scores")) CHECK(s.at("mae").get<double>() == 0.0);
}

TEST_CASE("manifest and split round-trips", "[pipeline]") {
  const auto dir = fresh_dir("roundtrip");
  cli::SynthCmd synth;
  synth.layers = 3;
  synth.width = 16;
  synth.height = 16;
  synth.seed = 2;
  synth.out_dir = (dir / "data").string();
  REQUIRE(cli::run_synth(synth) == 0);
  const auto path = dir / "data" / "manifest.json";
  const auto m = load_manifest(path);
  save_manifest(dir / "copy.json", m);
  const auto m2 = load_manifest(dir / "copy.json");
  CHECK(manifest_to_json(m) == manifest_to_json(m2));

  cli::LabelCmd label;
  label.manifest_path = path.string();
  label.bandwidth = 4.0;
  REQUIRE(cli::run_label(label) == 0);
  const auto labeled = load_manifest(path);
  const auto d = load_dataset(labeled, dir / "data");
  CHECK(d.size() == 30);
  const auto split = split_dataset(d, {0.6, 0.2, 0.2}, 3);
  const auto text = split_to_json(split, 3);
  uint64_t seed_back = 0;
  const auto split2 = split_from_json(text, "<mem>", &seed_back);
  CHECK(seed_back == 3);
  CHECK(split.train == split2.train);
  CHECK(split.validation == split2.validation);
  CHECK(split.test == split2.test);
}

// ---- CLI binary smoke tests (hidden; run via the [cli] tag) --------------

namespace {

std::string cli_bin() {
  const char* env = std::getenv("PKDE_CLI_BIN");
  return env ? env : "";
}

int run(const std::string& cmd) { return std::system(cmd.c_str()); }

}  // namespace

TEST_CASE("binary pipeline smoke run", "[cli][.]") {
  const std::string bin = cli_bin();
  REQUIRE(!bin.empty());
  const auto dir = fresh_dir("cli");
  const std::string data = (dir / "data").string();
  const std::string run_dir = (dir / "run").string();

  REQUIRE(run(bin + " synth --out " + data +
              " --layers 16 --width 32 --height 32 --seed 5 > /dev/null") == 0);
  REQUIRE(run(bin + " label --manifest " + data + "/manifest.json --bandwidth 5 > /dev/null") ==
          0);
  REQUIRE(run(bin + " train --manifest " + data + "/manifest.json --out " + run_dir +
              " --depth 2 --base-width 4 --epochs 5 --batch 16 --lr 0.002 --seed 5 > /dev/null") ==
          0);
  REQUIRE(run(bin + " eval --manifest " + data + "/manifest.json --weights " + run_dir +
              "/weights.pkw --split-file " + run_dir + "/split.json --subset test --out " + dir.string() +
              "/eval > /dev/null") == 0);
  REQUIRE(run(bin + " report --scores " + dir.string() + "/eval/scores.json --manifest " + data +
              "/manifest.json --out " + dir.string() + "/report > /dev/null") == 0);
  CHECK(fs::exists(dir / "report" / "report.csv"));
  CHECK(fs::exists(dir / "report" / "report.json"));

  // Exit-code taxonomy: bad plan file is a data error (2).
  write_file_bytes((dir / "bad.json").string(), "{ not json");
  const int bad = run(bin + " synth --plan " + (dir / "bad.json").string() + " --out " +
                      (dir / "x").string() + " 2> /dev/null");
  CHECK(WEXITSTATUS(bad) == 2);

  // Usage error: unknown flag (1).
  const int usage = run(bin + " synth --no-such-flag 2> /dev/null");
  CHECK(WEXITSTATUS(usage) == 1);

  // Config file supplies defaults; flags win.
  write_file_bytes((dir / "cfg.json").string(), "{\"layers\": 4, \"width\": 16, \"height\": 16}\n");
  REQUIRE(run(bin + " synth --config " + (dir / "cfg.json").string() + " --out " +
              (dir / "cfgdata").string() + " --seed 1 > /dev/null") == 0);
  const auto m = load_manifest(dir / "cfgdata" / "manifest.json");
  CHECK(m.layers_per_part == 4);
  CHECK(m.image_width == 16);
}

TEST_CASE("binary train with zero epochs writes baseline artifacts", "[cli][.]") {
  const std::string bin = cli_bin();
  REQUIRE(!bin.empty());
  const auto dir = fresh_dir("cli0");
  const std::string data = (dir / "data").string();
  REQUIRE(run(bin + " synth --out " + data +
              " --layers 8 --width 16 --height 16 --seed 3 > /dev/null") == 0);
  REQUIRE(run(bin + " label --manifest " + data + "/manifest.json --bandwidth 4 > /dev/null") ==
          0);
  REQUIRE(run(bin + " train --manifest " + data + "/manifest.json --out " + (dir / "run").string() +
              " --depth 1 --base-width 4 --epochs 0 --seed 3 > /dev/null") == 0);
  const auto rep = read_json(dir / "run" / "train_report.json");
  CHECK(rep.at("epochs").empty());
  CHECK(rep.at("best_epoch").get<int>() == 0);
  CHECK(rep.at("baseline_val_mae").get<double>() > 0.0);
}
