// pkde: synthetic-build, labeling, training, tuning, and evaluation pipeline
// in one binary. Exit codes: 0 ok, 1 usage, 2 data/input, 3 numerical.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "pkde/cli.hpp"
#include "pkde/error.hpp"
#include "pkde/json_compat.hpp"
#include "pkde/parallel.hpp"
#include "pkde/version.hpp"

namespace {

using pkde::json::json;

// Config-file values fill in options the command line left untouched, so
// flags always win over the config file.
template <typename T>
void config_override(const CLI::App& app, const json& cfg, const std::string& name, T& value) {
  if (cfg.is_null() || !cfg.contains(name)) return;
  const auto* opt = app.get_option_no_throw("--" + name);
  if (opt != nullptr && opt->count() > 0) return;
  value = cfg.at(name).get<T>();
}

json load_config(const std::string& path) {
  if (path.empty()) return json();
  try {
    return json::parse(pkde::read_file_bytes(path));
  } catch (const std::exception& e) {
    pkde::throw_data(std::string("config parse error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pore probability pipeline: synthesize builds, derive labels, train, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pkde::kVersion);

  std::string config_path;
  uint64_t seed = 0;
  int threads = pkde::default_thread_count();
  std::string out_dir;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config file; explicit flags win")
      ->configurable(false);
  app.add_option("--seed", seed, "master seed for all randomness");
  app.add_option("--threads", threads, "worker thread count (env PKDE_THREADS)");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--verbose", verbose, "chatty progress output");

  pkde::cli::SynthCmd synth;
  auto* synth_app = app.add_subcommand("synth", "generate a synthetic build with ground truth");
  synth_app->add_option("--plan", synth.plan_path, "plan JSON (default: built-in 10-part plan)");
  synth_app->add_option("--layers", synth.layers, "layers per part");
  synth_app->add_option("--width", synth.width, "image width in pixels");
  synth_app->add_option("--height", synth.height, "image height in pixels");
  synth_app->add_option("--base-rate", synth.base_rate, "expected pores per layer at nominal Ev");
  synth_app->add_option("--energy-sensitivity", synth.energy_sensitivity,
                        "pore-rate curvature vs energy density");
  synth_app->add_option("--hr-pore-strength", synth.hr_pore_strength, "pore dimple in HR render");
  synth_app->add_option("--ot-pore-strength", synth.ot_pore_strength, "pore hot spot in OT render");
  synth_app->add_option("--hr-noise", synth.hr_noise, "HR speckle amplitude");
  synth_app->add_option("--ot-noise", synth.ot_noise, "OT noise amplitude");
  synth_app->add_option("--voxel-size", synth.voxel_size_um, "CT voxel size in um");
  synth_app->add_option("--layer-thickness", synth.layer_thickness_um, "layer thickness in um");

  pkde::cli::LabelCmd label;
  auto* label_app = app.add_subcommand("label", "detect pores in volumes and write labels");
  label_app->add_option("--manifest", label.manifest_path, "manifest.json path")->required();
  label_app->add_option("--bandwidth", label.bandwidth, "density kernel bandwidth in pixels");
  label_app->add_option("--truncation-radius", label.truncation_radius,
                        "kernel cutoff in pixels (default 4x bandwidth)");
  label_app->add_option("--threshold", label.intensity_threshold, "void intensity threshold");
  label_app->add_option("--min-diameter", label.min_diameter_um,
                        "minimum pore equivalent diameter in um");
  label_app->add_flag("!--no-pgm", label.pgm_previews, "skip PGM previews");

  pkde::cli::TrainCmd train;
  auto* train_app = app.add_subcommand("train", "train the probability-map model");
  train_app->add_option("--manifest", train.manifest_path, "manifest.json path")->required();
  train_app->add_option("--split-file", train.split_file, "existing split JSON");
  train_app->add_option("--train-fraction", train.train_fraction, "train split fraction");
  train_app->add_option("--val-fraction", train.val_fraction, "validation split fraction");
  train_app->add_option("--test-fraction", train.test_fraction, "test split fraction");
  train_app->add_option("--depth", train.depth, "down/up levels");
  train_app->add_option("--base-width", train.base_width, "channels at the first level");
  train_app->add_option("--skip-mode", train.skip_mode, "concat | add");
  train_app->add_option("--lr", train.learning_rate, "learning rate");
  train_app->add_option("--batch", train.batch_size, "batch size");
  train_app->add_option("--epochs", train.epochs, "training epochs");

  pkde::cli::TuneCmd tune;
  auto* tune_app = app.add_subcommand("tune", "search learning rate and batch size");
  tune_app->add_option("--manifest", tune.manifest_path, "manifest.json path")->required();
  tune_app->add_option("--split-file", tune.split_file, "existing split JSON");
  tune_app->add_option("--resume", tune.resume_log, "prior trials.jsonl to continue");
  tune_app->add_option("--train-fraction", tune.train_fraction, "train split fraction");
  tune_app->add_option("--val-fraction", tune.val_fraction, "validation split fraction");
  tune_app->add_option("--test-fraction", tune.test_fraction, "test split fraction");
  tune_app->add_option("--depth", tune.depth, "down/up levels");
  tune_app->add_option("--base-width", tune.base_width, "channels at the first level");
  tune_app->add_option("--skip-mode", tune.skip_mode, "concat | add");
  tune_app->add_option("--trials", tune.trials, "total trial budget");
  tune_app->add_option("--epochs", tune.epochs, "epochs per trial");
  tune_app->add_option("--lr-lo", tune.lr_lo, "learning-rate lower bound");
  tune_app->add_option("--lr-hi", tune.lr_hi, "learning-rate upper bound");
  tune_app->add_option("--strategy", tune.strategy, "gp | random");

  pkde::cli::EvalCmd eval;
  auto* eval_app = app.add_subcommand("eval", "score predictions per layer");
  eval_app->add_option("--manifest", eval.manifest_path, "manifest.json path")->required();
  eval_app->add_option("--weights", eval.weights_path, "weights file to predict with");
  eval_app->add_option("--pred-dir", eval.pred_dir, "directory of *_pp.tens predictions");
  eval_app->add_option("--split-file", eval.split_file, "split JSON restricting the layers");
  eval_app->add_option("--subset", eval.subset, "test | validation | train | all");
  eval_app->add_option("--batch", eval.batch_size, "prediction batch size");
  eval_app->add_flag("--save-pred", eval.save_predictions, "write predicted maps");

  pkde::cli::ReportCmd report;
  auto* report_app = app.add_subcommand("report", "aggregate scores into CSV/JSON reports");
  report_app->add_option("--scores", report.scores_path, "scores.json from eval")->required();
  report_app->add_option("--manifest", report.manifest_path, "manifest.json path")->required();
  report_app->add_option("--threshold", report.threshold, "failure-flag MAE threshold");
  report_app->add_flag("!--no-csv", report.csv, "skip the CSV report");
  report_app->add_flag("!--no-json", report.json_out, "skip the JSON report");

  for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/usage as appropriate
    return code == 0 ? 0 : 1;     // usage errors exit 1
  }

  try {
    const json cfg = load_config(config_path);
    config_override(app, cfg, "seed", seed);
    config_override(app, cfg, "threads", threads);
    config_override(app, cfg, "out", out_dir);

    if (synth_app->parsed()) {
      config_override(*synth_app, cfg, "plan", synth.plan_path);
      config_override(*synth_app, cfg, "layers", synth.layers);
      config_override(*synth_app, cfg, "width", synth.width);
      config_override(*synth_app, cfg, "height", synth.height);
      config_override(*synth_app, cfg, "base-rate", synth.base_rate);
      config_override(*synth_app, cfg, "energy-sensitivity", synth.energy_sensitivity);
      synth.seed = seed;
      synth.out_dir = out_dir;
      synth.threads = threads;
      synth.verbose = verbose;
      return pkde::cli::run_synth(synth);
    }
    if (label_app->parsed()) {
      config_override(*label_app, cfg, "bandwidth", label.bandwidth);
      config_override(*label_app, cfg, "threshold", label.intensity_threshold);
      config_override(*label_app, cfg, "min-diameter", label.min_diameter_um);
      label.threads = threads;
      label.verbose = verbose;
      return pkde::cli::run_label(label);
    }
    if (train_app->parsed()) {
      config_override(*train_app, cfg, "depth", train.depth);
      config_override(*train_app, cfg, "base-width", train.base_width);
      config_override(*train_app, cfg, "skip-mode", train.skip_mode);
      config_override(*train_app, cfg, "lr", train.learning_rate);
      config_override(*train_app, cfg, "batch", train.batch_size);
      config_override(*train_app, cfg, "epochs", train.epochs);
      train.seed = seed;
      train.out_dir = out_dir;
      train.threads = threads;
      train.verbose = verbose;
      return pkde::cli::run_train(train);
    }
    if (tune_app->parsed()) {
      config_override(*tune_app, cfg, "trials", tune.trials);
      config_override(*tune_app, cfg, "epochs", tune.epochs);
      config_override(*tune_app, cfg, "strategy", tune.strategy);
      tune.seed = seed;
      tune.out_dir = out_dir;
      tune.threads = threads;
      tune.verbose = verbose;
      return pkde::cli::run_tune(tune);
    }
    if (eval_app->parsed()) {
      eval.seed = seed;
      eval.out_dir = out_dir;
      eval.threads = threads;
      eval.verbose = verbose;
      return pkde::cli::run_eval(eval);
    }
    if (report_app->parsed()) {
      report.seed = seed;
      report.out_dir = out_dir;
      report.threads = threads;
      report.verbose = verbose;
      return pkde::cli::run_report(report);
    }
  } catch (const pkde::Error& e) {
    std::fprintf(stderr, "pkde: error: %s\n", e.what());
    return e.kind() == pkde::ErrorKind::numerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pkde: error: %s\n", e.what());
    return 2;
  }
  return 1;
}
