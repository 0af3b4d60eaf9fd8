#pragma once

// Command implementations behind the pkde binary: synth, label, train, tune,
// eval, report. Each writes its artifacts plus a run-metadata JSON; wall
// time and timestamps live only in the run metadata so artifact bytes are
// reproducible for a fixed seed.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/evalreport.hpp"
#include "pkde/json_compat.hpp"
#include "pkde/labeler.hpp"
#include "pkde/manifest.hpp"
#include "pkde/nn/model.hpp"
#include "pkde/nn/train.hpp"
#include "pkde/parallel.hpp"
#include "pkde/synth.hpp"
#include "pkde/tensor_io.hpp"
#include "pkde/tuner.hpp"
#include "pkde/version.hpp"
#include "pkde/xct.hpp"

namespace pkde::cli {

namespace fs = std::filesystem;

inline std::string part_tag(int part) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%02d", part);
  return buf;
}

inline std::string layer_tag(int part, int layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%02d_l%04d", part, layer);
  return buf;
}

inline void write_run_metadata(const fs::path& out_dir, const std::string& command, uint64_t seed,
                               int threads, double wall_seconds) {
  json::ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["seed"] = seed;
  j["threads"] = threads;
  j["wall_seconds"] = wall_seconds;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp_utc"] = stamp;
  write_file_bytes((out_dir / "run_meta.json").string(), j.dump(2) + "\n");
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// --- synth ---------------------------------------------------------------

// Machine-sheet build plan: three complex parts at the shared configuration
// and seven cubes sweeping power, speed, and hatch distance.
inline std::vector<synth::SynthPlanEntry> reference_plan(int layers) {
  const auto entry = [layers](int part, synth::GeometryKind kind, double p, double v, double h,
                              double t) {
    synth::SynthPlanEntry e;
    e.part = part;
    e.geometry = kind == synth::GeometryKind::cube
                     ? synth::GeometrySpec::cube()
                     : synth::GeometrySpec::complex_geometry(layers);
    e.params = ProcessParams{part, p, v, h, t};
    return e;
  };
  using GK = synth::GeometryKind;
  return {
      entry(1, GK::complex_part, 370, 1300, 190, 30),
      entry(2, GK::complex_part, 370, 1300, 190, 30),
      entry(3, GK::complex_part, 370, 1300, 190, 30),
      entry(4, GK::cube, 340, 1300, 210, 30),
      entry(5, GK::cube, 370, 1300, 190, 30),
      entry(6, GK::cube, 340, 1000, 190, 30),
      entry(7, GK::cube, 370, 900, 210, 30),
      entry(8, GK::cube, 370, 700, 190, 30),
      entry(9, GK::cube, 370, 700, 210, 30),
      entry(10, GK::cube, 390, 700, 160, 30),
  };
}

struct PlanFile {
  std::vector<synth::SynthPlanEntry> entries;
  std::set<LayerKey> drop;
};

inline PlanFile parse_plan(const std::string& text, int layers, const std::string& origin) {
  json::json j;
  try {
    j = json::json::parse(text);
  } catch (const json::json::parse_error& e) {
    // Count lines up to the failing byte for a usable message.
    size_t line = 1;
    for (size_t i = 0; i < std::min(text.size(), size_t(e.byte)); ++i)
      if (text[i] == '\n') ++line;
    throw_data("plan parse error in " + origin + " near line " + std::to_string(line) + ": " +
               e.what());
  }
  try {
    PlanFile plan;
    for (const auto& je : j.at("parts")) {
      synth::SynthPlanEntry e;
      e.part = je.at("part").get<int>();
      const auto kind = synth::geometry_from_name(je.at("geometry").get<std::string>());
      e.geometry = kind == synth::GeometryKind::cube
                       ? synth::GeometrySpec::cube()
                       : synth::GeometrySpec::complex_geometry(layers);
      e.params.part = e.part;
      e.params.laser_power = je.at("laser_power_w").get<double>();
      e.params.scan_speed = je.at("scan_speed_mm_s").get<double>();
      e.params.hatch_distance = je.at("hatch_distance_um").get<double>();
      e.params.layer_thickness = je.at("layer_thickness_um").get<double>();
      plan.entries.push_back(std::move(e));
    }
    if (j.contains("drop"))
      for (const auto& pair : j.at("drop"))
        plan.drop.insert({pair.at(0).get<int>(), pair.at(1).get<int>()});
    return plan;
  } catch (const json::json::exception& e) {
    throw_data("plan field error in " + origin + ": " + e.what());
  }
}

struct SynthCmd {
  std::string plan_path;  // empty: use the reference plan
  int layers = 32;
  int width = 64;
  int height = 64;
  uint64_t seed = 0;
  std::string out_dir;
  double base_rate = 2.0;
  double energy_sensitivity = 1.0;
  double hr_pore_strength = 0.25;
  double ot_pore_strength = 0.6;
  double hr_noise = 0.04;
  double ot_noise = 0.02;
  double voxel_size_um = 30.0;
  double layer_thickness_um = 30.0;
  int threads = 1;
  bool verbose = false;
};

inline int run_synth(const SynthCmd& cmd) {
  Stopwatch watch;
  if (cmd.out_dir.empty()) throw_invalid("synth: --out is required");

  PlanFile plan;
  if (cmd.plan_path.empty()) {
    plan.entries = reference_plan(cmd.layers);
  } else {
    plan = parse_plan(read_file_bytes(cmd.plan_path), cmd.layers, cmd.plan_path);
  }

  synth::SynthOptions opt;
  opt.layers = cmd.layers;
  opt.width = cmd.width;
  opt.height = cmd.height;
  opt.seed = cmd.seed;
  opt.pore_model = synth::PoreModel{cmd.base_rate, cmd.energy_sensitivity, cmd.seed};
  opt.render.hr_pore_strength = cmd.hr_pore_strength;
  opt.render.ot_pore_strength = cmd.ot_pore_strength;
  opt.render.hr_noise = cmd.hr_noise;
  opt.render.ot_noise = cmd.ot_noise;
  opt.voxel_size_um = cmd.voxel_size_um;
  opt.layer_thickness_um = cmd.layer_thickness_um;
  opt.drop = plan.drop;

  // Surface the proportional section ranges when they are not an exact
  // rescale of the reference layout.
  bool has_complex = false;
  for (const auto& e : plan.entries)
    has_complex |= e.geometry.kind == synth::GeometryKind::complex_part;
  if (has_complex && cmd.layers != evalreport::kReferenceLayers) {
    const auto sp = evalreport::SectionPlan::scaled(cmd.layers);
    std::fprintf(stderr,
                 "pkde synth: section ranges scaled proportionally for %d layers: "
                 "[1,%d] [%d,%d] [%d,%d] [%d,%d]\n",
                 cmd.layers, sp.ranges[0].second, sp.ranges[1].first, sp.ranges[1].second,
                 sp.ranges[2].first, sp.ranges[2].second, sp.ranges[3].first, sp.ranges[3].second);
  }

  const auto build = synth::build_synthetic_dataset(plan.entries, opt);

  const fs::path out(cmd.out_dir);
  fs::create_directories(out / "images");
  fs::create_directories(out / "volumes");

  Manifest m;
  m.parts = int(plan.entries.size());
  m.layers_per_part = cmd.layers;
  m.image_width = cmd.width;
  m.image_height = cmd.height;
  m.voxel_size_um = cmd.voxel_size_um;
  m.layer_thickness_um = cmd.layer_thickness_um;
  m.seed = cmd.seed;
  m.params = build.params;
  for (const auto& [part, kind] : build.geometry) m.geometry[part] = synth::geometry_name(kind);
  for (const auto& [part, vol] : build.volumes) {
    const std::string rel = "volumes/" + part_tag(part) + ".tens";
    write_tensor((out / rel).string(), vol.to_tensor());
    m.volume_paths[part] = rel;
  }
  for (const auto& [key, hr] : build.hr) {
    ManifestEntry e;
    e.part = key.first;
    e.layer = key.second;
    e.hr_path = "images/" + layer_tag(key.first, key.second) + "_hr.tens";
    e.ot_path = "images/" + layer_tag(key.first, key.second) + "_ot.tens";
    write_image((out / e.hr_path).string(), hr);
    write_image((out / e.ot_path).string(), build.ot.at(key));
    m.entries.push_back(std::move(e));
  }
  for (const auto& key : build.missing) m.missing.push_back(key);
  save_manifest(out / "manifest.json", m);

  std::printf("synth: wrote %zu triplets (%d parts, %d layers requested) to %s\n",
              m.entries.size(), m.parts, cmd.layers, cmd.out_dir.c_str());
  for (const auto& [part, p] : m.params)
    std::printf("  part %d: geometry=%s Ev=%.4g J/m^3\n", part, m.geometry.at(part).c_str(),
                energy_density(p));
  write_run_metadata(out, "synth", cmd.seed, cmd.threads, watch.seconds());
  return 0;
}

// --- label ---------------------------------------------------------------

struct LabelCmd {
  std::string manifest_path;
  double bandwidth = 20.0;
  double truncation_radius = 0.0;  // 0: default 4 * bandwidth
  double intensity_threshold = synth::kDefaultThreshold;
  double min_diameter_um = 10.0;
  bool pgm_previews = true;
  int threads = 1;
  bool verbose = false;
};

inline int run_label(const LabelCmd& cmd) {
  Stopwatch watch;
  Manifest m = load_manifest(cmd.manifest_path);
  const fs::path base = fs::path(cmd.manifest_path).parent_path();

  labeler::KdeConfig kde_cfg = cmd.truncation_radius > 0.0
                                   ? labeler::KdeConfig{cmd.bandwidth, cmd.truncation_radius}
                                   : labeler::KdeConfig::with_bandwidth(cmd.bandwidth);
  kde_cfg.validate();

  // Group manifest entries per part.
  std::map<int, std::vector<ManifestEntry*>> by_part;
  for (auto& e : m.entries) by_part[e.part].push_back(&e);

  for (auto& [part, entries] : by_part) {
    auto vit = m.volume_paths.find(part);
    if (vit == m.volume_paths.end())
      throw_data("label: manifest has no volume for part " + std::to_string(part));
    const auto vol = xct::VoxelVolume::from_tensor(
        read_tensor((base / vit->second).string()), m.voxel_size_um, vit->second);

    const auto pores = xct::detect_pores(vol, cmd.intensity_threshold, cmd.min_diameter_um);
    const auto frame = xct::CropFrame::full(m.image_width, m.image_height);
    const auto mapped = xct::pores_to_layers(
        pores, xct::VolumeMeta{m.voxel_size_um, m.layer_thickness_um}, frame, part);

    // Layer labeling is independent per entry; threads split the list.
    parallel_for(int64_t(entries.size()), cmd.threads, [&](long long lo, long long hi) {
      for (long long i = lo; i < hi; ++i) {
        ManifestEntry& e = *entries[size_t(i)];
        PoreSet ps;
        auto pit = mapped.by_layer.find(e.layer);
        if (pit != mapped.by_layer.end()) ps = pit->second;
        ps.part = part;
        ps.layer = e.layer;
        const auto label = labeler::kde_label(ps, m.image_width, m.image_height, kde_cfg);
        e.pp_path = "images/" + layer_tag(e.part, e.layer) + "_pp.tens";
        write_image((base / e.pp_path).string(), label);
        if (cmd.pgm_previews) {
          e.pp_preview_path = "images/" + layer_tag(e.part, e.layer) + "_pp.pgm";
          write_pgm((base / e.pp_preview_path).string(), label);
        }
        e.pores = std::move(ps);
      }
    });

    std::printf("label: part %d: %zu pores detected, %d dropped outside frame\n", part,
                pores.size(), mapped.dropped);
  }

  save_manifest(cmd.manifest_path, m);
  write_run_metadata(base, "label", m.seed, cmd.threads, watch.seconds());
  return 0;
}

// --- train ---------------------------------------------------------------

struct TrainCmd {
  std::string manifest_path;
  std::string out_dir;
  std::string split_file;  // optional; otherwise derive from fractions + seed
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  int depth = 2;
  int base_width = 8;
  std::string skip_mode = "concat";
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 60;
  uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
};

inline int run_train(const TrainCmd& cmd) {
  Stopwatch watch;
  if (cmd.out_dir.empty()) throw_invalid("train: --out is required");
  Manifest m = load_manifest(cmd.manifest_path);
  const fs::path base = fs::path(cmd.manifest_path).parent_path();
  const Dataset dataset = load_dataset(m, base);

  SplitAssignment split;
  if (!cmd.split_file.empty()) {
    split = split_from_json(read_file_bytes(cmd.split_file), cmd.split_file);
    split.validate_partition(dataset.keys());
  } else {
    split = split_dataset(dataset, {cmd.train_fraction, cmd.val_fraction, cmd.test_fraction},
                          cmd.seed);
  }

  nn::ModelConfig cfg;
  cfg.depth = cmd.depth;
  cfg.base_width = cmd.base_width;
  cfg.skip_mode = nn::skip_mode_from_name(cmd.skip_mode);
  nn::HyperParams hp{cmd.learning_rate, cmd.batch_size, cmd.epochs};

  const auto result = nn::train(dataset, split, cfg, hp, cmd.seed, cmd.threads);

  const fs::path out(cmd.out_dir);
  fs::create_directories(out);
  nn::save_weights((out / "weights.pkw").string(), result.weights);
  write_file_bytes((out / "train_report.json").string(),
                   nn::train_report_to_json(result.report));
  write_file_bytes((out / "split.json").string(), split_to_json(split, cmd.seed));
  std::printf("train: baseline val MAE %.6f; best val MAE %.6f at epoch %d (%zu train, %zu val)\n",
              result.report.baseline_val_mae, result.report.best_val_mae,
              result.report.best_epoch, split.train.size(), split.validation.size());
  write_run_metadata(out, "train", cmd.seed, cmd.threads, watch.seconds());
  return 0;
}

// --- tune ----------------------------------------------------------------

struct TuneCmd {
  std::string manifest_path;
  std::string out_dir;
  std::string split_file;
  std::string resume_log;  // prior trials.jsonl to continue from
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  int depth = 2;
  int base_width = 8;
  std::string skip_mode = "concat";
  int trials = 50;
  int epochs = 60;
  double lr_lo = 1e-6;
  double lr_hi = 1e-3;
  std::string strategy = "gp";  // gp | random
  uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
};

inline int run_tune(const TuneCmd& cmd) {
  Stopwatch watch;
  if (cmd.out_dir.empty()) throw_invalid("tune: --out is required");
  Manifest m = load_manifest(cmd.manifest_path);
  const fs::path base = fs::path(cmd.manifest_path).parent_path();
  const Dataset dataset = load_dataset(m, base);

  SplitAssignment split;
  if (!cmd.split_file.empty()) {
    split = split_from_json(read_file_bytes(cmd.split_file), cmd.split_file);
    split.validate_partition(dataset.keys());
  } else {
    split = split_dataset(dataset, {cmd.train_fraction, cmd.val_fraction, cmd.test_fraction},
                          cmd.seed);
  }
  const auto train_set = nn::samples_for_keys(dataset, split.train);
  const auto val_set = nn::samples_for_keys(dataset, split.validation);

  nn::ModelConfig cfg;
  cfg.depth = cmd.depth;
  cfg.base_width = cmd.base_width;
  cfg.skip_mode = nn::skip_mode_from_name(cmd.skip_mode);

  tuner::SearchSpace space;
  space.lr_lo = cmd.lr_lo;
  space.lr_hi = cmd.lr_hi;

  std::vector<tuner::Trial> prior;
  if (!cmd.resume_log.empty())
    prior = tuner::trials_from_jsonl(read_file_bytes(cmd.resume_log), cmd.resume_log);

  const fs::path out(cmd.out_dir);
  fs::create_directories(out);
  const std::string log_path = (out / "trials.jsonl").string();
  std::string log_text;
  for (size_t i = 0; i < prior.size(); ++i) log_text += tuner::trial_to_jsonl(int(i), prior[i]);

  const tuner::Objective objective = [&](const nn::HyperParams& hp) {
    nn::HyperParams full = hp;
    full.epochs = cmd.epochs;
    const auto result = nn::train_samples(train_set, val_set, cfg, full, cmd.seed, cmd.threads);
    return result.report.best_val_mae;
  };

  const auto strategy = cmd.strategy == "random" ? tuner::SearchStrategy::random
                                                 : tuner::SearchStrategy::gp;
  const auto result = tuner::run_search(
      objective, space, cmd.trials, cmd.seed, prior, strategy,
      [&](int index, const tuner::Trial& t) {
        log_text += tuner::trial_to_jsonl(index, t);
        write_file_bytes(log_path, log_text);
        if (cmd.verbose)
          std::printf("tune: trial %d lr=%.3e batch=%d -> %s%.6f\n", index, t.hp.learning_rate,
                      t.hp.batch_size,
                      t.status == tuner::TrialStatus::completed ? "" : "diverged ",
                      t.validation_mae);
      });

  json::ordered_json best;
  best["trial"] = result.best_index;
  best["learning_rate"] = result.best_hp.learning_rate;
  best["batch_size"] = result.best_hp.batch_size;
  best["epochs"] = cmd.epochs;
  best["validation_mae"] = result.best_mae;
  write_file_bytes((out / "best.json").string(), best.dump(2) + "\n");
  std::printf("tune: best trial %d: lr=%.4e batch=%d val MAE %.6f\n", result.best_index,
              result.best_hp.learning_rate, result.best_hp.batch_size, result.best_mae);
  write_run_metadata(out, "tune", cmd.seed, cmd.threads, watch.seconds());
  return 0;
}

// --- eval ----------------------------------------------------------------

struct EvalCmd {
  std::string manifest_path;
  std::string out_dir;
  std::string weights_path;  // either this or pred_dir
  std::string pred_dir;      // directory of pNN_lNNNN_pp.tens predictions
  std::string split_file;    // optional; restricts to a subset
  std::string subset = "test";  // test | validation | train | all
  int batch_size = 16;
  bool save_predictions = false;
  uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
};

inline int run_eval(const EvalCmd& cmd) {
  Stopwatch watch;
  if (cmd.out_dir.empty()) throw_invalid("eval: --out is required");
  if (cmd.weights_path.empty() == cmd.pred_dir.empty())
    throw_invalid("eval: exactly one of --weights or --pred-dir is required");
  Manifest m = load_manifest(cmd.manifest_path);
  const fs::path base = fs::path(cmd.manifest_path).parent_path();
  const Dataset dataset = load_dataset(m, base);

  std::set<LayerKey> keys;
  if (!cmd.split_file.empty()) {
    const auto split = split_from_json(read_file_bytes(cmd.split_file), cmd.split_file);
    if (cmd.subset == "test")
      keys = split.test;
    else if (cmd.subset == "validation")
      keys = split.validation;
    else if (cmd.subset == "train")
      keys = split.train;
    else if (cmd.subset == "all") {
      for (const auto& k : dataset.keys()) keys.insert(k);
    } else {
      throw_invalid("eval: unknown subset " + cmd.subset);
    }
  } else {
    for (const auto& k : dataset.keys()) keys.insert(k);
  }

  std::map<LayerKey, LayerImage> labels;
  std::vector<const LayerTriplet*> selected;
  for (const auto& t : dataset.triplets)
    if (keys.count(t.key())) {
      labels.emplace(t.key(), t.pp);
      selected.push_back(&t);
    }
  if (selected.empty()) throw_data("eval: no layers selected");

  std::map<LayerKey, LayerImage> predictions;
  if (!cmd.weights_path.empty()) {
    auto weights = nn::load_weights(cmd.weights_path);
    predictions = nn::predict_batch(weights, selected, cmd.batch_size, cmd.threads);
  } else {
    for (const auto* t : selected) {
      const std::string rel = layer_tag(t->part, t->layer) + "_pp.tens";
      predictions.emplace(t->key(),
                          read_image((fs::path(cmd.pred_dir) / rel).string(), Modality::PP));
    }
  }

  auto scores = evalreport::score_layers(predictions, labels);
  evalreport::attach_sections(scores, m.complex_parts(),
                              evalreport::SectionPlan::scaled(m.layers_per_part));

  const fs::path out(cmd.out_dir);
  fs::create_directories(out);
  if (cmd.save_predictions) {
    fs::create_directories(out / "predictions");
    for (const auto& [key, img] : predictions)
      write_image((out / "predictions" / (layer_tag(key.first, key.second) + "_pp.tens")).string(),
                  img);
  }

  // Per-layer maxima ride along so the report step can classify failures
  // without reloading images.
  json::ordered_json j;
  j["schema"] = "pkde-scores-v1";
  auto arr = json::ordered_json::array();
  const auto image_max = [](const LayerImage& img) {
    float mx = img.data.empty() ? 0.0f : img.data[0];
    for (float v : img.data) mx = std::max(mx, v);
    return double(mx);
  };
  double total = 0.0;
  for (const auto& s : scores) {
    json::ordered_json js;
    js["part"] = s.part;
    js["layer"] = s.layer;
    js["mae"] = s.mae;
    if (s.section) js["section"] = evalreport::section_name(*s.section);
    js["pred_max"] = image_max(predictions.at({s.part, s.layer}));
    js["label_max"] = image_max(labels.at({s.part, s.layer}));
    arr.push_back(js);
    total += s.mae;
  }
  j["scores"] = arr;
  write_file_bytes((out / "scores.json").string(), j.dump(2) + "\n");
  std::printf("eval: %zu layers, mean MAE %.6f\n", scores.size(), total / double(scores.size()));
  write_run_metadata(out, "eval", cmd.seed, cmd.threads, watch.seconds());
  return 0;
}

// --- report ----------------------------------------------------------------

struct ReportCmd {
  std::string scores_path;
  std::string manifest_path;
  std::string out_dir;
  double threshold = 0.05;
  bool csv = true;
  bool json_out = true;
  uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
};

struct ScoreRecord {
  evalreport::LayerScore score;
  double pred_max = 0.0;
  double label_max = 0.0;
};

inline std::vector<ScoreRecord> load_scores(const std::string& path) {
  json::json j;
  try {
    j = json::json::parse(read_file_bytes(path));
  } catch (const std::exception& e) {
    throw_data("scores parse error in " + path + ": " + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != "pkde-scores-v1")
      throw_data("unsupported scores schema in " + path);
    std::vector<ScoreRecord> out;
    for (const auto& js : j.at("scores")) {
      ScoreRecord r;
      r.score.part = js.at("part").get<int>();
      r.score.layer = js.at("layer").get<int>();
      r.score.mae = js.at("mae").get<double>();
      if (js.contains("section")) {
        const std::string name = js.at("section").get<std::string>();
        for (int s = 0; s < 4; ++s)
          if (name == evalreport::section_name(evalreport::GeometrySection(s)))
            r.score.section = evalreport::GeometrySection(s);
      }
      r.pred_max = js.at("pred_max").get<double>();
      r.label_max = js.at("label_max").get<double>();
      out.push_back(r);
    }
    return out;
  } catch (const json::json::exception& e) {
    throw_data("scores field error in " + path + ": " + e.what());
  }
}

inline int run_report(const ReportCmd& cmd) {
  Stopwatch watch;
  if (cmd.out_dir.empty()) throw_invalid("report: --out is required");
  const auto records = load_scores(cmd.scores_path);
  Manifest m = load_manifest(cmd.manifest_path);

  evalreport::Report report;
  for (const auto& r : records) report.scores.push_back(r.score);

  report.groupings.push_back({"part", evalreport::group_stats(report.scores,
                                                              evalreport::GroupBy::part)});
  bool any_section = false;
  for (const auto& s : report.scores) any_section |= s.section.has_value();
  if (any_section)
    report.groupings.push_back(
        {"section", evalreport::group_stats(report.scores, evalreport::GroupBy::section)});

  // Parameter influence is read off the cube parts only; the complex parts
  // share one configuration and would only blur the comparison.
  std::vector<evalreport::LayerScore> cube_scores;
  for (const auto& s : report.scores) {
    auto git = m.geometry.find(s.part);
    if (git != m.geometry.end() && git->second == "cube") cube_scores.push_back(s);
  }
  if (!cube_scores.empty()) {
    for (const auto group : {evalreport::GroupBy::laser_power, evalreport::GroupBy::scan_speed,
                             evalreport::GroupBy::hatch_distance,
                             evalreport::GroupBy::energy_density}) {
      report.groupings.push_back(
          {evalreport::group_by_name(group),
           evalreport::group_stats(cube_scores, group, m.params)});
    }
  }

  for (const auto& r : records) {
    if (!(r.score.mae > cmd.threshold)) continue;
    evalreport::FailureFlag f;
    f.part = r.score.part;
    f.layer = r.score.layer;
    f.mode = evalreport::classify_failure(r.pred_max, r.label_max);
    report.flags.push_back(f);
  }

  const fs::path out(cmd.out_dir);
  fs::create_directories(out);
  if (cmd.csv)
    write_file_bytes((out / "report.csv").string(), evalreport::report_csv(report, m.params));
  if (cmd.json_out)
    write_file_bytes((out / "report.json").string(), evalreport::report_json(report));
  std::printf("report: %zu scores, %zu groupings, %zu flagged layers\n", report.scores.size(),
              report.groupings.size(), report.flags.size());
  write_run_metadata(out, "report", cmd.seed, cmd.threads, watch.seconds());
  return 0;
}

}  // namespace pkde::cli
