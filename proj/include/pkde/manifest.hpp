#pragma once

// Dataset manifest: JSON document listing build metadata, per-part process
// parameters, volume paths, and per-triplet image paths plus the pore set
// its label was built from. Absent layers are recorded explicitly.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/json_compat.hpp"
#include "pkde/tensor_io.hpp"

namespace pkde {

struct ManifestEntry {
  int part = 0;
  int layer = 0;
  std::string hr_path;
  std::string ot_path;
  std::string pp_path;          // empty until labels exist
  std::string pp_preview_path;  // optional PGM preview
  std::optional<PoreSet> pores; // pore set the label was built from

  bool has_label() const { return !pp_path.empty(); }
};

struct Manifest {
  int parts = 0;
  int layers_per_part = 0;
  int image_width = 0;
  int image_height = 0;
  double voxel_size_um = 0.0;
  double layer_thickness_um = 0.0;
  uint64_t seed = 0;
  std::map<int, ProcessParams> params;
  std::map<int, std::string> geometry;      // "cube" | "complex"
  std::map<int, std::string> volume_paths;  // relative to the manifest
  std::vector<ManifestEntry> entries;       // sorted by (part, layer)
  std::vector<LayerKey> missing;

  size_t triplet_count() const { return entries.size(); }

  ManifestEntry* find(int part, int layer) {
    for (auto& e : entries)
      if (e.part == part && e.layer == layer) return &e;
    return nullptr;
  }

  std::set<int> complex_parts() const {
    std::set<int> out;
    for (const auto& [part, kind] : geometry)
      if (kind == "complex") out.insert(part);
    return out;
  }
};

namespace detail {

inline json::ordered_json pores_to_json(const PoreSet& ps) {
  json::ordered_json arr = json::ordered_json::array();
  for (const auto& p : ps.pores) arr.push_back({{"x", p.x}, {"y", p.y}});
  return arr;
}

inline PoreSet pores_from_json(const json::json& arr, int part, int layer) {
  PoreSet ps;
  ps.part = part;
  ps.layer = layer;
  for (const auto& p : arr) ps.pores.push_back({p.at("x").get<double>(), p.at("y").get<double>()});
  return ps;
}

}  // namespace detail

inline std::string manifest_to_json(const Manifest& m) {
  json::ordered_json j;
  j["schema"] = "pkde-manifest-v1";
  j["parts"] = m.parts;
  j["layers_per_part"] = m.layers_per_part;
  j["triplet_count"] = m.entries.size();
  j["image_width"] = m.image_width;
  j["image_height"] = m.image_height;
  j["voxel_size_um"] = m.voxel_size_um;
  j["layer_thickness_um"] = m.layer_thickness_um;
  j["seed"] = m.seed;

  json::ordered_json params = json::ordered_json::object();
  for (const auto& [part, p] : m.params) {
    params[std::to_string(part)] = {{"laser_power_w", p.laser_power},
                                    {"scan_speed_mm_s", p.scan_speed},
                                    {"hatch_distance_um", p.hatch_distance},
                                    {"layer_thickness_um", p.layer_thickness},
                                    {"energy_density_j_m3", energy_density(p)}};
  }
  j["params"] = params;

  json::ordered_json geom = json::ordered_json::object();
  for (const auto& [part, kind] : m.geometry) geom[std::to_string(part)] = kind;
  j["geometry"] = geom;

  json::ordered_json vols = json::ordered_json::object();
  for (const auto& [part, path] : m.volume_paths) vols[std::to_string(part)] = path;
  j["volumes"] = vols;

  json::ordered_json missing = json::ordered_json::array();
  for (const auto& [p, l] : m.missing) missing.push_back({p, l});
  j["missing"] = missing;

  json::ordered_json entries = json::ordered_json::array();
  for (const auto& e : m.entries) {
    json::ordered_json je;
    je["part"] = e.part;
    je["layer"] = e.layer;
    je["hr"] = e.hr_path;
    je["ot"] = e.ot_path;
    if (e.has_label()) {
      je["pp"] = e.pp_path;
      if (!e.pp_preview_path.empty()) je["pp_preview"] = e.pp_preview_path;
      je["pores"] = detail::pores_to_json(e.pores ? *e.pores : PoreSet{});
    } else {
      je["pp"] = nullptr;
    }
    entries.push_back(je);
  }
  j["triplets"] = entries;
  return j.dump(2) + "\n";
}

inline Manifest manifest_from_json(const std::string& text, const std::string& origin) {
  json::json j;
  try {
    j = json::json::parse(text);
  } catch (const std::exception& e) {
    throw_data("manifest parse error in " + origin + ": " + e.what());
  }
  try {
    Manifest m;
    if (j.at("schema").get<std::string>() != "pkde-manifest-v1")
      throw_data("unsupported manifest schema in " + origin);
    m.parts = j.at("parts").get<int>();
    m.layers_per_part = j.at("layers_per_part").get<int>();
    m.image_width = j.at("image_width").get<int>();
    m.image_height = j.at("image_height").get<int>();
    m.voxel_size_um = j.at("voxel_size_um").get<double>();
    m.layer_thickness_um = j.at("layer_thickness_um").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& [key, val] : j.at("params").items()) {
      ProcessParams p;
      p.part = std::stoi(key);
      p.laser_power = val.at("laser_power_w").get<double>();
      p.scan_speed = val.at("scan_speed_mm_s").get<double>();
      p.hatch_distance = val.at("hatch_distance_um").get<double>();
      p.layer_thickness = val.at("layer_thickness_um").get<double>();
      m.params[p.part] = p;
    }
    for (const auto& [key, val] : j.at("geometry").items())
      m.geometry[std::stoi(key)] = val.get<std::string>();
    for (const auto& [key, val] : j.at("volumes").items())
      m.volume_paths[std::stoi(key)] = val.get<std::string>();
    for (const auto& pair : j.at("missing"))
      m.missing.push_back({pair.at(0).get<int>(), pair.at(1).get<int>()});
    for (const auto& je : j.at("triplets")) {
      ManifestEntry e;
      e.part = je.at("part").get<int>();
      e.layer = je.at("layer").get<int>();
      e.hr_path = je.at("hr").get<std::string>();
      e.ot_path = je.at("ot").get<std::string>();
      if (je.contains("pp") && !je.at("pp").is_null()) {
        e.pp_path = je.at("pp").get<std::string>();
        if (je.contains("pp_preview")) e.pp_preview_path = je.at("pp_preview").get<std::string>();
        if (je.contains("pores")) e.pores = detail::pores_from_json(je.at("pores"), e.part, e.layer);
      }
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::json::exception& e) {
    throw_data("manifest field error in " + origin + ": " + e.what());
  }
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file_bytes(path.string(), manifest_to_json(m));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m = manifest_from_json(read_file_bytes(path.string()), path.string());
  return m;
}

// Loads every triplet's images and assembles the core dataset. Labels must
// exist unless `require_labels` is false, in which case missing labels load
// as all-zero images (useful for prediction-only paths).
inline Dataset load_dataset(const Manifest& m, const std::filesystem::path& base_dir,
                            bool require_labels = true) {
  std::vector<TripletSource> sources;
  sources.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    TripletSource s;
    s.part = e.part;
    s.layer = e.layer;
    s.hr = read_image((base_dir / e.hr_path).string(), Modality::HR);
    s.ot = read_image((base_dir / e.ot_path).string(), Modality::OT);
    if (e.has_label()) {
      s.pp = read_image((base_dir / e.pp_path).string(), Modality::PP);
    } else if (require_labels) {
      throw_data("manifest entry (p=" + std::to_string(e.part) + ", l=" +
                 std::to_string(e.layer) + ") has no label; run the label step first");
    } else {
      s.pp = LayerImage::zeros(Modality::PP, s.hr.width, s.hr.height);
    }
    sources.push_back(std::move(s));
  }
  return assemble_dataset(std::move(sources), m.params);
}

// Split file: three arrays of [part, layer] pairs plus the seed used.
inline std::string split_to_json(const SplitAssignment& split, uint64_t seed) {
  json::ordered_json j;
  j["schema"] = "pkde-split-v1";
  j["seed"] = seed;
  const auto dump_set = [](const std::set<LayerKey>& keys) {
    json::ordered_json arr = json::ordered_json::array();
    for (const auto& [p, l] : keys) arr.push_back({p, l});
    return arr;
  };
  j["train"] = dump_set(split.train);
  j["validation"] = dump_set(split.validation);
  j["test"] = dump_set(split.test);
  return j.dump(2) + "\n";
}

inline SplitAssignment split_from_json(const std::string& text, const std::string& origin,
                                       uint64_t* seed_out = nullptr) {
  json::json j;
  try {
    j = json::json::parse(text);
  } catch (const std::exception& e) {
    throw_data("split parse error in " + origin + ": " + e.what());
  }
  try {
    SplitAssignment s;
    if (seed_out) *seed_out = j.at("seed").get<uint64_t>();
    const auto read_set = [&](const char* name, std::set<LayerKey>& out) {
      for (const auto& pair : j.at(name)) out.insert({pair.at(0).get<int>(), pair.at(1).get<int>()});
    };
    read_set("train", s.train);
    read_set("validation", s.validation);
    read_set("test", s.test);
    return s;
  } catch (const json::json::exception& e) {
    throw_data("split field error in " + origin + ": " + e.what());
  }
}

}  // namespace pkde
