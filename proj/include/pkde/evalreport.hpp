#pragma once

// Per-layer MAE scoring, grouping by geometry section and process parameter,
// box-plot statistics (type-7 quartiles, 1.5*IQR whiskers), failure-mode
// flags, and CSV/JSON report emission.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/json_compat.hpp"

namespace pkde::evalreport {

enum class GeometrySection { PreOverhang, Overhang, PreRound, Round };

inline const char* section_name(GeometrySection s) {
  switch (s) {
    case GeometrySection::PreOverhang: return "pre_overhang";
    case GeometrySection::Overhang: return "overhang";
    case GeometrySection::PreRound: return "pre_round";
    case GeometrySection::Round: return "round";
  }
  return "?";
}

// Reference layout of the complex geometry: slits up to 245, overhangs to
// 430, plain section to 487, round features to 712.
inline constexpr int kReferenceLayers = 712;
inline constexpr std::array<int, 3> kReferenceBoundaries = {245, 430, 487};

// Four inclusive layer ranges covering [1, layers] with no overlap. Ranges
// can be empty (lo > hi) when `layers` is very small.
struct SectionPlan {
  int layers = kReferenceLayers;
  std::array<std::pair<int, int>, 4> ranges = {
      std::pair{1, 245}, std::pair{246, 430}, std::pair{431, 487}, std::pair{488, 712}};

  // Boundaries scale proportionally (round half up) for other layer counts.
  static SectionPlan scaled(int layers) {
    if (layers < 1) throw_invalid("SectionPlan: layers must be >= 1");
    SectionPlan p;
    p.layers = layers;
    std::array<int, 3> b{};
    for (int i = 0; i < 3; ++i)
      b[size_t(i)] =
          int(std::floor(double(kReferenceBoundaries[size_t(i)]) * layers / kReferenceLayers + 0.5));
    p.ranges = {std::pair{1, b[0]}, std::pair{b[0] + 1, b[1]}, std::pair{b[1] + 1, b[2]},
                std::pair{b[2] + 1, layers}};
    return p;
  }

  bool is_reference_scale() const { return layers == kReferenceLayers; }

  GeometrySection section_of(int layer) const {
    if (layer < 1 || layer > layers)
      throw_invalid("section_of: layer " + std::to_string(layer) + " outside [1, " +
                    std::to_string(layers) + "]");
    for (int i = 0; i < 4; ++i)
      if (layer >= ranges[size_t(i)].first && layer <= ranges[size_t(i)].second)
        return GeometrySection(i);
    throw_invalid("section_of: plan does not cover layer " + std::to_string(layer));
  }
};

// The reference-scale mapping over [1, 712].
inline GeometrySection section_of_layer(int layer) { return SectionPlan{}.section_of(layer); }

struct LayerScore {
  int part = 0;
  int layer = 0;
  double mae = 0.0;
  std::optional<GeometrySection> section;  // complex-geometry parts only
};

inline double image_mae(const LayerImage& a, const LayerImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw_invalid("image_mae: dimension mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(double(a.data[i]) - double(b.data[i]));
  return sum / double(a.data.size());
}

// One MAE per (part, layer); prediction and label key sets must match.
inline std::vector<LayerScore> score_layers(const std::map<LayerKey, LayerImage>& predictions,
                                            const std::map<LayerKey, LayerImage>& labels) {
  std::string missing;
  for (const auto& [k, img] : labels)
    if (!predictions.count(k))
      missing += " (p=" + std::to_string(k.first) + ",l=" + std::to_string(k.second) + ")";
  for (const auto& [k, img] : predictions)
    if (!labels.count(k))
      missing += " (p=" + std::to_string(k.first) + ",l=" + std::to_string(k.second) + ")";
  if (!missing.empty()) throw_data("score_layers: key mismatch:" + missing);
  std::vector<LayerScore> out;
  out.reserve(predictions.size());
  for (const auto& [k, pred] : predictions) {
    LayerScore s;
    s.part = k.first;
    s.layer = k.second;
    s.mae = image_mae(pred, labels.at(k));
    out.push_back(s);
  }
  return out;
}

inline void attach_sections(std::vector<LayerScore>& scores, const std::set<int>& complex_parts,
                            const SectionPlan& plan) {
  for (auto& s : scores)
    if (complex_parts.count(s.part)) s.section = plan.section_of(s.layer);
}

struct BoxStats {
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  std::vector<LayerScore> outliers;
  int count = 0;
};

namespace detail {

// Type-7 quantile: linear interpolation between order statistics.
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = double(n - 1) * p;
  const size_t lo = size_t(std::floor(h));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline BoxStats box_stats(const std::vector<LayerScore>& scores) {
  if (scores.empty()) throw_invalid("box_stats: empty group");
  std::vector<double> vals;
  vals.reserve(scores.size());
  for (const auto& s : scores) vals.push_back(s.mae);
  std::sort(vals.begin(), vals.end());

  BoxStats b;
  b.count = int(scores.size());
  b.q1 = detail::quantile_type7(vals, 0.25);
  b.median = detail::quantile_type7(vals, 0.50);
  b.q3 = detail::quantile_type7(vals, 0.75);
  const double iqr = b.q3 - b.q1;
  const double fence_lo = b.q1 - 1.5 * iqr;
  const double fence_hi = b.q3 + 1.5 * iqr;
  // Whiskers sit at the most extreme observations inside the fences.
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : vals)
    if (v >= fence_lo) {
      b.whisker_low = v;
      break;
    }
  for (auto it = vals.rbegin(); it != vals.rend(); ++it)
    if (*it <= fence_hi) {
      b.whisker_high = *it;
      break;
    }
  for (const auto& s : scores)
    if (s.mae < b.whisker_low || s.mae > b.whisker_high) b.outliers.push_back(s);
  std::sort(b.outliers.begin(), b.outliers.end(), [](const LayerScore& a, const LayerScore& c) {
    return LayerKey{a.part, a.layer} < LayerKey{c.part, c.layer};
  });
  return b;
}

enum class GroupBy { part, section, laser_power, scan_speed, hatch_distance, energy_density };

inline const char* group_by_name(GroupBy g) {
  switch (g) {
    case GroupBy::part: return "part";
    case GroupBy::section: return "section";
    case GroupBy::laser_power: return "laser_power";
    case GroupBy::scan_speed: return "scan_speed";
    case GroupBy::hatch_distance: return "hatch_distance";
    case GroupBy::energy_density: return "energy_density";
  }
  return "?";
}

// Shortest round-trip decimal text for a double; stable across runs.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct GroupedStats {
  // Sorted ascending by the natural key; the string form is the report key.
  std::vector<std::pair<std::string, BoxStats>> groups;
};

inline GroupedStats group_stats(const std::vector<LayerScore>& scores, GroupBy group_by,
                                const std::map<int, ProcessParams>& params = {}) {
  if (scores.empty()) throw_invalid("group_stats: no scores");

  const auto param_value = [&](int part) -> double {
    auto it = params.find(part);
    if (it == params.end())
      throw_data("group_stats: no process parameters for part " + std::to_string(part));
    switch (group_by) {
      case GroupBy::laser_power: return it->second.laser_power;
      case GroupBy::scan_speed: return it->second.scan_speed;
      case GroupBy::hatch_distance: return it->second.hatch_distance;
      case GroupBy::energy_density: return energy_density(it->second);
      default: return 0.0;
    }
  };

  GroupedStats out;
  if (group_by == GroupBy::section) {
    std::map<int, std::vector<LayerScore>> by_section;
    for (const auto& s : scores)
      if (s.section) by_section[int(*s.section)].push_back(s);
    if (by_section.empty()) throw_invalid("group_stats: no sectioned scores");
    for (const auto& [sec, group] : by_section)
      out.groups.push_back({section_name(GeometrySection(sec)), box_stats(group)});
    return out;
  }

  std::map<double, std::vector<LayerScore>> by_key;
  for (const auto& s : scores) {
    const double key = group_by == GroupBy::part ? double(s.part) : param_value(s.part);
    by_key[key].push_back(s);
  }
  for (const auto& [key, group] : by_key)
    out.groups.push_back({format_double(key), box_stats(group)});
  return out;
}

enum class FailureMode { NoPrediction, Misaligned };

inline const char* failure_mode_name(FailureMode m) {
  return m == FailureMode::NoPrediction ? "no_prediction" : "misaligned";
}

struct FailureFlag {
  int part = 0;
  int layer = 0;
  FailureMode mode = FailureMode::Misaligned;
};

// A flat prediction against a clear label reads as NoPrediction; anything
// else as Misaligned.
inline FailureMode classify_failure(double pred_max, double label_max) {
  return (pred_max < 0.1 && label_max >= 0.5) ? FailureMode::NoPrediction
                                              : FailureMode::Misaligned;
}

// Layers whose MAE exceeds the threshold, classified by failure mode.
inline std::vector<FailureFlag> flag_failures(const std::vector<LayerScore>& scores,
                                              double threshold,
                                              const std::map<LayerKey, LayerImage>& predictions,
                                              const std::map<LayerKey, LayerImage>& labels) {
  std::vector<FailureFlag> out;
  for (const auto& s : scores) {
    if (!(s.mae > threshold)) continue;
    const LayerKey k{s.part, s.layer};
    auto pit = predictions.find(k);
    auto lit = labels.find(k);
    if (pit == predictions.end() || lit == labels.end())
      throw_data("flag_failures: missing image for flagged layer");
    const auto max_of = [](const LayerImage& img) {
      float m = img.data.empty() ? 0.0f : img.data[0];
      for (float v : img.data) m = std::max(m, v);
      return double(m);
    };
    FailureFlag f;
    f.part = s.part;
    f.layer = s.layer;
    f.mode = classify_failure(max_of(pit->second), max_of(lit->second));
    out.push_back(f);
  }
  return out;
}

struct Report {
  std::vector<LayerScore> scores;
  std::vector<std::pair<std::string, GroupedStats>> groupings;
  std::vector<FailureFlag> flags;
};

// CSV: one row per layer score, '.' decimal, ',' separator, header row.
inline std::string report_csv(const Report& report, const std::map<int, ProcessParams>& params) {
  std::string out = "part,layer,mae,section,laser_power,scan_speed,hatch_distance,energy_density\n";
  for (const auto& s : report.scores) {
    out += std::to_string(s.part) + "," + std::to_string(s.layer) + "," + format_double(s.mae) +
           ",";
    out += s.section ? section_name(*s.section) : "";
    auto it = params.find(s.part);
    if (it != params.end()) {
      out += "," + format_double(it->second.laser_power) + "," +
             format_double(it->second.scan_speed) + "," +
             format_double(it->second.hatch_distance) + "," +
             format_double(energy_density(it->second));
    } else {
      out += ",,,,";
    }
    out += "\n";
  }
  return out;
}

inline json::ordered_json box_stats_json(const BoxStats& b) {
  json::ordered_json j;
  j["count"] = b.count;
  j["median"] = b.median;
  j["q1"] = b.q1;
  j["q3"] = b.q3;
  j["whisker_low"] = b.whisker_low;
  j["whisker_high"] = b.whisker_high;
  auto arr = json::ordered_json::array();
  for (const auto& o : b.outliers)
    arr.push_back({{"part", o.part}, {"layer", o.layer}, {"mae", o.mae}});
  j["outliers"] = arr;
  return j;
}

inline std::string report_json(const Report& report) {
  json::ordered_json j;
  j["schema"] = "pkde-report-v1";
  json::ordered_json groups = json::ordered_json::object();
  for (const auto& [name, grouped] : report.groupings) {
    json::ordered_json g = json::ordered_json::object();
    for (const auto& [key, stats] : grouped.groups) g[key] = box_stats_json(stats);
    groups[name] = g;
  }
  j["groups"] = groups;
  auto flags = json::ordered_json::array();
  for (const auto& f : report.flags)
    flags.push_back({{"part", f.part}, {"layer", f.layer}, {"mode", failure_mode_name(f.mode)}});
  j["flags"] = flags;
  return j.dump(2) + "\n";
}

}  // namespace pkde::evalreport
