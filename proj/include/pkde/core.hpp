#pragma once

// Shared domain vocabulary: layer images, pore sets, process parameters,
// dataset assembly and seeded train/validation/test splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pkde/error.hpp"
#include "pkde/rng.hpp"

namespace pkde {

using LayerKey = std::pair<int, int>;  // (part, layer), both 1-based

// A single defect coordinate in the continuous image frame of its layer.
// Pixel (i, j) sits at continuous coordinate (i, j); see labeler for the
// sampling convention.
struct PorePosition {
  double x = 0.0;
  double y = 0.0;
};

struct PoreSet {
  std::vector<PorePosition> pores;
  int layer = 1;
  int part = 1;

  int count() const { return int(pores.size()); }
};

enum class Modality { HR, OT, CT, PP };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::HR: return "HR";
    case Modality::OT: return "OT";
    case Modality::CT: return "CT";
    case Modality::PP: return "PP";
  }
  return "?";
}

// Single-channel raster. data is row-major: data[y * width + x].
struct LayerImage {
  Modality modality = Modality::CT;
  int width = 0;
  int height = 0;
  std::vector<float> data;

  static LayerImage zeros(Modality m, int w, int h) {
    if (w <= 0 || h <= 0) throw_invalid("LayerImage: dimensions must be positive");
    LayerImage img;
    img.modality = m;
    img.width = w;
    img.height = h;
    img.data.assign(size_t(w) * size_t(h), 0.0f);
    return img;
  }

  float& at(int x, int y) { return data[size_t(y) * width + x]; }
  float at(int x, int y) const { return data[size_t(y) * width + x]; }
  size_t size() const { return data.size(); }

  void validate() const {
    if (width <= 0 || height <= 0) throw_invalid("LayerImage: dimensions must be positive");
    if (data.size() != size_t(width) * size_t(height))
      throw_invalid("LayerImage: data length does not match width*height");
    for (float v : data) {
      if (!std::isfinite(v)) throw_invalid("LayerImage: non-finite value");
      if (modality == Modality::PP && (v < 0.0f || v > 1.0f))
        throw_invalid("LayerImage: PP value outside [0,1]");
    }
  }
};

// The label modality; produced by labeler::kde_label, values in [0,1].
using PoreProbabilityImage = LayerImage;

// Machine settings for one part. Units follow the machine sheet: W, mm/s,
// um, um. energy_density() converts to SI internally.
struct ProcessParams {
  int part = 0;
  double laser_power = 0.0;     // W
  double scan_speed = 0.0;      // mm/s
  double hatch_distance = 0.0;  // um
  double layer_thickness = 0.0; // um

  void validate() const {
    const double vals[] = {laser_power, scan_speed, hatch_distance, layer_thickness};
    for (double v : vals)
      if (!(v > 0.0) || !std::isfinite(v))
        throw_invalid("ProcessParams: values must be positive and finite (part " +
                      std::to_string(part) + ")");
  }
};

// Volumetric energy input in J/m^3: power over (speed * hatch * thickness).
inline double energy_density(const ProcessParams& p) {
  p.validate();
  const double v_si = p.scan_speed * 1e-3;       // mm/s -> m/s
  const double h_si = p.hatch_distance * 1e-6;   // um -> m
  const double t_si = p.layer_thickness * 1e-6;  // um -> m
  const double ev = p.laser_power / (v_si * h_si * t_si);
  if (!(ev > 0.0) || !std::isfinite(ev)) throw_invalid("energy_density: non-finite result");
  return ev;
}

struct LayerTriplet {
  int part = 0;
  int layer = 0;
  LayerImage hr;
  LayerImage ot;
  LayerImage pp;

  LayerKey key() const { return {part, layer}; }
};

// Triplets sorted by (part, layer); keys unique; gaps allowed.
struct Dataset {
  int parts = 0;            // part count (upper bound on part index)
  int layers_per_part = 0;  // layer count (upper bound on layer index)
  std::vector<LayerTriplet> triplets;
  std::map<int, ProcessParams> params;

  size_t size() const { return triplets.size(); }

  const LayerTriplet* find(int part, int layer) const {
    LayerKey k{part, layer};
    auto it = std::lower_bound(triplets.begin(), triplets.end(), k,
                               [](const LayerTriplet& t, const LayerKey& key) {
                                 return t.key() < key;
                               });
    if (it == triplets.end() || it->key() != k) return nullptr;
    return &*it;
  }

  std::vector<LayerKey> keys() const {
    std::vector<LayerKey> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) out.push_back(t.key());
    return out;
  }
};

struct TripletSource {
  int part = 0;
  int layer = 0;
  LayerImage hr;
  LayerImage ot;
  LayerImage pp;
};

// Builds a Dataset from per-layer triplets. Rejects duplicate (part, layer)
// keys and dimension mismatches, naming the offending key.
inline Dataset assemble_dataset(std::vector<TripletSource> sources,
                                std::map<int, ProcessParams> params) {
  Dataset d;
  d.params = std::move(params);
  for (auto& [part, pp] : d.params) pp.validate();

  std::sort(sources.begin(), sources.end(), [](const TripletSource& a, const TripletSource& b) {
    return std::make_pair(a.part, a.layer) < std::make_pair(b.part, b.layer);
  });
  d.triplets.reserve(sources.size());
  for (auto& s : sources) {
    const std::string where =
        "(p=" + std::to_string(s.part) + ", l=" + std::to_string(s.layer) + ")";
    if (s.part < 1 || s.layer < 1) throw_data("assemble_dataset: indices must be 1-based " + where);
    if (!d.triplets.empty() && d.triplets.back().key() == LayerKey{s.part, s.layer})
      throw_data("assemble_dataset: duplicate key " + where);
    const bool same_dims = s.hr.width == s.ot.width && s.hr.height == s.ot.height &&
                           s.hr.width == s.pp.width && s.hr.height == s.pp.height;
    if (!same_dims) throw_data("assemble_dataset: dimension mismatch " + where);
    LayerTriplet t;
    t.part = s.part;
    t.layer = s.layer;
    t.hr = std::move(s.hr);
    t.ot = std::move(s.ot);
    t.pp = std::move(s.pp);
    d.parts = std::max(d.parts, t.part);
    d.layers_per_part = std::max(d.layers_per_part, t.layer);
    d.triplets.push_back(std::move(t));
  }
  return d;
}

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct SplitAssignment {
  std::set<LayerKey> train;
  std::set<LayerKey> validation;
  std::set<LayerKey> test;

  // The three sets must be pairwise disjoint and cover `keys` exactly.
  void validate_partition(const std::vector<LayerKey>& keys) const {
    std::set<LayerKey> all(keys.begin(), keys.end());
    if (train.size() + validation.size() + test.size() != all.size())
      throw_invalid("SplitAssignment: sizes do not sum to dataset size");
    for (const auto& k : train)
      if (validation.count(k) || test.count(k) || !all.count(k))
        throw_invalid("SplitAssignment: overlapping or foreign key in train");
    for (const auto& k : validation)
      if (test.count(k) || !all.count(k))
        throw_invalid("SplitAssignment: overlapping or foreign key in validation");
    for (const auto& k : test)
      if (!all.count(k)) throw_invalid("SplitAssignment: foreign key in test");
  }
};

// Stream-purpose tags so independent consumers of one seed never collide.
inline constexpr uint64_t kStreamSplit = 0x53504C49ull;
inline constexpr uint64_t kStreamPores = 0x504F5245ull;
inline constexpr uint64_t kStreamNoise = 0x4E4F4953ull;
inline constexpr uint64_t kStreamInit = 0x494E4954ull;
inline constexpr uint64_t kStreamShuffle = 0x53485546ull;
inline constexpr uint64_t kStreamTuner = 0x54554E45ull;

namespace detail {

// Round half away from zero.
inline long long round_half_away(double x) {
  return x >= 0 ? (long long)std::floor(x + 0.5) : (long long)std::ceil(x - 0.5);
}

// Largest-remainder apportionment of `total` over weights, so per-part
// contributions stay proportional while the global size is hit exactly.
inline std::vector<int> apportion(const std::vector<int>& weights, int total) {
  const long long wsum = std::accumulate(weights.begin(), weights.end(), 0ll);
  std::vector<int> out(weights.size(), 0);
  if (wsum == 0 || total <= 0) return out;
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double quota = double(total) * double(weights[i]) / double(wsum);
    out[i] = int(std::floor(quota));
    assigned += out[i];
    remainders.push_back({quota - std::floor(quota), i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - assigned; ++k) out[remainders[size_t(k)].second] += 1;
  return out;
}

}  // namespace detail

// Seeded, per-part stratified split. Global validation/test sizes use
// round-half-away-from-zero on the fractions; train absorbs the remainder.
inline SplitAssignment split_dataset(const Dataset& d, SplitFractions fractions, uint64_t seed) {
  if (d.triplets.empty()) throw_invalid("split_dataset: empty dataset");
  const double fsum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(fsum - 1.0) > 1e-9) throw_invalid("split_dataset: fractions must sum to 1");
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0)
    throw_invalid("split_dataset: fractions must be non-negative");

  const int total = int(d.triplets.size());
  int n_test = int(detail::round_half_away(fractions.test * total));
  int n_val = int(detail::round_half_away(fractions.validation * total));
  n_test = std::clamp(n_test, 0, total);
  n_val = std::clamp(n_val, 0, total - n_test);

  // Group layers per part, in ascending layer order.
  std::map<int, std::vector<int>> layers_by_part;
  for (const auto& t : d.triplets) layers_by_part[t.part].push_back(t.layer);

  std::vector<int> part_ids, part_sizes;
  for (const auto& [part, layers] : layers_by_part) {
    part_ids.push_back(part);
    part_sizes.push_back(int(layers.size()));
  }
  std::vector<int> test_quota = detail::apportion(part_sizes, n_test);
  // Apportion validation within what each part has left after the test draw.
  std::vector<int> remaining = part_sizes;
  for (size_t i = 0; i < remaining.size(); ++i) remaining[i] -= test_quota[i];
  std::vector<int> val_quota = detail::apportion(remaining, n_val);

  SplitAssignment out;
  for (size_t i = 0; i < part_ids.size(); ++i) {
    const int part = part_ids[i];
    auto layers = layers_by_part[part];
    CounterRng rng(seed, stream_key({kStreamSplit, uint64_t(part)}));
    rng.shuffle(layers.begin(), layers.end());
    int idx = 0;
    for (int k = 0; k < test_quota[i]; ++k) out.test.insert({part, layers[size_t(idx++)]});
    for (int k = 0; k < val_quota[i]; ++k) out.validation.insert({part, layers[size_t(idx++)]});
    for (; idx < int(layers.size()); ++idx) out.train.insert({part, layers[size_t(idx)]});
  }
  out.validate_partition(d.keys());
  return out;
}

}  // namespace pkde
