#pragma once

// Synthetic build generator: layerwise part cross-sections for the two test
// geometries, energy-density-dependent pore seeding, HR/OT-style renders,
// and a voxel volume whose carved voids match the seeded pores so the CT
// pipeline re-detects them.
//
// Every random draw is keyed on (seed, part, layer, purpose) through the
// counter RNG, so builds are pure functions of the seed tuple and parallel
// layer generation matches serial generation byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/evalreport.hpp"
#include "pkde/rng.hpp"
#include "pkde/xct.hpp"

namespace pkde::synth {

enum class GeometryKind { cube, complex_part };

inline const char* geometry_name(GeometryKind k) {
  return k == GeometryKind::cube ? "cube" : "complex";
}

inline GeometryKind geometry_from_name(const std::string& name) {
  if (name == "cube") return GeometryKind::cube;
  if (name == "complex") return GeometryKind::complex_part;
  throw_data("unknown geometry kind: " + name);
}

struct GeometrySpec {
  GeometryKind kind = GeometryKind::cube;
  double size_mm = 20.0;  // edge length of the part footprint
  evalreport::SectionPlan section_plan;  // drives the complex feature families

  static GeometrySpec cube(double size_mm = 20.0) {
    GeometrySpec g;
    g.kind = GeometryKind::cube;
    g.size_mm = size_mm;
    return g;
  }

  static GeometrySpec complex_geometry(int layers, double size_mm = 20.0) {
    GeometrySpec g;
    g.kind = GeometryKind::complex_part;
    g.size_mm = size_mm;
    g.section_plan = evalreport::SectionPlan::scaled(layers);
    return g;
  }
};

namespace detail {

struct PartRect {
  int x0, y0, x1, y1;  // half-open pixel bounds of the part footprint
  int cx() const { return (x0 + x1) / 2; }
  int cy() const { return (y0 + y1) / 2; }
  int side() const { return x1 - x0; }
};

// The part footprint fills the crop with a 1/8 margin on each side.
inline PartRect part_rect(int width, int height) {
  const int side = std::max(2, (std::min(width, height) * 3) / 4);
  const int x0 = (width - side) / 2;
  const int y0 = (height - side) / 2;
  return {x0, y0, x0 + side, y0 + side};
}

inline void fill_rect(LayerImage& img, int x0, int y0, int x1, int y1, float v) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(x, y) = v;
}

inline double section_progress(const evalreport::SectionPlan& plan, int section, int layer) {
  const auto [lo, hi] = plan.ranges[size_t(section)];
  if (hi <= lo) return 0.0;
  return double(layer - lo) / double(hi - lo);
}

}  // namespace detail

// Binary cross-section mask (1 = part material) at the given layer. The cube
// is a constant centered square; the complex geometry walks through four
// feature families: angular slits, a widening overhang, a plain section,
// then shrinking discs.
inline LayerImage cross_section(const GeometrySpec& geom, int layer, int width, int height) {
  if (width < 8 || height < 8) throw_invalid("cross_section: image too small");
  const int layers = geom.section_plan.layers;
  if (geom.kind == GeometryKind::complex_part && (layer < 1 || layer > layers))
    throw_invalid("cross_section: layer " + std::to_string(layer) + " outside [1, " +
                  std::to_string(layers) + "]");
  if (layer < 1) throw_invalid("cross_section: layer must be >= 1");

  LayerImage mask = LayerImage::zeros(Modality::CT, width, height);
  const auto r = detail::part_rect(width, height);

  if (geom.kind == GeometryKind::cube) {
    detail::fill_rect(mask, r.x0, r.y0, r.x1, r.y1, 1.0f);
    return mask;
  }

  using evalreport::GeometrySection;
  const auto section = geom.section_plan.section_of(layer);
  const double t = detail::section_progress(geom.section_plan, int(section), layer);

  switch (section) {
    case GeometrySection::PreOverhang: {
      // Full square with three vertical slits cut out.
      detail::fill_rect(mask, r.x0, r.y0, r.x1, r.y1, 1.0f);
      const int slit_w = std::max(1, r.side() / 12);
      for (double frac : {0.25, 0.5, 0.75}) {
        const int sx = r.x0 + int(frac * r.side()) - slit_w / 2;
        detail::fill_rect(mask, sx, r.y0 + r.side() / 8, sx + slit_w, r.y1 - r.side() / 8, 0.0f);
      }
      break;
    }
    case GeometrySection::Overhang: {
      // Rectangle widening with height: the overhang grows past the base.
      const int base_w = std::max(2, int(r.side() * 0.55));
      const int grow = int(t * (r.side() - base_w));
      const int w2 = (base_w + grow) / 2;
      detail::fill_rect(mask, r.cx() - w2, r.y0, r.cx() + w2, r.y1, 1.0f);
      break;
    }
    case GeometrySection::PreRound: {
      detail::fill_rect(mask, r.x0, r.y0, r.x1, r.y1, 1.0f);
      break;
    }
    case GeometrySection::Round: {
      // Disc shrinking toward the top, like a dome sliced ever higher.
      const double radius = (0.5 - 0.32 * t) * r.side();
      const double rr = radius * radius;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double dx = x - r.cx();
          const double dy = y - r.cy();
          if (dx * dx + dy * dy <= rr) mask.at(x, y) = 1.0f;
        }
      break;
    }
  }
  return mask;
}

// Stochastic pore surrogate. The expected count per layer is
//   base_rate * (1 + energy_sensitivity * ln(Ev / Ev_nominal)^2),
// a U shape in log energy density: both starved and overdriven settings pore
// more than the nominal one.
struct PoreModel {
  double base_rate = 2.0;          // expected pores per layer at nominal energy density
  double energy_sensitivity = 1.0; // curvature of the U shape
  uint64_t seed = 0;

  void validate() const {
    if (!(base_rate >= 0.0) || !std::isfinite(base_rate))
      throw_invalid("PoreModel: base_rate must be >= 0");
    if (!(energy_sensitivity >= 0.0)) throw_invalid("PoreModel: energy_sensitivity must be >= 0");
  }
};

inline constexpr double kNominalEnergyDensity = 60e9;  // J/m^3, mid-range setting

inline double expected_pore_rate(const PoreModel& model, const ProcessParams& params) {
  model.validate();
  const double dev = std::log(energy_density(params) / kNominalEnergyDensity);
  return model.base_rate * (1.0 + model.energy_sensitivity * dev * dev);
}

// Poisson-count pores placed uniformly inside the mask; fully determined by
// (model.seed, part, layer).
inline PoreSet seed_pores(const LayerImage& mask, const ProcessParams& params,
                          const PoreModel& model, int layer) {
  model.validate();
  std::vector<int> on_pixels;
  for (int i = 0; i < int(mask.data.size()); ++i)
    if (mask.data[size_t(i)] > 0.5f) on_pixels.push_back(i);
  if (on_pixels.empty()) throw_invalid("seed_pores: empty mask");

  PoreSet out;
  out.part = params.part;
  out.layer = layer;
  CounterRng rng(model.seed, stream_key({kStreamPores, uint64_t(params.part), uint64_t(layer)}));
  const int count = rng.next_poisson(expected_pore_rate(model, params));
  out.pores.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    const int pix = on_pixels[rng.uniform_int(uint32_t(on_pixels.size()))];
    const int px = pix % mask.width;
    const int py = pix / mask.width;
    // Jitter within the pixel cell so coordinates are continuous.
    const double x = std::clamp(px + (rng.next_double() - 0.5), 0.0, mask.width - 1e-6);
    const double y = std::clamp(py + (rng.next_double() - 0.5), 0.0, mask.height - 1e-6);
    out.pores.push_back({x, y});
  }
  return out;
}

struct RenderConfig {
  double hr_noise = 0.04;
  double ot_noise = 0.02;
  double hr_pore_strength = 0.25;  // dark dimple amplitude in the HR render
  double ot_pore_strength = 0.6;   // hot-spot amplitude in the OT render
  double pore_sigma_px = 1.8;      // signature radius; window truncated at 3 sigma
  int ot_smooth_radius = 2;        // box-blur radius for the OT base
};

namespace detail {

// Separable box blur, replicated edges.
inline LayerImage box_blur(const LayerImage& img, int radius) {
  if (radius <= 0) return img;
  LayerImage tmp = img, out = img;
  const double inv = 1.0 / (2 * radius + 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int k = -radius; k <= radius; ++k)
        s += img.at(std::clamp(x + k, 0, img.width - 1), y);
      tmp.at(x, y) = float(s * inv);
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int k = -radius; k <= radius; ++k)
        s += tmp.at(x, std::clamp(y + k, 0, img.height - 1));
      out.at(x, y) = float(s * inv);
    }
  return out;
}

// Truncated Gaussian bump added in place around (px, py).
inline void add_bump(LayerImage& img, double px, double py, double amplitude, double sigma) {
  const double window = 3.0 * sigma;
  const int x_lo = std::max(0, int(std::ceil(px - window)));
  const int x_hi = std::min(img.width - 1, int(std::floor(px + window)));
  const int y_lo = std::max(0, int(std::ceil(py - window)));
  const int y_hi = std::min(img.height - 1, int(std::floor(py + window)));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x) {
      const double r2 = (x - px) * (x - px) + (y - py) * (y - py);
      if (r2 > window * window) continue;
      img.at(x, y) += float(amplitude * std::exp(-r2 * inv2s2));
    }
}

}  // namespace detail

// Monotone map from energy density to the OT base level, in (0, 1).
inline double ot_level(double energy_density_value) {
  return energy_density_value / (energy_density_value + kNominalEnergyDensity);
}

struct RenderedLayer {
  LayerImage hr;
  LayerImage ot;
};

// HR: part texture (scan stripes rotating 67 degrees per layer) + speckle
// noise + a faint dark dimple per pore. OT: blurred mask scaled by the
// energy-density level + a localized hot spot per pore + noise. Signature
// strengths of zero give a no-signal regime.
inline RenderedLayer render_modalities(const LayerImage& mask, const PoreSet& pores,
                                       const ProcessParams& params, uint64_t noise_seed,
                                       const RenderConfig& cfg = {}) {
  RenderedLayer out;
  out.hr = LayerImage::zeros(Modality::HR, mask.width, mask.height);
  out.ot = LayerImage::zeros(Modality::OT, mask.width, mask.height);

  const double theta = double(pores.layer) * 67.0 * 3.14159265358979323846 / 180.0;
  const double kx = std::cos(theta) * (2.0 * 3.14159265358979323846 / 6.0);
  const double ky = std::sin(theta) * (2.0 * 3.14159265358979323846 / 6.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const bool on = mask.at(x, y) > 0.5f;
      const double stripes = 0.06 * std::sin(kx * x + ky * y);
      out.hr.at(x, y) = float(on ? 0.55 + stripes : 0.15);
    }

  LayerImage base = detail::box_blur(mask, cfg.ot_smooth_radius);
  const double level = ot_level(energy_density(params));
  for (size_t i = 0; i < base.data.size(); ++i)
    out.ot.data[i] = float(base.data[i] * level);

  for (const auto& p : pores.pores) {
    detail::add_bump(out.hr, p.x, p.y, -cfg.hr_pore_strength, cfg.pore_sigma_px);
    detail::add_bump(out.ot, p.x, p.y, cfg.ot_pore_strength, cfg.pore_sigma_px);
  }

  if (cfg.hr_noise > 0.0 || cfg.ot_noise > 0.0) {
    CounterRng rng(noise_seed,
                   stream_key({kStreamNoise, uint64_t(pores.part), uint64_t(pores.layer)}));
    for (size_t i = 0; i < out.hr.data.size(); ++i) {
      out.hr.data[i] += float(cfg.hr_noise * (rng.next_double() - 0.5));
      out.ot.data[i] += float(cfg.ot_noise * (rng.next_double() - 0.5));
    }
  }
  for (float& v : out.hr.data) v = std::clamp(v, 0.0f, 1.0f);
  for (float& v : out.ot.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

// Intensity scale of the synthetic CT volumes. Everything except carved pore
// voids sits above the detection threshold; slits and surroundings are filled
// at a lower background level so thresholding isolates pores only.
inline constexpr float kVolumeMaterial = 22000.0f;
inline constexpr float kVolumeBackground = 16000.0f;
inline constexpr float kVolumeVoid = 3000.0f;
inline constexpr double kDefaultThreshold = 11500.0;

struct SynthPlanEntry {
  int part = 0;
  GeometrySpec geometry;
  ProcessParams params;
};

struct SynthOptions {
  int layers = 32;
  int width = 64;
  int height = 64;
  uint64_t seed = 0;
  PoreModel pore_model{2.0, 1.0, 0};  // seed field is overridden from `seed`
  RenderConfig render;
  double voxel_size_um = 30.0;
  double layer_thickness_um = 30.0;
  double pore_void_radius_vx = 1.0;  // carve radius in voxels
  std::set<LayerKey> drop;           // explicitly absent (part, layer) keys
};

struct SyntheticBuild {
  std::map<LayerKey, LayerImage> hr;
  std::map<LayerKey, LayerImage> ot;
  std::map<LayerKey, PoreSet> seeded;  // ground truth
  std::map<int, xct::VoxelVolume> volumes;
  std::map<int, ProcessParams> params;
  std::map<int, GeometryKind> geometry;
  int layers = 0;
  int width = 0, height = 0;
  double voxel_size_um = 0, layer_thickness_um = 0;
  uint64_t seed = 0;
  std::set<LayerKey> missing;
};

namespace detail {

// Voids are carved as flat discs within one voxel plane so the centroid's z
// sits exactly on the layer it was seeded in, independent of neighbors.
inline void carve_void(xct::VoxelVolume& vol, int cx, int cy, int cz, double radius) {
  const int r = int(std::floor(radius));
  const double rr = radius * radius;
  if (cz < 0 || cz >= vol.nz) return;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > rr) continue;
      const int x = cx + dx, y = cy + dy;
      if (x < 0 || x >= vol.nx || y < 0 || y >= vol.ny) continue;
      vol.at(x, y, cz) = kVolumeVoid;
    }
}

}  // namespace detail

// The full generator. Per part it emits a voxel volume whose voids match the
// seeded pores, plus HR/OT renders per layer. Pore-probability labels are
// not produced here; they come from the detection + labeling pipeline.
inline SyntheticBuild build_synthetic_dataset(const std::vector<SynthPlanEntry>& plan,
                                              const SynthOptions& opt) {
  if (plan.empty()) throw_invalid("build_synthetic_dataset: empty plan");
  if (opt.layers < 1) throw_invalid("build_synthetic_dataset: layers must be >= 1");
  if (!(opt.layer_thickness_um >= opt.voxel_size_um))
    throw_invalid("build_synthetic_dataset: layer thickness below voxel size");
  const double ratio = opt.layer_thickness_um / opt.voxel_size_um;
  if (std::abs(ratio - std::floor(ratio + 0.5)) > 1e-9)
    throw_invalid("build_synthetic_dataset: layer thickness must be an integer voxel multiple");
  std::set<int> seen;
  for (const auto& e : plan) {
    if (!seen.insert(e.part).second)
      throw_data("build_synthetic_dataset: duplicate part index " + std::to_string(e.part));
    e.params.validate();
  }

  SyntheticBuild out;
  out.layers = opt.layers;
  out.width = opt.width;
  out.height = opt.height;
  out.voxel_size_um = opt.voxel_size_um;
  out.layer_thickness_um = opt.layer_thickness_um;
  out.seed = opt.seed;
  out.missing = opt.drop;

  PoreModel model = opt.pore_model;
  model.seed = opt.seed;

  const int planes_per_layer = int(std::floor(opt.layer_thickness_um / opt.voxel_size_um + 1e-9));
  const int nz = opt.layers * planes_per_layer;

  for (const auto& entry : plan) {
    out.params[entry.part] = entry.params;
    out.geometry[entry.part] = entry.geometry.kind;
    auto vol =
        xct::VoxelVolume::filled(opt.width, opt.height, nz, opt.voxel_size_um, kVolumeBackground);

    std::vector<std::pair<int, PorePosition>> carve_list;  // (z_center, position)
    for (int layer = 1; layer <= opt.layers; ++layer) {
      if (opt.drop.count({entry.part, layer})) continue;
      const LayerImage mask = cross_section(entry.geometry, layer, opt.width, opt.height);

      // Material voxels for this layer's cross-section.
      for (int plane = 0; plane < planes_per_layer; ++plane) {
        const int z = (layer - 1) * planes_per_layer + plane;
        for (int y = 0; y < opt.height; ++y)
          for (int x = 0; x < opt.width; ++x)
            if (mask.at(x, y) > 0.5f) vol.at(x, y, z) = kVolumeMaterial;
      }

      const PoreSet pores = seed_pores(mask, entry.params, model, layer);
      const int z_center = (layer - 1) * planes_per_layer + planes_per_layer / 2;
      for (const auto& p : pores.pores) carve_list.push_back({z_center, p});

      RenderedLayer rendered = render_modalities(mask, pores, entry.params, opt.seed, opt.render);
      const LayerKey key{entry.part, layer};
      out.hr.emplace(key, std::move(rendered.hr));
      out.ot.emplace(key, std::move(rendered.ot));
      out.seeded.emplace(key, pores);
    }
    // Carve after every material plane is in place so later layers cannot
    // refill a void.
    for (const auto& [z_center, p] : carve_list)
      detail::carve_void(vol, int(std::lround(p.x)), int(std::lround(p.y)), z_center,
                         opt.pore_void_radius_vx);
    out.volumes.emplace(entry.part, std::move(vol));
  }
  return out;
}

}  // namespace pkde::synth
