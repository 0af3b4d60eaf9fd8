#pragma once

// Gaussian kernel density estimation over per-layer pore positions,
// producing min-max normalized pore-probability label images.
//
// Sampling convention: pixel (i, j) is evaluated at continuous coordinate
// (i, j) — the same frame pore positions live in. The density at pixel v is
//     (1 / (bandwidth * Q)) * sum_i N((v - v_i) / bandwidth)
// with N the bivariate standard Gaussian density. Contributions from pores
// farther than truncation_radius are skipped; at the default radius of
// 4*bandwidth the dropped mass is below 3.4e-4 of a kernel peak.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"

namespace pkde::labeler {

struct KdeConfig {
  double bandwidth = 20.0;          // kernel scale in pixels
  double truncation_radius = 80.0;  // pixels; >= 4 * bandwidth

  static KdeConfig with_bandwidth(double b) { return KdeConfig{b, 4.0 * b}; }

  // A practically untruncated config, for oracle comparisons.
  static KdeConfig exact(double b) { return KdeConfig{b, 1e18}; }

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
      throw_invalid("KdeConfig: bandwidth must be positive");
    if (!(truncation_radius >= 4.0 * bandwidth))
      throw_invalid("KdeConfig: truncation_radius must be >= 4 * bandwidth");
  }
};

// Optional sink for degenerate-field warnings (constant non-empty density).
using WarnFn = void (*)(const std::string&);

inline void default_warn(const std::string& msg) { std::fprintf(stderr, "pkde: %s\n", msg.c_str()); }

namespace detail {

inline void check_pores_in_frame(const PoreSet& pores, int width, int height) {
  for (const auto& p : pores.pores) {
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height))
      throw_invalid("kde: pore outside image frame (part " + std::to_string(pores.part) +
                    ", layer " + std::to_string(pores.layer) + ")");
  }
}

// Density accumulation in double; callers convert once at the end.
inline std::vector<double> kde_field(const PoreSet& pores, int width, int height,
                                     const KdeConfig& cfg) {
  const double inv_b = 1.0 / cfg.bandwidth;
  const double prefactor = inv_b / double(pores.count()) / (2.0 * 3.14159265358979323846);
  const double r2_cut = cfg.truncation_radius * cfg.truncation_radius;
  std::vector<double> field(size_t(width) * size_t(height), 0.0);
  for (const auto& p : pores.pores) {
    // Clamp in double before the int conversion; the radius may be huge.
    const int x_lo = int(std::max(0.0, std::ceil(p.x - cfg.truncation_radius)));
    const int x_hi = int(std::min(double(width - 1), std::floor(p.x + cfg.truncation_radius)));
    const int y_lo = int(std::max(0.0, std::ceil(p.y - cfg.truncation_radius)));
    const int y_hi = int(std::min(double(height - 1), std::floor(p.y + cfg.truncation_radius)));
    for (int y = y_lo; y <= y_hi; ++y) {
      const double ry = double(y) - p.y;
      for (int x = x_lo; x <= x_hi; ++x) {
        const double rx = double(x) - p.x;
        const double r2 = rx * rx + ry * ry;
        if (r2 > r2_cut) continue;
        field[size_t(y) * width + x] += prefactor * std::exp(-0.5 * r2 * inv_b * inv_b);
      }
    }
  }
  return field;
}

}  // namespace detail

// Unnormalized density raster. Requires at least one pore. Returned with the
// generic CT modality since values are not yet probabilities.
inline LayerImage kde_raw(const PoreSet& pores, int width, int height, const KdeConfig& cfg) {
  cfg.validate();
  if (width <= 0 || height <= 0) throw_invalid("kde_raw: dimensions must be positive");
  if (pores.count() < 1) throw_invalid("kde_raw: empty pore set");
  detail::check_pores_in_frame(pores, width, height);
  const auto field = detail::kde_field(pores, width, height, cfg);
  LayerImage out = LayerImage::zeros(Modality::CT, width, height);
  for (size_t i = 0; i < field.size(); ++i) out.data[i] = float(field[i]);
  return out;
}

// Min-max normalized pore-probability label. An empty pore set maps to the
// all-zero image; a degenerate (constant) non-empty field does too, with a
// warning, since no location is more probable than any other.
inline PoreProbabilityImage kde_label(const PoreSet& pores, int width, int height,
                                      const KdeConfig& cfg, WarnFn warn = default_warn) {
  cfg.validate();
  if (width <= 0 || height <= 0) throw_invalid("kde_label: dimensions must be positive");
  PoreProbabilityImage out = LayerImage::zeros(Modality::PP, width, height);
  if (pores.count() == 0) return out;
  detail::check_pores_in_frame(pores, width, height);

  const auto field = detail::kde_field(pores, width, height, cfg);
  double lo = field[0], hi = field[0];
  for (double v : field) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) {
    if (warn)
      warn("degenerate density field (constant) for part " + std::to_string(pores.part) +
           " layer " + std::to_string(pores.layer) + "; emitting zero label");
    return out;
  }
  // Division (not reciprocal multiplication) pins the extremes at exactly 0 and 1.
  const double range = hi - lo;
  for (size_t i = 0; i < field.size(); ++i) out.data[i] = float((field[i] - lo) / range);
  return out;
}

}  // namespace pkde::labeler
