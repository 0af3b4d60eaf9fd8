#pragma once

// Voxel-volume handling: threshold-based pore detection via 6-connected
// components, exact axis-aligned volume rotation, layerwise slicing, and
// reference-point cropping.
//
// Void polarity: voxels with intensity strictly BELOW the threshold count as
// void (pores scan as low density); everything else is material.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/tensor_io.hpp"

namespace pkde::xct {

// Scalar intensity grid; data is row-major with x fastest and z slowest
// (z is the build direction once the volume is rotated to the build axis).
struct VoxelVolume {
  int nx = 0, ny = 0, nz = 0;
  double voxel_size = 1.0;  // um per voxel edge
  std::vector<float> data;

  static VoxelVolume filled(int nx, int ny, int nz, double voxel_size, float value) {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw_invalid("VoxelVolume: dimensions must be positive");
    if (!(voxel_size > 0.0)) throw_invalid("VoxelVolume: voxel_size must be positive");
    VoxelVolume v;
    v.nx = nx;
    v.ny = ny;
    v.nz = nz;
    v.voxel_size = voxel_size;
    v.data.assign(size_t(nx) * size_t(ny) * size_t(nz), value);
    return v;
  }

  size_t index(int x, int y, int z) const {
    return (size_t(z) * ny + size_t(y)) * nx + size_t(x);
  }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  size_t size() const { return data.size(); }

  void validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw_invalid("VoxelVolume: dimensions must be positive");
    if (data.size() != size_t(nx) * size_t(ny) * size_t(nz))
      throw_invalid("VoxelVolume: data length mismatch");
    for (float v : data)
      if (!std::isfinite(v) || v < 0.0f) throw_invalid("VoxelVolume: intensities must be finite and >= 0");
  }

  Tensor to_tensor() const {
    Tensor t;
    t.dims = {uint32_t(nz), uint32_t(ny), uint32_t(nx)};
    t.data = data;
    return t;
  }

  static VoxelVolume from_tensor(const Tensor& t, double voxel_size,
                                 const std::string& origin = "<memory>") {
    if (t.dims.size() != 3) throw_data("volume tensor must have rank 3: " + origin);
    VoxelVolume v;
    v.nz = int(t.dims[0]);
    v.ny = int(t.dims[1]);
    v.nx = int(t.dims[2]);
    v.voxel_size = voxel_size;
    v.data = t.data;
    return v;
  }
};

struct DetectedPore {
  double cx = 0.0, cy = 0.0, cz = 0.0;  // centroid in voxel coordinates
  int voxel_count = 0;
  double equivalent_diameter = 0.0;  // um, sphere of equal volume
};

// Diameter of the sphere whose volume equals `count` voxels.
inline double equivalent_diameter(int count, double voxel_size) {
  return voxel_size * std::cbrt(6.0 * double(count) / 3.14159265358979323846);
}

// 6-connected components of sub-threshold voxels, filtered by minimum
// equivalent diameter, sorted by centroid (z, y, x). Scan order plus a BFS
// frontier keeps the result deterministic.
inline std::vector<DetectedPore> detect_pores(const VoxelVolume& vol, double intensity_threshold,
                                              double min_diameter) {
  vol.validate();
  if (!std::isfinite(intensity_threshold)) throw_invalid("detect_pores: threshold must be finite");
  if (!(min_diameter >= 0.0)) throw_invalid("detect_pores: min_diameter must be >= 0");

  const int nx = vol.nx, ny = vol.ny, nz = vol.nz;
  std::vector<uint8_t> visited(vol.size(), 0);
  std::vector<size_t> frontier;
  std::vector<DetectedPore> out;

  const auto is_void = [&](size_t idx) { return vol.data[idx] < intensity_threshold; };

  for (size_t start = 0; start < vol.size(); ++start) {
    if (visited[start] || !is_void(start)) continue;
    frontier.clear();
    frontier.push_back(start);
    visited[start] = 1;
    double sx = 0, sy = 0, sz = 0;
    int count = 0;
    for (size_t fi = 0; fi < frontier.size(); ++fi) {
      const size_t idx = frontier[fi];
      const int x = int(idx % nx);
      const int y = int((idx / nx) % ny);
      const int z = int(idx / (size_t(nx) * ny));
      sx += x;
      sy += y;
      sz += z;
      ++count;
      const int neigh[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                               {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
      for (const auto& n : neigh) {
        if (n[0] < 0 || n[0] >= nx || n[1] < 0 || n[1] >= ny || n[2] < 0 || n[2] >= nz) continue;
        const size_t nidx = vol.index(n[0], n[1], n[2]);
        if (visited[nidx] || !is_void(nidx)) continue;
        visited[nidx] = 1;
        frontier.push_back(nidx);
      }
    }
    DetectedPore p;
    p.cx = sx / count;
    p.cy = sy / count;
    p.cz = sz / count;
    p.voxel_count = count;
    p.equivalent_diameter = equivalent_diameter(count, vol.voxel_size);
    if (p.equivalent_diameter >= min_diameter) out.push_back(p);
  }

  std::sort(out.begin(), out.end(), [](const DetectedPore& a, const DetectedPore& b) {
    return std::array<double, 3>{a.cz, a.cy, a.cx} < std::array<double, 3>{b.cz, b.cy, b.cx};
  });
  return out;
}

// One of the 24 proper axis-aligned orientations, stored as "destination
// axis d reads source axis `src_axis[d]`, reversed when `flip[d]`".
struct AxisRotation {
  std::array<int, 3> src_axis = {0, 1, 2};
  std::array<bool, 3> flip = {false, false, false};

  static AxisRotation identity() { return {}; }

  // Quarter turns about the z axis; one turn maps (x, y, z) -> (y, nx-1-x, z).
  static AxisRotation about_z(int quarter_turns) {
    AxisRotation r;
    for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i)
      r = compose(AxisRotation{{1, 0, 2}, {false, true, false}}, r);
    return r;
  }

  // Quarter turns about x: one turn maps (x, y, z) -> (x, z, ny-1-y).
  static AxisRotation about_x(int quarter_turns) {
    AxisRotation r;
    for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i)
      r = compose(AxisRotation{{0, 2, 1}, {false, false, true}}, r);
    return r;
  }

  // Quarter turns about y: one turn maps (x, y, z) -> (nz-1-z, y, x).
  static AxisRotation about_y(int quarter_turns) {
    AxisRotation r;
    for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i)
      r = compose(AxisRotation{{2, 1, 0}, {true, false, false}}, r);
    return r;
  }

  // a after b (apply b first).
  static AxisRotation compose(const AxisRotation& a, const AxisRotation& b) {
    AxisRotation r;
    for (int d = 0; d < 3; ++d) {
      r.src_axis[d] = b.src_axis[size_t(a.src_axis[d])];
      r.flip[d] = a.flip[d] != b.flip[size_t(a.src_axis[d])];
    }
    return r;
  }

  AxisRotation inverse() const {
    AxisRotation r;
    for (int d = 0; d < 3; ++d) {
      r.src_axis[size_t(src_axis[d])] = d;
      r.flip[size_t(src_axis[d])] = flip[d];
    }
    return r;
  }

  // Proper rotations only: permutation parity times flip parity must be +1.
  void validate() const {
    std::array<bool, 3> seen{false, false, false};
    for (int a : src_axis) {
      if (a < 0 || a > 2 || seen[size_t(a)])
        throw_invalid("AxisRotation: src_axis is not a permutation");
      seen[size_t(a)] = true;
    }
    int det = permutation_sign();
    for (bool f : flip)
      if (f) det = -det;
    if (det != 1)
      throw_invalid("AxisRotation: improper orientation (reflection); not one of the 24 rotations");
  }

  int permutation_sign() const {
    int swaps = 0;
    auto p = src_axis;
    for (int i = 0; i < 3; ++i)
      while (p[size_t(i)] != i) {
        std::swap(p[size_t(i)], p[size_t(p[size_t(i)])]);
        ++swaps;
      }
    return swaps % 2 == 0 ? 1 : -1;
  }

  // Destination coordinate of source voxel (x, y, z).
  std::array<int, 3> map_voxel(const std::array<int, 3>& src,
                               const std::array<int, 3>& src_dims) const {
    std::array<int, 3> dst{};
    for (int d = 0; d < 3; ++d) {
      const int s = src_axis[d];
      dst[size_t(d)] = flip[size_t(d)] ? src_dims[size_t(s)] - 1 - src[size_t(s)] : src[size_t(s)];
    }
    return dst;
  }

  // Same map for continuous coordinates (centroids).
  std::array<double, 3> map_point(const std::array<double, 3>& src,
                                  const std::array<int, 3>& src_dims) const {
    std::array<double, 3> dst{};
    for (int d = 0; d < 3; ++d) {
      const int s = src_axis[d];
      dst[size_t(d)] =
          flip[size_t(d)] ? double(src_dims[size_t(s)] - 1) - src[size_t(s)] : src[size_t(s)];
    }
    return dst;
  }
};

// Lossless voxel permutation; the inverse rotation restores the input bit
// for bit.
inline VoxelVolume rotate_to_build_axis(const VoxelVolume& vol, const AxisRotation& rot) {
  vol.validate();
  rot.validate();
  const std::array<int, 3> src_dims{vol.nx, vol.ny, vol.nz};
  VoxelVolume out;
  out.nx = src_dims[size_t(rot.src_axis[0])];
  out.ny = src_dims[size_t(rot.src_axis[1])];
  out.nz = src_dims[size_t(rot.src_axis[2])];
  out.voxel_size = vol.voxel_size;
  out.data.resize(vol.size());
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) {
        const auto d = rot.map_voxel({x, y, z}, src_dims);
        out.at(d[0], d[1], d[2]) = vol.at(x, y, z);
      }
  return out;
}

// Mean-intensity slices in build order (layer 1 at the bottom). Voxel plane z
// belongs to the layer containing its lower face, i.e. floor(z*vs/lt) + 1;
// planes past the last full layer are dropped.
inline std::vector<LayerImage> slice_volume(const VoxelVolume& vol, double layer_thickness) {
  vol.validate();
  if (!(layer_thickness >= vol.voxel_size))
    throw_invalid("slice_volume: layer_thickness below voxel resolution");
  const int n_layers = int(std::floor(vol.nz * vol.voxel_size / layer_thickness + 1e-9));
  std::vector<LayerImage> slices;
  std::vector<int> plane_count(size_t(std::max(n_layers, 0)), 0);
  for (int k = 0; k < n_layers; ++k)
    slices.push_back(LayerImage::zeros(Modality::CT, vol.nx, vol.ny));
  for (int z = 0; z < vol.nz; ++z) {
    const int layer = int(std::floor(double(z) * vol.voxel_size / layer_thickness + 1e-9));
    if (layer >= n_layers) break;  // partial top layer
    plane_count[size_t(layer)] += 1;
    LayerImage& img = slices[size_t(layer)];
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) img.at(x, y) += vol.at(x, y, z);
  }
  for (int k = 0; k < n_layers; ++k) {
    const float inv = 1.0f / float(std::max(plane_count[size_t(k)], 1));
    for (float& v : slices[size_t(k)].data) v *= inv;
  }
  return slices;
}

// Rectangle from four reference points; the bounding box is rounded half-up
// to integer pixels.
struct CropFrame {
  std::array<PorePosition, 4> reference_points{};

  static CropFrame from_points(const std::array<PorePosition, 4>& pts) {
    CropFrame f;
    f.reference_points = pts;
    f.validate();
    return f;
  }

  static CropFrame full(int width, int height) {
    return from_points({PorePosition{0, 0}, PorePosition{double(width), 0},
                        PorePosition{0, double(height)},
                        PorePosition{double(width), double(height)}});
  }

  int x0() const { return int(std::floor(min_coord(true) + 0.5)); }
  int y0() const { return int(std::floor(min_coord(false) + 0.5)); }
  int x1() const { return int(std::floor(max_coord(true) + 0.5)); }
  int y1() const { return int(std::floor(max_coord(false) + 0.5)); }

  void validate() const {
    if (!(x0() < x1() && y0() < y1())) throw_invalid("CropFrame: degenerate rectangle");
  }

 private:
  double min_coord(bool x) const {
    double m = x ? reference_points[0].x : reference_points[0].y;
    for (const auto& p : reference_points) m = std::min(m, x ? p.x : p.y);
    return m;
  }
  double max_coord(bool x) const {
    double m = x ? reference_points[0].x : reference_points[0].y;
    for (const auto& p : reference_points) m = std::max(m, x ? p.x : p.y);
    return m;
  }
};

inline LayerImage crop(const LayerImage& image, const CropFrame& frame) {
  frame.validate();
  const int x0 = frame.x0(), y0 = frame.y0(), x1 = frame.x1(), y1 = frame.y1();
  if (x0 < 0) throw_invalid("crop: left edge outside image");
  if (y0 < 0) throw_invalid("crop: top edge outside image");
  if (x1 > image.width) throw_invalid("crop: right edge outside image");
  if (y1 > image.height) throw_invalid("crop: bottom edge outside image");
  LayerImage out = LayerImage::zeros(image.modality, x1 - x0, y1 - y0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = image.at(x0 + x, y0 + y);
  return out;
}

struct VolumeMeta {
  double voxel_size = 1.0;       // um
  double layer_thickness = 1.0;  // um
};

struct LayerPoreMap {
  std::map<int, PoreSet> by_layer;
  int dropped = 0;  // pores outside the crop frame
};

// Assigns detected pores to build layers (floor convention, boundary goes
// up) and translates centroids into the crop frame. The x/y frame of the
// volume matches the sliced image frame one-to-one.
inline LayerPoreMap pores_to_layers(const std::vector<DetectedPore>& pores,
                                    const VolumeMeta& meta, const CropFrame& frame,
                                    int part = 1) {
  if (!(meta.voxel_size > 0.0) || !(meta.layer_thickness > 0.0))
    throw_invalid("pores_to_layers: meta values must be positive");
  frame.validate();
  LayerPoreMap out;
  const int x0 = frame.x0(), y0 = frame.y0(), x1 = frame.x1(), y1 = frame.y1();
  for (const auto& p : pores) {
    const int layer = int(std::floor(p.cz * meta.voxel_size / meta.layer_thickness + 1e-9)) + 1;
    const double x = p.cx - x0;
    const double y = p.cy - y0;
    if (!(x >= 0.0 && x < double(x1 - x0) && y >= 0.0 && y < double(y1 - y0))) {
      out.dropped += 1;
      continue;
    }
    auto [it, inserted] = out.by_layer.try_emplace(layer);
    if (inserted) {
      it->second.part = part;
      it->second.layer = layer;
    }
    it->second.pores.push_back({x, y});
  }
  return out;
}

}  // namespace pkde::xct
