#pragma once

// Portable binary tensor container: 8-byte magic "PKTENS01", little-endian
// u32 rank, u32 dims[rank], then the f32 payload in row-major order
// (last dimension fastest). Plus an 8-bit PGM (P5) writer for previews.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"

namespace pkde {

inline constexpr char kTensorMagic[8] = {'P', 'K', 'T', 'E', 'N', 'S', '0', '1'};

struct Tensor {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u32le(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.append(b, 4);
}

inline uint32_t get_u32le(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

inline bool host_is_little_endian() {
  const uint32_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

}  // namespace detail

inline std::string tensor_to_bytes(const Tensor& t) {
  if (t.dims.empty()) throw_invalid("tensor_to_bytes: rank must be >= 1");
  if (t.numel() != t.data.size()) throw_invalid("tensor_to_bytes: dims do not match payload");
  std::string out;
  out.reserve(8 + 4 + 4 * t.dims.size() + 4 * t.data.size());
  out.append(kTensorMagic, 8);
  detail::put_u32le(out, uint32_t(t.dims.size()));
  for (uint32_t d : t.dims) detail::put_u32le(out, d);
  if (detail::host_is_little_endian()) {
    out.append(reinterpret_cast<const char*>(t.data.data()), 4 * t.data.size());
  } else {
    for (float f : t.data) {
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32le(out, bits);
    }
  }
  return out;
}

inline Tensor tensor_from_bytes(const std::string& bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0)
    throw_data("tensor: bad magic in " + origin);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const uint32_t rank = detail::get_u32le(p + 8);
  if (rank == 0 || rank > 8) throw_data("tensor: unsupported rank in " + origin);
  if (bytes.size() < 12 + 4 * size_t(rank)) throw_data("tensor: truncated header in " + origin);
  Tensor t;
  size_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = detail::get_u32le(p + 12 + 4 * i);
    if (d == 0) throw_data("tensor: zero dimension in " + origin);
    t.dims.push_back(d);
    n *= d;
  }
  const size_t payload_off = 12 + 4 * size_t(rank);
  if (bytes.size() != payload_off + 4 * n) throw_data("tensor: payload size mismatch in " + origin);
  t.data.resize(n);
  if (detail::host_is_little_endian()) {
    std::memcpy(t.data.data(), bytes.data() + payload_off, 4 * n);
  } else {
    for (size_t i = 0; i < n; ++i) {
      const uint32_t bits = detail::get_u32le(p + payload_off + 4 * i);
      std::memcpy(&t.data[i], &bits, 4);
    }
  }
  return t;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_io("cannot open for writing: " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw_io("write failed: " + path);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_io("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_tensor(const std::string& path, const Tensor& t) {
  write_file_bytes(path, tensor_to_bytes(t));
}

inline Tensor read_tensor(const std::string& path) {
  return tensor_from_bytes(read_file_bytes(path), path);
}

// LayerImage <-> rank-2 tensor with dims [height, width].
inline Tensor image_to_tensor(const LayerImage& img) {
  Tensor t;
  t.dims = {uint32_t(img.height), uint32_t(img.width)};
  t.data = img.data;
  return t;
}

inline LayerImage image_from_tensor(const Tensor& t, Modality m,
                                    const std::string& origin = "<memory>") {
  if (t.dims.size() != 2) throw_data("image tensor must have rank 2: " + origin);
  LayerImage img;
  img.modality = m;
  img.height = int(t.dims[0]);
  img.width = int(t.dims[1]);
  img.data = t.data;
  return img;
}

inline void write_image(const std::string& path, const LayerImage& img) {
  write_tensor(path, image_to_tensor(img));
}

inline LayerImage read_image(const std::string& path, Modality m) {
  return image_from_tensor(read_tensor(path), m, path);
}

// 8-bit binary PGM preview; values are clamped to [0,1] then scaled to 255.
inline void write_pgm(const std::string& path, const LayerImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(char(uint8_t(std::lround(c * 255.0f))));
  }
  write_file_bytes(path, out);
}

}  // namespace pkde
