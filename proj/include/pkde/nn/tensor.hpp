#pragma once

// Dense 4-D tensor (batch, channels, height, width), row-major with width
// fastest. Templated on the scalar so gradient checks can run in double.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pkde/error.hpp"

namespace pkde::nn {

template <typename T>
struct Tensor4 {
  int b = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int b_, int c_, int h_, int w_) : b(b_), c(c_), h(h_), w(w_) {
    if (b_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw_invalid("Tensor4: negative dimension");
    data.assign(numel(), T(0));
  }

  static Tensor4 zeros(int b_, int c_, int h_, int w_) { return Tensor4(b_, c_, h_, w_); }

  size_t numel() const { return size_t(b) * c * h * w; }

  T& at(int bi, int ci, int y, int x) {
    return data[((size_t(bi) * c + ci) * h + y) * w + x];
  }
  T at(int bi, int ci, int y, int x) const {
    return data[((size_t(bi) * c + ci) * h + y) * w + x];
  }

  T* plane(int bi, int ci) { return data.data() + (size_t(bi) * c + ci) * h * w; }
  const T* plane(int bi, int ci) const { return data.data() + (size_t(bi) * c + ci) * h * w; }

  bool same_shape(const Tensor4& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "[" + std::to_string(b) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(b, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

// NaN or Inf anywhere is a hard numerical failure, attributed to `where`.
template <typename T>
inline void ensure_finite(const Tensor4<T>& t, const char* where) {
  for (const T& v : t.data)
    if (!std::isfinite(double(v)))
      throw_numerical(std::string("non-finite value in ") + where);
}

}  // namespace pkde::nn
