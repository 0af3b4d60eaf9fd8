#pragma once

// Layer primitives with explicit backward passes: same-padded convolution,
// ReLU, 2x2 max pooling, nearest-neighbor 2x upsampling, sigmoid, channel
// concat and additive joins, and the mean-absolute-error loss.
//
// Reductions accumulate in a fixed order per output element, and threads
// partition output elements, so results are identical for any thread count.

#include <algorithm>
#include <cmath>

#include "pkde/nn/tensor.hpp"
#include "pkde/parallel.hpp"

namespace pkde::nn {

// Convolution weight layout: [out_channels, in_channels, k, k], odd k,
// stride 1, zero padding k/2 (output spatial size equals input).
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& bias,
                          int threads = 1) {
  const int k = weight.h;
  if (weight.w != k || k % 2 == 0) throw_invalid("conv2d: kernel must be square and odd");
  if (weight.c != x.c)
    throw_invalid("conv2d: input channels " + std::to_string(x.c) + " != weight channels " +
                  std::to_string(weight.c));
  if (bias.c != weight.b || bias.b != 1 || bias.h != 1 || bias.w != 1)
    throw_invalid("conv2d: bias shape mismatch");
  const int pad = k / 2;
  const int oc_n = weight.b;
  Tensor4<T> y(x.b, oc_n, x.h, x.w);

  parallel_for(int64_t(x.b) * oc_n, threads, [&](long long lo, long long hi) {
    for (long long plane = lo; plane < hi; ++plane) {
      const int bi = int(plane / oc_n);
      const int oc = int(plane % oc_n);
      const T bval = bias.data[size_t(oc)];
      T* out = y.plane(bi, oc);
      for (int oy = 0; oy < x.h; ++oy)
        for (int ox = 0; ox < x.w; ++ox) {
          T acc = bval;
          for (int ic = 0; ic < x.c; ++ic) {
            const T* in = x.plane(bi, ic);
            const T* wt = weight.plane(oc, ic);
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= x.w) continue;
                acc += in[size_t(iy) * x.w + ix] * wt[size_t(ky) * k + kx];
              }
            }
          }
          out[size_t(oy) * x.w + ox] = acc;
        }
    }
  });
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor4<T> dx, dw, db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& dy,
                             int threads = 1) {
  const int k = weight.h;
  const int pad = k / 2;
  const int oc_n = weight.b;
  ConvGrads<T> g;
  g.dx = Tensor4<T>(x.b, x.c, x.h, x.w);
  g.dw = Tensor4<T>(weight.b, weight.c, weight.h, weight.w);
  g.db = Tensor4<T>(1, oc_n, 1, 1);

  // dx: gather over output positions that used each input element.
  parallel_for(int64_t(x.b) * x.c, threads, [&](long long lo, long long hi) {
    for (long long plane = lo; plane < hi; ++plane) {
      const int bi = int(plane / x.c);
      const int ic = int(plane % x.c);
      T* dst = g.dx.plane(bi, ic);
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          T acc = T(0);
          for (int oc = 0; oc < oc_n; ++oc) {
            const T* dout = dy.plane(bi, oc);
            const T* wt = weight.plane(oc, ic);
            for (int ky = 0; ky < k; ++ky) {
              const int oy = iy - ky + pad;
              if (oy < 0 || oy >= x.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ox = ix - kx + pad;
                if (ox < 0 || ox >= x.w) continue;
                acc += dout[size_t(oy) * x.w + ox] * wt[size_t(ky) * k + kx];
              }
            }
          }
          dst[size_t(iy) * x.w + ix] = acc;
        }
    }
  });

  // dw and db: per output channel, accumulate over the batch in fixed order.
  parallel_for(oc_n, threads, [&](long long lo, long long hi) {
    for (long long oc = lo; oc < hi; ++oc) {
      for (int ic = 0; ic < x.c; ++ic) {
        T* dwt = g.dw.plane(int(oc), ic);
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            T acc = T(0);
            for (int bi = 0; bi < x.b; ++bi) {
              const T* in = x.plane(bi, ic);
              const T* dout = dy.plane(bi, int(oc));
              for (int oy = 0; oy < x.h; ++oy) {
                const int iy = oy + ky - pad;
                if (iy < 0 || iy >= x.h) continue;
                for (int ox = 0; ox < x.w; ++ox) {
                  const int ix = ox + kx - pad;
                  if (ix < 0 || ix >= x.w) continue;
                  acc += in[size_t(iy) * x.w + ix] * dout[size_t(oy) * x.w + ox];
                }
              }
            }
            dwt[size_t(ky) * k + kx] = acc;
          }
      }
      T acc = T(0);
      for (int bi = 0; bi < x.b; ++bi) {
        const T* dout = dy.plane(bi, int(oc));
        for (int i = 0; i < x.h * x.w; ++i) acc += dout[i];
      }
      g.db.data[size_t(oc)] = acc;
    }
  });
  return g;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  for (T& v : y.data) v = std::max(v, T(0));
  return y;
}

// Uses the post-activation output: the mask y > 0 equals x > 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  Tensor4<T> dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i)
    if (!(y.data[i] > T(0))) dx.data[i] = T(0);
  return dx;
}

template <typename T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw_invalid("maxpool2: spatial dims must be even");
  Tensor4<T> y(x.b, x.c, x.h / 2, x.w / 2);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          T m = x.at(bi, ci, 2 * oy, 2 * ox);
          m = std::max(m, x.at(bi, ci, 2 * oy, 2 * ox + 1));
          m = std::max(m, x.at(bi, ci, 2 * oy + 1, 2 * ox));
          m = std::max(m, x.at(bi, ci, 2 * oy + 1, 2 * ox + 1));
          y.at(bi, ci, oy, ox) = m;
        }
  return y;
}

// Routes each gradient to the first maximal element in scan order.
template <typename T>
Tensor4<T> maxpool2_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
  Tensor4<T> dx(x.b, x.c, x.h, x.w);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          int best_y = 2 * oy, best_x = 2 * ox;
          T best = x.at(bi, ci, best_y, best_x);
          for (int sy = 0; sy < 2; ++sy)
            for (int sx = 0; sx < 2; ++sx) {
              const T v = x.at(bi, ci, 2 * oy + sy, 2 * ox + sx);
              if (v > best) {
                best = v;
                best_y = 2 * oy + sy;
                best_x = 2 * ox + sx;
              }
            }
          dx.at(bi, ci, best_y, best_x) += dy.at(bi, ci, oy, ox);
        }
  return dx;
}

template <typename T>
Tensor4<T> upsample2_forward(const Tensor4<T>& x) {
  Tensor4<T> y(x.b, x.c, x.h * 2, x.w * 2);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) y.at(bi, ci, oy, ox) = x.at(bi, ci, oy / 2, ox / 2);
  return y;
}

template <typename T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy) {
  if (dy.h % 2 != 0 || dy.w % 2 != 0) throw_invalid("upsample2_backward: odd dims");
  Tensor4<T> dx(dy.b, dy.c, dy.h / 2, dy.w / 2);
  for (int bi = 0; bi < dy.b; ++bi)
    for (int ci = 0; ci < dy.c; ++ci)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox)
          dx.at(bi, ci, oy / 2, ox / 2) += dy.at(bi, ci, oy, ox);
  return dx;
}

template <typename T>
Tensor4<T> sigmoid_forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  for (T& v : y.data) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  Tensor4<T> dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= y.data[i] * (T(1) - y.data[i]);
  return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.b != b.b || a.h != b.h || a.w != b.w) throw_invalid("concat: spatial/batch mismatch");
  Tensor4<T> y(a.b, a.c + b.c, a.h, a.w);
  const size_t plane = size_t(a.h) * a.w;
  for (int bi = 0; bi < a.b; ++bi) {
    for (int ci = 0; ci < a.c; ++ci)
      std::copy_n(a.plane(bi, ci), plane, y.plane(bi, ci));
    for (int ci = 0; ci < b.c; ++ci)
      std::copy_n(b.plane(bi, ci), plane, y.plane(bi, a.c + ci));
  }
  return y;
}

template <typename T>
void split_channels(const Tensor4<T>& d, int c_first, Tensor4<T>& da, Tensor4<T>& db) {
  da = Tensor4<T>(d.b, c_first, d.h, d.w);
  db = Tensor4<T>(d.b, d.c - c_first, d.h, d.w);
  const size_t plane = size_t(d.h) * d.w;
  for (int bi = 0; bi < d.b; ++bi) {
    for (int ci = 0; ci < c_first; ++ci)
      std::copy_n(d.plane(bi, ci), plane, da.plane(bi, ci));
    for (int ci = 0; ci < d.c - c_first; ++ci)
      std::copy_n(d.plane(bi, c_first + ci), plane, db.plane(bi, ci));
  }
}

template <typename T>
Tensor4<T> add_tensors(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (!a.same_shape(b))
    throw_invalid("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor4<T> y = a;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  return y;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor4<T> grad;
};

// Per-element mean absolute error; the subgradient at zero is zero.
template <typename T>
LossResult<T> mae_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  if (!pred.same_shape(target))
    throw_invalid("mae_loss: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
  LossResult<T> out;
  out.grad = Tensor4<T>(pred.b, pred.c, pred.h, pred.w);
  const double inv_n = 1.0 / double(pred.numel());
  double sum = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = double(pred.data[i]) - double(target.data[i]);
    sum += std::abs(d);
    out.grad.data[i] = d > 0 ? T(inv_n) : (d < 0 ? T(-inv_n) : T(0));
  }
  out.loss = sum * inv_n;
  return out;
}

}  // namespace pkde::nn
