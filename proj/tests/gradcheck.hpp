#pragma once

// Central finite-difference gradient checks for every layer primitive, in
// double precision. Each check builds a random scalar functional
// F = sum(dy * layer(x)) and compares the analytic backward result against
// (F(x+h) - F(x-h)) / 2h elementwise.

#include <cmath>
#include <functional>

#include "pkde/nn/model.hpp"
#include "pkde/nn/ops.hpp"
#include "pkde/rng.hpp"

namespace gradcheck {

using pkde::CounterRng;
using DTensor = pkde::nn::Tensor4<double>;

inline DTensor random_tensor(CounterRng& rng, int b, int c, int h, int w, double scale = 1.0) {
  DTensor t(b, c, h, w);
  for (double& v : t.data) v = scale * rng.next_normal();
  return t;
}

inline double dot(const DTensor& a, const DTensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double rel_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return diff / scale;
}

// Compares an analytic gradient tensor against central differences of the
// scalar functional `f` taken through `x`; returns the max relative error.
inline double check_tensor_grad(DTensor& x, const DTensor& analytic,
                                const std::function<double()>& f, double h = 1e-5) {
  double worst = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = f();
    x.data[i] = keep - h;
    const double down = f();
    x.data[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_error(analytic.data[i], numeric));
  }
  return worst;
}

inline double check_conv(CounterRng& rng, int k, int ic, int oc, int h, int w) {
  DTensor x = random_tensor(rng, 2, ic, h, w);
  DTensor weight = random_tensor(rng, oc, ic, k, k, 0.5);
  DTensor bias = random_tensor(rng, 1, oc, 1, 1, 0.1);
  const DTensor dy = random_tensor(rng, 2, oc, h, w);
  const auto f = [&] { return dot(pkde::nn::conv2d_forward(x, weight, bias), dy); };
  const auto grads = pkde::nn::conv2d_backward(x, weight, dy);
  double worst = check_tensor_grad(x, grads.dx, f);
  worst = std::max(worst, check_tensor_grad(weight, grads.dw, f));
  worst = std::max(worst, check_tensor_grad(bias, grads.db, f));
  return worst;
}

inline double check_relu(CounterRng& rng, int c, int h, int w) {
  DTensor x = random_tensor(rng, 2, c, h, w);
  // Keep inputs away from the kink so finite differences stay one-sided.
  for (double& v : x.data)
    if (std::abs(v) < 1e-3) v += v >= 0 ? 1e-3 : -1e-3;
  const DTensor dy = random_tensor(rng, 2, c, h, w);
  const auto f = [&] { return dot(pkde::nn::relu_forward(x), dy); };
  const auto y = pkde::nn::relu_forward(x);
  const auto dx = pkde::nn::relu_backward(y, dy);
  return check_tensor_grad(x, dx, f);
}

inline double check_sigmoid(CounterRng& rng, int c, int h, int w) {
  DTensor x = random_tensor(rng, 2, c, h, w);
  const DTensor dy = random_tensor(rng, 2, c, h, w);
  const auto f = [&] { return dot(pkde::nn::sigmoid_forward(x), dy); };
  const auto y = pkde::nn::sigmoid_forward(x);
  const auto dx = pkde::nn::sigmoid_backward(y, dy);
  return check_tensor_grad(x, dx, f);
}

inline double check_maxpool(CounterRng& rng, int c, int h, int w) {
  DTensor x = random_tensor(rng, 2, c, h, w);
  const DTensor dy = random_tensor(rng, 2, c, h / 2, w / 2);
  const auto f = [&] { return dot(pkde::nn::maxpool2_forward(x), dy); };
  const auto dx = pkde::nn::maxpool2_backward(x, dy);
  return check_tensor_grad(x, dx, f);
}

inline double check_upsample(CounterRng& rng, int c, int h, int w) {
  DTensor x = random_tensor(rng, 2, c, h, w);
  const DTensor dy = random_tensor(rng, 2, c, h * 2, w * 2);
  const auto f = [&] { return dot(pkde::nn::upsample2_forward(x), dy); };
  const auto dx = pkde::nn::upsample2_backward(dy);
  return check_tensor_grad(x, dx, f);
}

inline double check_concat(CounterRng& rng, int c1, int c2, int h, int w) {
  DTensor a = random_tensor(rng, 2, c1, h, w);
  DTensor b = random_tensor(rng, 2, c2, h, w);
  const DTensor dy = random_tensor(rng, 2, c1 + c2, h, w);
  const auto f = [&] { return dot(pkde::nn::concat_channels(a, b), dy); };
  DTensor da, db;
  pkde::nn::split_channels(dy, c1, da, db);
  double worst = check_tensor_grad(a, da, f);
  worst = std::max(worst, check_tensor_grad(b, db, f));
  return worst;
}

inline double check_add(CounterRng& rng, int c, int h, int w) {
  DTensor a = random_tensor(rng, 2, c, h, w);
  DTensor b = random_tensor(rng, 2, c, h, w);
  const DTensor dy = random_tensor(rng, 2, c, h, w);
  const auto f = [&] { return dot(pkde::nn::add_tensors(a, b), dy); };
  // Additive join passes the upstream gradient through to both operands.
  double worst = check_tensor_grad(a, dy, f);
  worst = std::max(worst, check_tensor_grad(b, dy, f));
  return worst;
}

inline double check_mae(CounterRng& rng, int c, int h, int w) {
  DTensor pred = random_tensor(rng, 2, c, h, w);
  DTensor target = random_tensor(rng, 2, c, h, w);
  // Keep |pred - target| away from the kink at zero.
  for (size_t i = 0; i < pred.data.size(); ++i)
    if (std::abs(pred.data[i] - target.data[i]) < 1e-3)
      pred.data[i] += pred.data[i] >= target.data[i] ? 1e-3 : -1e-3;
  const auto f = [&] { return pkde::nn::mae_loss(pred, target).loss; };
  const auto loss = pkde::nn::mae_loss(pred, target);
  return check_tensor_grad(pred, loss.grad, f);
}

// End-to-end check through the whole model: compares analytic parameter
// gradients of the MAE loss against central differences on a sample of
// parameter entries.
inline double check_model(CounterRng& rng, const pkde::nn::ModelConfig& cfg, int hw,
                          int samples_per_param = 4) {
  auto st = pkde::nn::init_weights<double>(cfg, rng.next_u64());
  DTensor input = random_tensor(rng, 2, cfg.in_channels, hw, hw, 0.5);
  // Targets far from the near-0.5 outputs of fresh weights, so the loss
  // never sits on the |pred - target| kink during perturbation.
  DTensor target(2, 1, hw, hw);
  for (double& v : target.data) v = rng.uniform_int(2) ? 0.95 : 0.05;

  const auto loss_of = [&] {
    auto out = pkde::nn::forward(st, input);
    return pkde::nn::mae_loss(out, target).loss;
  };

  pkde::nn::Tape<double> tape;
  auto out = pkde::nn::forward(st, input, 1, &tape);
  const auto loss = pkde::nn::mae_loss(out, target);
  pkde::nn::backward(st, tape, loss.grad);

  double worst = 0.0;
  const double h = 1e-5;
  for (auto& p : st.params) {
    for (int rep = 0; rep < samples_per_param; ++rep) {
      const size_t i = rng.uniform_int(uint32_t(p.value.data.size()));
      const double keep = p.value.data[i];
      p.value.data[i] = keep + h;
      const double up = loss_of();
      p.value.data[i] = keep - h;
      const double down = loss_of();
      p.value.data[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data[i];
      if (std::abs(analytic) < 1e-9 && std::abs(numeric) < 1e-9) continue;
      worst = std::max(worst, rel_error(analytic, numeric));
    }
  }
  return worst;
}

}  // namespace gradcheck
