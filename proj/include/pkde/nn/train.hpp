#pragma once

// Training loop: Adam updates on the per-pixel mean absolute error, seeded
// per-epoch shuffling, per-epoch train/validation tracking, and selection of
// the weights with the best validation error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/json_compat.hpp"
#include "pkde/nn/model.hpp"
#include "pkde/nn/ops.hpp"
#include "pkde/rng.hpp"

namespace pkde::nn {

struct HyperParams {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 60;

  // Minimal sanity for direct training runs.
  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw_invalid("HyperParams: learning_rate must be positive");
    if (batch_size < 1) throw_invalid("HyperParams: batch_size must be >= 1");
    if (epochs < 0) throw_invalid("HyperParams: epochs must be >= 0");
  }

  // The tuner's search domain: learning rate in [1e-6, 1e-3] and batch size
  // in {16, 32, 64}. Enforced wherever configurations come from the search.
  void validate_search_range() const {
    validate();
    if (learning_rate < 1e-6 || learning_rate > 1e-3)
      throw_invalid("HyperParams: learning_rate outside search range [1e-6, 1e-3]");
    if (batch_size != 16 && batch_size != 32 && batch_size != 64)
      throw_invalid("HyperParams: batch_size must be one of {16, 32, 64}");
  }
};

struct Sample {
  LayerKey key{0, 0};
  Tensor4<float> input;   // [1, 2, H, W]
  Tensor4<float> target;  // [1, 1, H, W]
};

// Stacks HR and OT as the two input channels.
inline Sample to_sample(const LayerTriplet& t) {
  Sample s;
  s.key = t.key();
  s.input = Tensor4<float>(1, 2, t.hr.height, t.hr.width);
  s.target = Tensor4<float>(1, 1, t.pp.height, t.pp.width);
  std::copy(t.hr.data.begin(), t.hr.data.end(), s.input.data.begin());
  std::copy(t.ot.data.begin(), t.ot.data.end(), s.input.data.begin() + t.hr.data.size());
  std::copy(t.pp.data.begin(), t.pp.data.end(), s.target.data.begin());
  return s;
}

inline std::vector<Sample> samples_for_keys(const Dataset& d, const std::set<LayerKey>& keys) {
  std::vector<Sample> out;
  out.reserve(keys.size());
  for (const auto& t : d.triplets)
    if (keys.count(t.key())) out.push_back(to_sample(t));
  return out;
}

namespace detail {

inline Tensor4<float> stack_batch(const std::vector<Sample>& samples,
                                  const std::vector<size_t>& idx, size_t lo, size_t hi,
                                  bool target) {
  const auto& first = target ? samples[idx[lo]].target : samples[idx[lo]].input;
  Tensor4<float> out(int(hi - lo), first.c, first.h, first.w);
  const size_t stride = first.numel();
  for (size_t i = lo; i < hi; ++i) {
    const auto& src = target ? samples[idx[i]].target : samples[idx[i]].input;
    if (src.c != first.c || src.h != first.h || src.w != first.w)
      throw_invalid("train: samples have mixed shapes");
    std::copy(src.data.begin(), src.data.end(), out.data.begin() + (i - lo) * stride);
  }
  return out;
}

}  // namespace detail

// One Adam update from the gradients currently stored in the state.
inline void adam_step(ModelState<float>& st, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  st.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(beta2, double(st.step));
  for (auto& p : st.params) {
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      const double m = beta1 * p.adam_m.data[i] + (1.0 - beta1) * g;
      const double v = beta2 * p.adam_v.data[i] + (1.0 - beta2) * g * g;
      p.adam_m.data[i] = float(m);
      p.adam_v.data[i] = float(v);
      p.value.data[i] -= float(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
  }
}

// Mean absolute error of the model over a sample list (batched evaluation).
inline double evaluate_mae(ModelState<float>& st, const std::vector<Sample>& samples,
                           int batch_size, int threads) {
  if (samples.empty()) throw_invalid("evaluate_mae: no samples");
  std::vector<size_t> idx(samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double sum = 0.0;
  size_t count = 0;
  for (size_t lo = 0; lo < samples.size(); lo += size_t(batch_size)) {
    const size_t hi = std::min(samples.size(), lo + size_t(batch_size));
    auto input = detail::stack_batch(samples, idx, lo, hi, false);
    auto target = detail::stack_batch(samples, idx, lo, hi, true);
    auto pred = forward(st, input, threads);
    const auto loss = mae_loss(pred, target);
    sum += loss.loss * double(pred.numel());
    count += pred.numel();
  }
  return sum / double(count);
}

struct EpochStats {
  double train_mae = 0.0;
  double val_mae = 0.0;
};

struct TrainReport {
  uint64_t seed = 0;
  HyperParams hp;
  ModelConfig config;
  double baseline_val_mae = 0.0;  // validation error of the initial weights
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based; 0 means the initial weights were best
  double best_val_mae = 0.0;
  double wall_seconds = 0.0;  // not part of the serialized artifact
};

struct TrainResult {
  ModelState<float> weights;  // best-validation weights
  TrainReport report;
};

// Report JSON. Wall time deliberately stays out: it belongs to run metadata
// so artifacts are byte-identical across reruns.
inline std::string train_report_to_json(const TrainReport& r) {
  json::ordered_json j;
  j["schema"] = "pkde-train-report-v1";
  j["seed"] = r.seed;
  j["hyperparams"] = {{"learning_rate", r.hp.learning_rate},
                      {"batch_size", r.hp.batch_size},
                      {"epochs", r.hp.epochs}};
  j["config"] = {{"in_channels", r.config.in_channels},
                 {"depth", r.config.depth},
                 {"base_width", r.config.base_width},
                 {"skip_mode", skip_mode_name(r.config.skip_mode)}};
  j["baseline_val_mae"] = r.baseline_val_mae;
  auto arr = json::ordered_json::array();
  for (const auto& e : r.epochs)
    arr.push_back({{"train_mae", e.train_mae}, {"val_mae", e.val_mae}});
  j["epochs"] = arr;
  j["best_epoch"] = r.best_epoch;
  j["best_val_mae"] = r.best_val_mae;
  return j.dump(2) + "\n";
}

// Core loop over prepared samples. Validation falls back to the training
// samples when `val` is empty. Divergence (NaN loss) aborts with the epoch
// and batch index.
inline TrainResult train_samples(const std::vector<Sample>& train_set,
                                 const std::vector<Sample>& val_set, const ModelConfig& cfg,
                                 const HyperParams& hp, uint64_t seed, int threads = 1) {
  hp.validate();
  cfg.validate();
  if (train_set.empty()) throw_invalid("train: empty training set");
  const std::vector<Sample>& val = val_set.empty() ? train_set : val_set;

  const auto t_start = std::chrono::steady_clock::now();
  ModelState<float> st = init_weights<float>(cfg, seed);

  TrainResult out;
  out.report.seed = seed;
  out.report.hp = hp;
  out.report.config = cfg;
  out.report.baseline_val_mae = evaluate_mae(st, val, hp.batch_size, threads);
  out.report.best_epoch = 0;
  out.report.best_val_mae = out.report.baseline_val_mae;
  out.weights = st;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    CounterRng rng(seed, stream_key({kStreamShuffle, uint64_t(epoch)}));
    rng.shuffle(order.begin(), order.end());

    double epoch_sum = 0.0;
    size_t epoch_count = 0;
    int batch_index = 0;
    for (size_t lo = 0; lo < order.size(); lo += size_t(hp.batch_size), ++batch_index) {
      const size_t hi = std::min(order.size(), lo + size_t(hp.batch_size));
      auto input = detail::stack_batch(train_set, order, lo, hi, false);
      auto target = detail::stack_batch(train_set, order, lo, hi, true);
      try {
        Tape<float> tape;
        auto pred = forward(st, input, threads, &tape);
        auto loss = mae_loss(pred, target);
        if (!std::isfinite(loss.loss)) throw_numerical("loss is not finite");
        epoch_sum += loss.loss * double(pred.numel());
        epoch_count += pred.numel();
        backward(st, tape, loss.grad, threads);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numerical) throw;
        throw_numerical("train: diverged at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch_index) + ": " + e.what());
      }
      adam_step(st, hp.learning_rate);
    }

    EpochStats stats;
    stats.train_mae = epoch_sum / double(epoch_count);
    try {
      stats.val_mae = evaluate_mae(st, val, hp.batch_size, threads);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numerical) throw;
      throw_numerical("train: diverged at epoch " + std::to_string(epoch) +
                      ", validation pass: " + e.what());
    }
    out.report.epochs.push_back(stats);
    if (stats.val_mae < out.report.best_val_mae) {
      out.report.best_val_mae = stats.val_mae;
      out.report.best_epoch = epoch;
      out.weights = st;
    }
  }

  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// Split-driven entry point over a labeled dataset.
inline TrainResult train(const Dataset& d, const SplitAssignment& split, const ModelConfig& cfg,
                         const HyperParams& hp, uint64_t seed, int threads = 1) {
  const auto train_set = samples_for_keys(d, split.train);
  const auto val_set = samples_for_keys(d, split.validation);
  return train_samples(train_set, val_set, cfg, hp, seed, threads);
}

// Predicts pore-probability images for the given triplets, in batches.
// Sigmoid output needs no clamping; keys carry through for evaluation.
inline std::map<LayerKey, PoreProbabilityImage> predict_batch(
    ModelState<float>& st, const std::vector<const LayerTriplet*>& triplets, int batch_size = 16,
    int threads = 1) {
  std::map<LayerKey, PoreProbabilityImage> out;
  if (triplets.empty()) return out;
  std::vector<Sample> samples;
  samples.reserve(triplets.size());
  for (const auto* t : triplets) samples.push_back(to_sample(*t));
  std::vector<size_t> idx(samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (size_t lo = 0; lo < samples.size(); lo += size_t(batch_size)) {
    const size_t hi = std::min(samples.size(), lo + size_t(batch_size));
    auto input = detail::stack_batch(samples, idx, lo, hi, false);
    auto pred = forward(st, input, threads);
    for (size_t i = lo; i < hi; ++i) {
      LayerImage img = LayerImage::zeros(Modality::PP, pred.w, pred.h);
      const float* src = pred.plane(int(i - lo), 0);
      std::copy_n(src, img.data.size(), img.data.begin());
      out.emplace(samples[i].key, std::move(img));
    }
  }
  return out;
}

}  // namespace pkde::nn
