#pragma once

// Hyperparameter search over learning rate (log domain) and batch size.
// Ten quasi-random warmup trials, then a Matern-5/2 Gaussian process over
// (normalized log lr, one-hot batch) with expected-improvement acquisition
// evaluated on a deterministic candidate grid. A pure random-search mode is
// available for comparison. Everything is a function of (history, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pkde/core.hpp"
#include "pkde/error.hpp"
#include "pkde/json_compat.hpp"
#include "pkde/nn/train.hpp"
#include "pkde/rng.hpp"

namespace pkde::tuner {

using nn::HyperParams;

struct SearchSpace {
  double lr_lo = 1e-6;
  double lr_hi = 1e-3;
  std::vector<int> batch_choices = {16, 32, 64};

  void validate() const {
    if (!(lr_lo > 0.0) || !(lr_hi > lr_lo)) throw_invalid("SearchSpace: need 0 < lo < hi");
    if (batch_choices.empty()) throw_invalid("SearchSpace: no batch choices");
  }

  bool contains(const HyperParams& hp) const {
    if (hp.learning_rate < lr_lo || hp.learning_rate > lr_hi) return false;
    return std::find(batch_choices.begin(), batch_choices.end(), hp.batch_size) !=
           batch_choices.end();
  }
};

enum class TrialStatus { completed, diverged };

struct Trial {
  HyperParams hp;
  double validation_mae = 0.0;
  double train_seconds = 0.0;
  TrialStatus status = TrialStatus::completed;
};

namespace detail {

inline constexpr int kWarmupTrials = 10;
inline constexpr int kLrCandidates = 256;
inline constexpr double kLengthScale = 0.35;
inline constexpr double kBatchFeature = 0.5;
inline constexpr double kNoiseVar = 1e-6;
inline constexpr double kXi = 0.01;  // exploration margin in EI

inline double log_norm(const SearchSpace& space, double lr) {
  return (std::log10(lr) - std::log10(space.lr_lo)) /
         (std::log10(space.lr_hi) - std::log10(space.lr_lo));
}

inline std::vector<double> features(const SearchSpace& space, const HyperParams& hp) {
  std::vector<double> f(1 + space.batch_choices.size(), 0.0);
  f[0] = log_norm(space, hp.learning_rate);
  for (size_t i = 0; i < space.batch_choices.size(); ++i)
    if (space.batch_choices[i] == hp.batch_size) f[1 + i] = kBatchFeature;
  return f;
}

inline double matern52(const std::vector<double>& a, const std::vector<double>& b) {
  double r2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
  const double r = std::sqrt(r2) / kLengthScale;
  const double s5r = std::sqrt(5.0) * r;
  return (1.0 + s5r + 5.0 * r2 / (kLengthScale * kLengthScale) / 3.0) * std::exp(-s5r);
}

// In-place Cholesky of a symmetric positive-definite matrix (row-major).
inline void cholesky(std::vector<double>& m, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double s = m[i * n + j];
      for (size_t k = 0; k < j; ++k) s -= m[i * n + k] * m[j * n + k];
      if (i == j) {
        if (s <= 0.0) throw_numerical("gp: matrix not positive definite");
        m[i * n + i] = std::sqrt(s);
      } else {
        m[i * n + j] = s / m[j * n + j];
      }
    }
    for (size_t j = i + 1; j < n; ++j) m[i * n + j] = 0.0;
  }
}

inline void solve_lower(const std::vector<double>& L, size_t n, std::vector<double>& x) {
  for (size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (size_t k = 0; k < i; ++k) s -= L[i * n + k] * x[k];
    x[i] = s / L[i * n + i];
  }
}

inline void solve_upper_from_lower(const std::vector<double>& L, size_t n,
                                   std::vector<double>& x) {
  for (size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (size_t k = ii + 1; k < n; ++k) s -= L[k * n + ii] * x[k];
    x[ii] = s / L[ii * n + ii];
  }
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct GpModel {
  std::vector<std::vector<double>> x;
  std::vector<double> chol;   // Cholesky factor of K + noise
  std::vector<double> alpha;  // (K + noise)^-1 y
  double y_mean = 0.0, y_std = 1.0;
  double y_best = 0.0;  // standardized best (minimum) observation

  static GpModel fit(const SearchSpace& space, const std::vector<Trial>& completed) {
    GpModel gp;
    const size_t n = completed.size();
    std::vector<double> y(n);
    for (size_t i = 0; i < n; ++i) {
      gp.x.push_back(features(space, completed[i].hp));
      y[i] = completed[i].validation_mae;
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= double(n);
    gp.y_mean = mean;
    gp.y_std = var > 1e-24 ? std::sqrt(var) : 1.0;
    for (double& v : y) v = (v - gp.y_mean) / gp.y_std;
    gp.y_best = *std::min_element(y.begin(), y.end());

    gp.chol.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        gp.chol[i * n + j] = matern52(gp.x[i], gp.x[j]) + (i == j ? kNoiseVar : 0.0);
    cholesky(gp.chol, n);
    gp.alpha = y;
    solve_lower(gp.chol, n, gp.alpha);
    solve_upper_from_lower(gp.chol, n, gp.alpha);
    return gp;
  }

  // Expected improvement (for minimization) at a feature point.
  double expected_improvement(const std::vector<double>& f) const {
    const size_t n = x.size();
    std::vector<double> k(n);
    for (size_t i = 0; i < n; ++i) k[i] = matern52(f, x[i]);
    double mu = 0.0;
    for (size_t i = 0; i < n; ++i) mu += k[i] * alpha[i];
    std::vector<double> v = k;
    solve_lower(chol, n, v);
    double var = matern52(f, f);
    for (size_t i = 0; i < n; ++i) var -= v[i] * v[i];
    const double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
    const double gap = y_best - mu - kXi;
    if (sigma < 1e-12) return std::max(gap, 0.0);
    const double z = gap / sigma;
    return gap * normal_cdf(z) + sigma * normal_pdf(z);
  }
};

inline HyperParams warmup_point(const SearchSpace& space, int index) {
  // Stratified log-uniform learning rates, batch sizes round-robin.
  const double frac = (double(index % kWarmupTrials) + 0.5) / double(kWarmupTrials);
  const double lg =
      std::log10(space.lr_lo) + frac * (std::log10(space.lr_hi) - std::log10(space.lr_lo));
  HyperParams hp;
  hp.learning_rate = std::pow(10.0, lg);
  hp.batch_size = space.batch_choices[size_t(index) % space.batch_choices.size()];
  return hp;
}

inline bool seen(const std::vector<Trial>& history, const HyperParams& hp) {
  for (const auto& t : history)
    if (t.hp.learning_rate == hp.learning_rate && t.hp.batch_size == hp.batch_size) return true;
  return false;
}

}  // namespace detail

// Next configuration to try. The first ten calls cover the space
// quasi-randomly; afterwards the GP surrogate picks the EI maximizer over a
// seeded candidate grid. Deterministic given (history, seed).
inline HyperParams suggest(const std::vector<Trial>& history, const SearchSpace& space,
                           uint64_t seed) {
  space.validate();
  const int n = int(history.size());

  std::vector<Trial> completed;
  for (const auto& t : history)
    if (t.status == TrialStatus::completed && std::isfinite(t.validation_mae))
      completed.push_back(t);

  if (n < detail::kWarmupTrials || completed.size() < 2) {
    HyperParams hp = detail::warmup_point(space, n);
    // Nudge forward on the rare exact collision with a resumed history.
    for (int bump = 1; detail::seen(history, hp) && bump < 1000; ++bump)
      hp = detail::warmup_point(space, n + bump);
    return hp;
  }

  const auto gp = detail::GpModel::fit(space, completed);
  CounterRng rng(seed, stream_key({kStreamTuner, uint64_t(n)}));

  HyperParams best_hp;
  double best_ei = -std::numeric_limits<double>::infinity();
  bool found = false;
  const double lg_lo = std::log10(space.lr_lo);
  const double lg_hi = std::log10(space.lr_hi);
  for (int batch : space.batch_choices) {
    for (int j = 0; j < detail::kLrCandidates; ++j) {
      const double u = (double(j) + rng.next_double()) / double(detail::kLrCandidates);
      HyperParams hp;
      hp.learning_rate = std::pow(10.0, lg_lo + u * (lg_hi - lg_lo));
      hp.batch_size = batch;
      if (detail::seen(history, hp)) continue;
      const double ei = gp.expected_improvement(detail::features(space, hp));
      if (ei > best_ei) {
        best_ei = ei;
        best_hp = hp;
        found = true;
      }
    }
  }
  if (!found) {
    // Space exhausted at grid resolution: fall back to a fresh random point.
    HyperParams hp;
    hp.learning_rate =
        std::pow(10.0, lg_lo + rng.next_double() * (lg_hi - lg_lo));
    hp.batch_size = space.batch_choices[rng.uniform_int(uint32_t(space.batch_choices.size()))];
    return hp;
  }
  return best_hp;
}

// Pure log-uniform random sampling; the comparison baseline.
inline HyperParams suggest_random(const std::vector<Trial>& history, const SearchSpace& space,
                                  uint64_t seed) {
  space.validate();
  CounterRng rng(seed, stream_key({kStreamTuner, 0xABCDull, uint64_t(history.size())}));
  HyperParams hp;
  hp.learning_rate = std::pow(
      10.0, std::log10(space.lr_lo) +
                rng.next_double() * (std::log10(space.lr_hi) - std::log10(space.lr_lo)));
  hp.batch_size = space.batch_choices[rng.uniform_int(uint32_t(space.batch_choices.size()))];
  return hp;
}

// Objective: validation MAE for a configuration. Throwing a numerical error
// marks the trial as diverged.
using Objective = std::function<double(const HyperParams&)>;

struct SearchResult {
  std::vector<Trial> trials;
  HyperParams best_hp;
  double best_mae = 0.0;
  int best_index = -1;  // 0-based trial index
};

enum class SearchStrategy { gp, random };

// Runs `n_trials` total (counting any prior trials passed in for resumption).
// Every suggestion stays inside the space; the best completed trial wins,
// ties broken by the earlier index.
inline SearchResult run_search(const Objective& objective, const SearchSpace& space, int n_trials,
                               uint64_t seed, std::vector<Trial> prior = {},
                               SearchStrategy strategy = SearchStrategy::gp,
                               std::function<void(int, const Trial&)> on_trial = nullptr) {
  space.validate();
  if (n_trials < 1) throw_invalid("run_search: n_trials must be >= 1");
  SearchResult out;
  out.trials = std::move(prior);

  while (int(out.trials.size()) < n_trials) {
    const HyperParams hp = strategy == SearchStrategy::gp
                               ? suggest(out.trials, space, seed)
                               : suggest_random(out.trials, space, seed);
    if (!space.contains(hp)) throw_numerical("run_search: suggestion left the space");
    Trial trial;
    trial.hp = hp;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      trial.validation_mae = objective(hp);
      trial.status = std::isfinite(trial.validation_mae) ? TrialStatus::completed
                                                         : TrialStatus::diverged;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numerical) throw;
      trial.status = TrialStatus::diverged;
      trial.validation_mae = std::numeric_limits<double>::quiet_NaN();
    }
    trial.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.trials.push_back(trial);
    if (on_trial) on_trial(int(out.trials.size()) - 1, trial);
  }

  for (size_t i = 0; i < out.trials.size(); ++i) {
    const auto& t = out.trials[i];
    if (t.status != TrialStatus::completed) continue;
    if (out.best_index < 0 || t.validation_mae < out.best_mae) {
      out.best_index = int(i);
      out.best_mae = t.validation_mae;
      out.best_hp = t.hp;
    }
  }
  if (out.best_index < 0) throw_numerical("run_search: all trials diverged");
  return out;
}

// --- JSONL trial log ----------------------------------------------------

inline std::string trial_to_jsonl(int index, const Trial& t) {
  json::ordered_json j;
  j["trial"] = index;
  j["learning_rate"] = t.hp.learning_rate;
  j["batch_size"] = t.hp.batch_size;
  j["epochs"] = t.hp.epochs;
  if (t.status == TrialStatus::completed)
    j["validation_mae"] = t.validation_mae;
  else
    j["validation_mae"] = nullptr;
  j["train_seconds"] = t.train_seconds;
  j["status"] = t.status == TrialStatus::completed ? "completed" : "diverged";
  return j.dump() + "\n";
}

inline std::vector<Trial> trials_from_jsonl(const std::string& text, const std::string& origin) {
  std::vector<Trial> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const auto j = json::json::parse(line);
      Trial t;
      t.hp.learning_rate = j.at("learning_rate").get<double>();
      t.hp.batch_size = j.at("batch_size").get<int>();
      t.hp.epochs = j.at("epochs").get<int>();
      t.status = j.at("status").get<std::string>() == "completed" ? TrialStatus::completed
                                                                  : TrialStatus::diverged;
      t.validation_mae = t.status == TrialStatus::completed
                             ? j.at("validation_mae").get<double>()
                             : std::numeric_limits<double>::quiet_NaN();
      t.train_seconds = j.at("train_seconds").get<double>();
      out.push_back(t);
    } catch (const std::exception& e) {
      throw_data("trial log parse error in " + origin + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pkde::tuner
