#pragma once

// Comparison methods: large-scale random search with local refinement
// (LSRS-LR) against the emulator, plain random search, and a supervised
// inverse trained directly on reversed dataset pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "mfl/emulator.hpp"
#include "mfl/errors.hpp"
#include "mfl/machine.hpp"
#include "mfl/mfl.hpp"
#include "mfl/nn.hpp"
#include "mfl/process.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct LsrsConfig {
  std::size_t samples = 100;  // N
  std::size_t top_k = 10;     // K
  int refine_steps = 200;     // T
  double eta = 0.01;          // Adam step
  Vector lower;               // search box in the emulator's input space
  Vector upper;
  std::uint64_t seed = 0;

  void validate(Eigen::Index dim) const {
    if (samples < 1) throw ConfigError("lsrs.samples must be >= 1");
    if (top_k < 1 || top_k > samples) throw ConfigError("lsrs.top_k must be in [1, samples]");
    if (refine_steps < 0) throw ConfigError("lsrs.refine_steps must be >= 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("lsrs.eta must be > 0");
    if (lower.size() != dim || upper.size() != dim) throw DimensionError("lsrs bounds have wrong length");
    if (!lower.allFinite() || !upper.allFinite() || (lower.array() > upper.array()).any())
      throw ConfigError("lsrs bounds are empty or non-finite");
  }
};

struct LsrsCandidate {
  std::size_t sample_index = 0;
  double start_loss = 0.0;
  Vector x;  // after the last refinement step
  double loss = 0.0;
  Vector best_x;  // best point visited, start included
  double best_loss = 0.0;
};

struct LsrsResult {
  Vector x;  // refined candidate with the lowest final loss
  double loss = 0.0;
  Vector best_x;  // lowest loss seen anywhere during refinement
  double best_loss = 0.0;
  std::vector<double> sample_losses;  // stage 1, in sample order
  std::vector<LsrsCandidate> candidates;  // stage 2, in rank order
};

// Mean squared deviation of E(x) from the target.
inline double target_mse(const DenseNet& e, const Vector& x, const Vector& y) {
  const Vector out = forward(e, x);
  if (!out.allFinite()) throw NumericError("emulator produced a non-finite output");
  return (out - y).squaredNorm() / static_cast<double>(y.size());
}

// Uniform draws in the box, one column per sample.
inline Matrix uniform_samples(const Vector& lower, const Vector& upper, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix x(lower.size(), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = lower[i] + (upper[i] - lower[i]) * unit(rng);
  return x;
}

// Indices of the k smallest losses, ties broken by index.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& losses, std::size_t k) {
  std::vector<std::size_t> idx(losses.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return losses[a] < losses[b] || (losses[a] == losses[b] && a < b); });
  idx.resize(k);
  return idx;
}

inline LsrsResult lsrs_lr(const DenseNet& e, const Vector& y, const LsrsConfig& cfg) {
  cfg.validate(e.input_dim());
  if (y.size() != e.output_dim() || !y.allFinite()) throw DimensionError("lsrs target has wrong length or is non-finite");
  Rng rng(cfg.seed);
  const Matrix samples = uniform_samples(cfg.lower, cfg.upper, cfg.samples, rng);

  LsrsResult res;
  res.sample_losses.reserve(cfg.samples);
  const Matrix out = forward_batch(e, samples);
  if (!out.allFinite()) throw NumericError("emulator produced a non-finite output");
  for (Eigen::Index j = 0; j < samples.cols(); ++j)
    res.sample_losses.push_back((out.col(j) - y).squaredNorm() / static_cast<double>(y.size()));

  const double scale = 2.0 / static_cast<double>(y.size());
  for (std::size_t idx : top_k_indices(res.sample_losses, cfg.top_k)) {
    LsrsCandidate c;
    c.sample_index = idx;
    c.start_loss = res.sample_losses[idx];
    c.x = samples.col(static_cast<Eigen::Index>(idx));
    c.best_x = c.x;
    c.best_loss = c.start_loss;
    VectorAdam adam(c.x.size(), cfg.eta);
    double loss = c.start_loss;
    for (int t = 0; t < cfg.refine_steps; ++t) {
      const Vector g = grad_input(e, c.x, scale * (forward(e, c.x) - y));
      adam.step(c.x, g);
      c.x = c.x.cwiseMax(cfg.lower).cwiseMin(cfg.upper);
      loss = target_mse(e, c.x, y);
      if (loss < c.best_loss) {
        c.best_loss = loss;
        c.best_x = c.x;
      }
    }
    c.loss = loss;
    res.candidates.push_back(std::move(c));
  }
  // First minimum in rank order.
  const auto final_best = std::min_element(res.candidates.begin(), res.candidates.end(),
                                           [](const auto& a, const auto& b) { return a.loss < b.loss; });
  res.x = final_best->x;
  res.loss = final_best->loss;
  const auto seen_best = std::min_element(res.candidates.begin(), res.candidates.end(),
                                          [](const auto& a, const auto& b) { return a.best_loss < b.best_loss; });
  res.best_x = seen_best->best_x;
  res.best_loss = seen_best->best_loss;
  return res;
}

// Stage 1 alone with K = 1.
inline LsrsResult random_search(const DenseNet& e, const Vector& y, const Vector& lower, const Vector& upper,
                                std::size_t samples, std::uint64_t seed) {
  LsrsConfig cfg;
  cfg.samples = samples;
  cfg.top_k = 1;
  cfg.refine_steps = 0;
  cfg.lower = lower;
  cfg.upper = upper;
  cfg.seed = seed;
  return lsrs_lr(e, y, cfg);
}

struct SupervisedConfig {
  std::vector<int> hidden{64};
  Activation output = Activation::bounded_affine;
  int epochs = 700;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::adam;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("supervised.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("supervised.learning_rate must be > 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("supervised.validation_fraction must be in (0, 1)");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("supervised.hidden widths must be positive");
  }
};

struct SupervisedFit {
  ReverseModel model;
  FitResult fit;  // input-space MSE history
};

// Regression of normalized recipes on normalized outputs, with the reverse
// model's architecture.
inline SupervisedFit supervised_inverse(const Dataset& data, const ProcessSpec& spec, const SupervisedConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("supervised dataset is empty");
  std::vector<Vector> xs, zs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    xs.push_back(normalize_input(data.inputs[i], spec));
    zs.push_back(normalize_output(data.outputs[i], spec));
  }
  const std::uint64_t base = derive_seed(cfg.seed, stream::supervised);
  const auto [train, val] = split_indices(data.size(), cfg.validation_fraction, derive_seed(base, 1));
  MflConfig shape_cfg;
  shape_cfg.reverse_hidden = cfg.hidden;
  shape_cfg.reverse_output = cfg.output;
  shape_cfg.seed = derive_seed(base, 2);
  ReverseModel init = make_reverse_model(spec, shape_cfg);
  FitOptions opt;
  opt.epochs = cfg.epochs;
  opt.learning_rate = cfg.learning_rate;
  opt.optimizer = cfg.optimizer;
  FitResult fit = fit_regression(std::move(init.net), gather_columns(zs, train), gather_columns(xs, train),
                                 gather_columns(zs, val), gather_columns(xs, val), opt);
  SupervisedFit out{ReverseModel{fit.net}, std::move(fit)};
  return out;
}

}  // namespace mfl
