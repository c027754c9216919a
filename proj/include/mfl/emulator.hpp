#pragma once

// Emulator training: full-batch regression of normalized outputs on
// normalized inputs, with optional domain randomization (fresh Gaussian
// input noise each epoch). The same fitter trains the supervised inverse.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfl/csv.hpp"
#include "mfl/errors.hpp"
#include "mfl/machine.hpp"
#include "mfl/nn.hpp"
#include "mfl/process.hpp"
#include "mfl/rng.hpp"
#include "mfl/serialize.hpp"

namespace mfl {

enum class Optimizer { adam, gd };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "gd"; }

inline Optimizer optimizer_from_string(std::string_view s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "gd") return Optimizer::gd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct EpochMetrics {
  int epoch = 0;
  double train_mse = 0.0;       // on the (possibly noised) inputs of that epoch, before the step
  double validation_mse = 0.0;  // noise-free, after the step
};

struct FitOptions {
  int epochs = 700;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::adam;
  double input_noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

struct FitResult {
  DenseNet net;
  double initial_validation_mse = 0.0;
  double validation_mse = 0.0;
  std::vector<EpochMetrics> history;
};

// Mean over samples and output dims. Columns of x and y are samples.
inline double mean_squared_error(const DenseNet& net, const Matrix& x, const Matrix& y) {
  if (y.size() == 0) throw DimensionError("mean_squared_error: empty data");
  return (forward_batch(net, x) - y).squaredNorm() / static_cast<double>(y.size());
}

inline FitResult fit_regression(DenseNet net, const Matrix& x_train, const Matrix& y_train,
                                const Matrix& x_val, const Matrix& y_val, const FitOptions& opt) {
  if (opt.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(opt.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(opt.input_noise_std >= 0.0)) throw ConfigError("input noise std must be >= 0");
  if (x_train.cols() != y_train.cols() || x_val.cols() != y_val.cols())
    throw DimensionError("fit_regression: sample count mismatch");

  FitResult fit;
  fit.initial_validation_mse = mean_squared_error(net, x_val, y_val);
  fit.history.reserve(static_cast<std::size_t>(opt.epochs));
  AdamState adam = AdamState::for_net(net);
  Rng noise_rng(opt.noise_seed);
  const double count = static_cast<double>(y_train.size());

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    Matrix xi = x_train;
    if (opt.input_noise_std > 0.0) {
      std::normal_distribution<double> dist(0.0, opt.input_noise_std);
      for (Eigen::Index k = 0; k < xi.size(); ++k) xi.data()[k] += dist(noise_rng);
    }
    const auto tape = detail::record_forward(net, xi);
    const Matrix residual = tape.output - y_train;
    const double train_mse = residual.squaredNorm() / count;
    if (!std::isfinite(train_mse))
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
    GradientSet grads = GradientSet::zeros_like(net);
    detail::backpropagate(net, tape, (2.0 / count) * residual, &grads);
    if (opt.optimizer == Optimizer::adam) {
      auto [next, state] = adam_step(net, grads, std::move(adam), opt.learning_rate);
      net = std::move(next);
      adam = std::move(state);
    } else {
      net = gd_step(net, grads, opt.learning_rate);
    }
    const double val = mean_squared_error(net, x_val, y_val);
    if (!std::isfinite(val))
      throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch), epoch);
    fit.history.push_back({epoch, train_mse, val});
  }
  fit.validation_mse = fit.history.back().validation_mse;
  fit.net = std::move(net);
  return fit;
}

// Seeded shuffle; the first round(fraction * n) indices (at least 1) are validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation fraction must be in (0, 1)");
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n))));
  if (n < n_val + 2)
    throw ConfigError("dataset of " + std::to_string(n) + " samples leaves fewer than 2 for training");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {std::move(train), std::move(val)};
}

inline Matrix gather_columns(const std::vector<Vector>& cols, const std::vector<std::size_t>& idx) {
  Matrix m(cols.front().size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = cols[idx[k]];
  return m;
}

struct EmulatorConfig {
  std::vector<int> hidden{64};
  int epochs = 700;
  double learning_rate = 0.01;
  double randomization_std = 0.02;  // normalized input units; 0 disables
  double validation_fraction = 0.2;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> noise_seed;  // defaults to a stream of `seed`

  void validate() const {
    if (epochs < 1) throw ConfigError("emulator.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("emulator.learning_rate must be > 0");
    if (!(randomization_std >= 0.0)) throw ConfigError("emulator.randomization_std must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("emulator.validation_fraction must be in (0, 1)");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("emulator.hidden widths must be positive");
  }
};

using EmulatorFit = FitResult;

// Returns E in normalized space (identity output) and its noise-free
// held-out MSE.
inline EmulatorFit train_emulator(const Dataset& data, const ProcessSpec& spec,
                                  const EmulatorConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("emulator dataset is empty");
  std::vector<Vector> xs, zs;
  xs.reserve(data.size());
  zs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    xs.push_back(normalize_input(data.inputs[i], spec));
    zs.push_back(normalize_output(data.outputs[i], spec));
  }
  const auto [train, val] =
      split_indices(data.size(), cfg.validation_fraction, derive_seed(cfg.seed, stream::emulator_split));
  DenseNet net = init_dense_net(
      {spec.input_count(), cfg.hidden, spec.output_count(), Activation::tanh, Activation::identity, {}, {}},
      derive_seed(cfg.seed, stream::emulator_init));
  FitOptions opt;
  opt.epochs = cfg.epochs;
  opt.learning_rate = cfg.learning_rate;
  opt.optimizer = cfg.optimizer;
  opt.input_noise_std = cfg.randomization_std;
  opt.noise_seed = cfg.noise_seed.value_or(derive_seed(cfg.seed, stream::emulator_noise));
  return fit_regression(std::move(net), gather_columns(xs, train), gather_columns(zs, train),
                        gather_columns(xs, val), gather_columns(zs, val), opt);
}

inline void write_fit_metrics(const std::vector<EpochMetrics>& history,
                              const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row({"epoch", "train_mse", "val_mse"});
  for (const auto& m : history)
    csv.row({std::to_string(m.epoch), format_double(m.train_mse), format_double(m.validation_mse)});
}

// Model file plus metrics sidecar (<stem>_metrics.csv next to it).
inline void save_emulator(const EmulatorFit& fit, const std::filesystem::path& model_path) {
  save_model(fit.net, model_path);
  auto metrics = model_path;
  metrics.replace_filename(model_path.stem().string() + "_metrics.csv");
  write_fit_metrics(fit.history, metrics);
}

}  // namespace mfl
