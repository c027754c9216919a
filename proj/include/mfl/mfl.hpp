#pragma once

// Machine-feedback learning: a reverse model R maps normalized targets to
// normalized recipes and is trained by gradient descent on
//   L = (1/n') sum_j ||z_j - F(R(z_j))||^2
// through a forward model F. Loop A uses the emulator for F; Loop B uses the
// machine through its differentiation port. The step size drops from alpha1
// to alpha2 late in each loop when the forward model is locally steep.

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfl/emulator.hpp"
#include "mfl/errors.hpp"
#include "mfl/machine.hpp"
#include "mfl/nn.hpp"
#include "mfl/process.hpp"
#include "mfl/report.hpp"
#include "mfl/rng.hpp"

namespace mfl {

enum class JacobianPort { exact, finite_difference };

inline std::string_view to_string(JacobianPort p) {
  return p == JacobianPort::exact ? "exact" : "finite_difference";
}

inline JacobianPort jacobian_port_from_string(std::string_view s) {
  if (s == "exact") return JacobianPort::exact;
  if (s == "finite_difference" || s == "fd") return JacobianPort::finite_difference;
  throw ConfigError("unknown jacobian port '" + std::string(s) + "'");
}

struct MflConfig {
  double alpha1 = 0.01;
  double alpha2 = 0.0099;
  int loop_a_iterations = 1200;
  int loop_a_gate_start = 1150;
  int loop_b_iterations = 200;
  int loop_b_gate_start = 150;
  double delta = 0.9;  // +inf never gates
  std::vector<int> reverse_hidden{64};
  Activation reverse_output = Activation::bounded_affine;
  bool early_stop = true;
  JacobianPort port = JacobianPort::exact;
  double fd_step = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha1 > 0.0) || !(alpha2 > 0.0) || !std::isfinite(alpha1) || !std::isfinite(alpha2))
      throw ConfigError("mfl: learning rates must be finite and > 0");
    if (!(alpha2 < alpha1)) throw ConfigError("mfl: alpha2 must be smaller than alpha1");
    if (loop_a_iterations < 0 || loop_b_iterations < 0)
      throw ConfigError("mfl: iteration counts must be >= 0");
    if (loop_a_gate_start < 0 || loop_b_gate_start < 0)
      throw ConfigError("mfl: gate start must be >= 0");
    if (!(delta >= 0.0)) throw ConfigError("mfl: delta must be >= 0");
    if (!(fd_step > 0.0) || !std::isfinite(fd_step)) throw ConfigError("mfl: fd_step must be > 0");
    for (int h : reverse_hidden)
      if (h <= 0) throw ConfigError("mfl: reverse hidden widths must be positive");
  }
};

// ---- forward models ----

template <class F>
concept ForwardModel = requires(F& f, const Matrix& x, const Vector& v) {
  { f.evaluate(x) } -> std::same_as<Matrix>;
  { f.jacobian(v) } -> std::same_as<Matrix>;
  { f.queries() } -> std::convertible_to<std::size_t>;
};

// Trained emulator. Free to query.
class EmulatorModel {
 public:
  explicit EmulatorModel(const DenseNet& net) : net_(&net) {}
  Matrix evaluate(const Matrix& x) { return forward_batch(*net_, x); }
  Matrix jacobian(const Vector& x) { return jacobian_input(*net_, x); }
  std::size_t queries() const { return 0; }

 private:
  const DenseNet* net_;
};

// The machine. Every output evaluation counts; with the finite-difference
// port each Jacobian costs 2n more.
class MachineModel {
 public:
  MachineModel(GroundTruthMachine& m, JacobianPort port = JacobianPort::exact, double fd_step = 1e-4)
      : m_(&m), port_(port), step_(fd_step) {}

  Matrix evaluate(const Matrix& x) {
    Matrix y(m_->spec().output_count(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) y.col(j) = m_->evaluate_normalized(x.col(j));
    return y;
  }

  Matrix jacobian(const Vector& x) {
    if (port_ == JacobianPort::exact) return m_->jacobian_normalized(x);
    Matrix j(m_->spec().output_count(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Vector a = x, b = x;
      a[i] += step_;
      b[i] -= step_;
      j.col(i) = (m_->evaluate_normalized(a) - m_->evaluate_normalized(b)) / (2.0 * step_);
    }
    return j;
  }

  std::size_t queries() const { return m_->evaluations(); }

 private:
  GroundTruthMachine* m_;
  JacobianPort port_;
  double step_;
};

// ---- reverse model ----

struct ReverseModel {
  DenseNet net;

  // Columns of z are normalized targets.
  Matrix propose(const Matrix& z) const { return forward_batch(net, z); }
  Vector propose_one(const Vector& z) const { return forward(net, z); }
};

inline ReverseModel make_reverse_model(const ProcessSpec& spec, const MflConfig& cfg) {
  NetShape shape{spec.output_count(), cfg.reverse_hidden, spec.input_count(), Activation::tanh,
                 cfg.reverse_output, {}, {}};
  if (cfg.reverse_output == Activation::bounded_affine) {
    shape.box_lower = Vector::Constant(spec.input_count(), -1.0);
    shape.box_upper = Vector::Constant(spec.input_count(), 1.0);
  }
  return {init_dense_net(shape, derive_seed(cfg.seed, stream::reverse_init))};
}

inline Matrix targets_matrix(const std::vector<Vector>& z) {
  if (z.empty()) throw ConfigError("target set is empty");
  Matrix m(z.front().size(), static_cast<Eigen::Index>(z.size()));
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j].size() != m.rows()) throw DimensionError("targets have different dimensions");
    m.col(static_cast<Eigen::Index>(j)) = z[j];
  }
  return m;
}

inline double reverse_loss(const ReverseModel& r, ForwardModel auto& f, const Matrix& z) {
  return (f.evaluate(r.propose(z)) - z).squaredNorm() / static_cast<double>(z.cols());
}

// Mean induced 2-norm of the forward Jacobian over the proposed recipes.
inline double mean_sensitivity(ForwardModel auto& f, const Matrix& x) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) s += induced_l2_norm(f.jacobian(x.col(j)));
  return s / static_cast<double>(x.cols());
}

// dL/dtheta = (2/n') sum_j (dR/dtheta)^T J_j^T (F(R(z_j)) - z_j).
inline GradientSet reverse_gradient(const ReverseModel& r, ForwardModel auto& f, const Matrix& z) {
  const Matrix x = r.propose(z);
  const Matrix y = f.evaluate(x);
  Matrix upstream(x.rows(), x.cols());
  const double scale = 2.0 / static_cast<double>(z.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    upstream.col(j) = scale * f.jacobian(x.col(j)).transpose() * (y.col(j) - z.col(j));
  return grad_params_batch(r.net, z, upstream);
}

// 0-based iteration t. alpha2 only in the late phase and only where the
// forward model is steep.
inline double choose_rate(std::size_t t, std::size_t gate_start, double mean_sensitivity, double delta,
                          double alpha1, double alpha2) {
  if (!(alpha2 < alpha1)) throw ConfigError("alpha2 must be smaller than alpha1");
  return t >= gate_start && mean_sensitivity >= delta ? alpha2 : alpha1;
}

// ---- loops ----

struct LoopOptions {
  char tag = 'A';
  std::size_t iterations = 0;
  std::size_t gate_start = 0;
  // Stop as soon as every target meets. When the budget runs out first, one
  // closing evaluation pass checks the final model.
  bool early_stop = false;
  std::size_t query_offset = 0;  // added to the cumulative query column
};

struct LoopResult {
  ReverseModel model;
  std::vector<IterationRow> trace;
  std::size_t updates = 0;
  // 1-based evaluation pass at which all targets first met (pass k sees the
  // model after k-1 updates).
  std::optional<std::size_t> iterations_to_meet;
  bool stopped_early = false;
  // Recipes and forward outputs of the returned model, when the last pass
  // evaluated it.
  std::optional<Matrix> final_inputs;
  std::optional<Matrix> final_outputs;
};

inline LoopResult run_loop(ReverseModel r, ForwardModel auto& f, const Matrix& z, const ProcessSpec& spec,
                           const MflConfig& cfg, const LoopOptions& opt) {
  if (z.rows() != spec.output_count()) throw DimensionError("targets do not match the spec");
  LoopResult res;
  const std::size_t q0 = f.queries();
  const auto n = z.cols();
  const double scale = 2.0 / static_cast<double>(n);
  auto queries = [&] { return opt.query_offset + (f.queries() - q0); };

  for (std::size_t t = 0; t <= opt.iterations; ++t) {
    const bool budget_done = t == opt.iterations;
    if (budget_done && !opt.early_stop) break;
    const Matrix x = r.propose(z);
    const Matrix y = f.evaluate(x);
    const double loss = (y - z).squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(loss))
      throw DivergenceError(std::string("loop ") + opt.tag + " loss became non-finite at iteration " +
                                std::to_string(t),
                            t);
    std::size_t meeting = 0, out_of_box = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (meets_all(denormalize_output(y.col(j), spec), spec)) ++meeting;
      if (x.col(j).cwiseAbs().maxCoeff() > 1.0) ++out_of_box;
    }
    const bool all = meeting == static_cast<std::size_t>(n);
    if (all && !res.iterations_to_meet) res.iterations_to_meet = t + 1;

    if (budget_done || (opt.early_stop && all)) {
      res.stopped_early = !budget_done;
      res.trace.push_back({t, opt.tag, loss, 0.0, 0.0, false, 0.0, queries(), meeting, out_of_box});
      res.final_inputs = x;
      res.final_outputs = y;
      break;
    }

    Matrix upstream(x.rows(), n);
    double sens = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Matrix jac = f.jacobian(x.col(j));
      sens += induced_l2_norm(jac);
      upstream.col(j) = scale * jac.transpose() * (y.col(j) - z.col(j));
    }
    sens /= static_cast<double>(n);
    const GradientSet grads = grad_params_batch(r.net, z, upstream);
    if (!grads.all_finite())
      throw DivergenceError(std::string("loop ") + opt.tag + " gradient became non-finite at iteration " +
                                std::to_string(t),
                            t);
    const double rate = choose_rate(t, opt.gate_start, sens, cfg.delta, cfg.alpha1, cfg.alpha2);
    r.net = gd_step(r.net, grads, rate);
    ++res.updates;
    res.trace.push_back({t, opt.tag, loss, sens, rate, true, std::sqrt(grads.squared_norm()), queries(),
                         meeting, out_of_box});
  }
  res.model = std::move(r);
  return res;
}

// Loop A: pretraining on the emulator. Never stops early.
inline LoopResult loop_a(ReverseModel r, const DenseNet& emulator, const Matrix& z, const ProcessSpec& spec,
                         const MflConfig& cfg) {
  EmulatorModel e(emulator);
  LoopOptions opt;
  opt.tag = 'A';
  opt.iterations = static_cast<std::size_t>(cfg.loop_a_iterations);
  opt.gate_start = static_cast<std::size_t>(cfg.loop_a_gate_start);
  return run_loop(std::move(r), e, z, spec, cfg, opt);
}

// Loop B: fine-tuning against the machine.
inline LoopResult loop_b(ReverseModel r, GroundTruthMachine& machine, const Matrix& z, const MflConfig& cfg,
                         std::size_t query_offset = 0) {
  MachineModel m(machine, cfg.port, cfg.fd_step);
  LoopOptions opt;
  opt.tag = 'B';
  opt.iterations = static_cast<std::size_t>(cfg.loop_b_iterations);
  opt.gate_start = static_cast<std::size_t>(cfg.loop_b_gate_start);
  opt.early_stop = cfg.early_stop;
  opt.query_offset = query_offset;
  return run_loop(std::move(r), m, z, machine.spec(), cfg, opt);
}

struct MflOptions {
  bool skip_loop_a = false;
  bool skip_loop_b = false;
};

struct MflOutcome {
  ReverseModel model;
  EmulatorFit emulator;
  RunReport report;
};

inline nlohmann::json mfl_config_json(const MflConfig& c) {
  return {{"alpha1", c.alpha1},
          {"alpha2", c.alpha2},
          {"loop_a_iterations", c.loop_a_iterations},
          {"loop_a_gate_start", c.loop_a_gate_start},
          {"loop_b_iterations", c.loop_b_iterations},
          {"loop_b_gate_start", c.loop_b_gate_start},
          {"delta", std::isfinite(c.delta) ? nlohmann::json(c.delta) : nlohmann::json("inf")},
          {"reverse_hidden", c.reverse_hidden},
          {"reverse_output", std::string(to_string(c.reverse_output))},
          {"early_stop", c.early_stop},
          {"jacobian_port", std::string(to_string(c.port))},
          {"fd_step", c.fd_step},
          {"seed", c.seed}};
}

// Scores the model's recipes for `targets` on the machine (n' queries).
inline void score_on_machine(RunReport& report, GroundTruthMachine& machine, const std::vector<Vector>& targets,
                             const Matrix& recipes_normalized) {
  const auto& spec = machine.spec();
  std::vector<Vector> recipes, outputs;
  for (Eigen::Index j = 0; j < recipes_normalized.cols(); ++j) {
    recipes.push_back(denormalize_input(recipes_normalized.col(j), spec));
    outputs.push_back(machine.evaluate(recipes.back()));
  }
  fill_outcomes(report, targets, recipes, outputs);
}

// Loop A on a trained emulator, Loop B and final machine scoring.
inline MflOutcome mfl_train(EmulatorFit emulator, GroundTruthMachine& machine, const std::vector<Vector>& targets,
                            const MflConfig& cfg, const MflOptions& opt = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& spec = machine.spec();
  const std::size_t q0 = machine.evaluations();
  const std::size_t clipped0 = machine.clipped_evaluations();

  std::vector<Vector> zn;
  for (const auto& t : targets) {
    if (t.size() != spec.output_count()) throw DimensionError("target dimension does not match the spec");
    zn.push_back(normalize_output(t, spec));
  }
  const Matrix z = targets_matrix(zn);

  MflOutcome out{make_reverse_model(spec, cfg), std::move(emulator), {}};
  RunReport& rep = out.report;
  rep.spec = spec;
  rep.method = "mfl";
  rep.scenario = spec.name;
  rep.seed = cfg.seed;
  rep.emulator_validation_mse = out.emulator.validation_mse;

  MflConfig a_cfg = cfg;
  if (opt.skip_loop_a) a_cfg.loop_a_iterations = 0;
  LoopResult a = loop_a(std::move(out.model), out.emulator.net, z, spec, a_cfg);
  rep.trace = std::move(a.trace);

  std::optional<Matrix> final_x;
  if (!opt.skip_loop_b) {
    LoopResult b = loop_b(std::move(a.model), machine, z, cfg);
    rep.trace.insert(rep.trace.end(), b.trace.begin(), b.trace.end());
    rep.loop_b_updates = b.updates;
    rep.loop_b_iterations_to_meet = b.iterations_to_meet;
    out.model = std::move(b.model);
    if (b.final_inputs && b.final_outputs) {
      // The closing pass already measured the returned model.
      final_x = b.final_inputs;
      std::vector<Vector> recipes, outputs;
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        recipes.push_back(denormalize_input(b.final_inputs->col(j), spec));
        outputs.push_back(denormalize_output(b.final_outputs->col(j), spec));
      }
      fill_outcomes(rep, targets, recipes, outputs);
    }
  } else {
    out.model = std::move(a.model);
  }
  if (!final_x) {
    const std::size_t before = machine.evaluations();
    score_on_machine(rep, machine, targets, out.model.propose(z));
    rep.scoring_queries = machine.evaluations() - before;
  }
  rep.method_queries = machine.evaluations() - q0;
  rep.clipped_evaluations = machine.clipped_evaluations() - clipped0;
  rep.config = {{"mfl", mfl_config_json(cfg)},
                {"skip_loop_a", opt.skip_loop_a},
                {"skip_loop_b", opt.skip_loop_b}};
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Emulator fit first. The dataset was already drawn from `machine`; its
// cost is the caller's to report. Wall-clock covers the emulator fit too.
inline MflOutcome mfl_train(const Dataset& data, GroundTruthMachine& machine, const std::vector<Vector>& targets,
                            const EmulatorConfig& emu_cfg, const MflConfig& cfg, const MflOptions& opt = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  MflOutcome out = mfl_train(train_emulator(data, machine.spec(), emu_cfg), machine, targets, cfg, opt);
  out.report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace mfl
