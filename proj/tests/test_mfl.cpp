#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "mfl/mfl.hpp"
#include "oracles.hpp"

using namespace mfl;

namespace {

DenseNet scalar_net(double w) { return oracle::single_layer(Matrix::Constant(1, 1, w), Vector::Zero(1)); }

Matrix random_targets(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double sd = 0.3) {
  Rng rng(seed);
  Matrix z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) z.col(j) = gaussian_vector(rows, sd, rng);
  return z;
}

// Flattened gradient of the reverse loss by central differences.
Vector fd_reverse_gradient(const ReverseModel& r, ForwardModel auto& f, const Matrix& z, double h = 1e-5) {
  return oracle::fd_param_gradient(
      r.net, [&](const DenseNet& n) { return reverse_loss(ReverseModel{n}, f, z); }, h);
}

}  // namespace

TEST(ReverseLoss, ScalarExample) {
  // R(z) = a z, F(x) = b x, one target z'.
  const double a = 0.7, b = 1.3, zp = 0.4;
  DenseNet em = scalar_net(b);
  EmulatorModel f(em);
  ReverseModel r{scalar_net(a)};
  const Matrix z = Matrix::Constant(1, 1, zp);
  EXPECT_NEAR(reverse_loss(r, f, z), std::pow(zp - a * b * zp, 2), 1e-15);
  const GradientSet g = reverse_gradient(r, f, z);
  EXPECT_NEAR(g.weight[0](0, 0), 2 * b * zp * (a * b * zp - zp), 1e-15);
}

TEST(ReverseLoss, PerfectInverseHasZeroLossAndGradient) {
  DenseNet em = scalar_net(2.0);
  EmulatorModel f(em);
  ReverseModel r{scalar_net(0.5)};
  const Matrix z = random_targets(1, 5, 3);
  EXPECT_NEAR(reverse_loss(r, f, z), 0.0, 1e-30);
  EXPECT_NEAR(reverse_gradient(r, f, z).squared_norm(), 0.0, 1e-30);
}

TEST(ReverseGradient, MatchesFiniteDifferencesThroughEmulator) {
  const ProcessSpec spec = etch_spec();
  MflConfig cfg;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    cfg.seed = seed;
    const ReverseModel r = make_reverse_model(spec, cfg);
    const DenseNet em = init_dense_net({11, {64}, 6, Activation::tanh, Activation::identity, {}, {}}, seed + 100);
    EmulatorModel f(em);
    const Matrix z = random_targets(6, 4, seed + 7);
    const Vector analytic = reverse_gradient(r, f, z).flatten();
    const Vector fd = fd_reverse_gradient(r, f, z);
    ASSERT_EQ(analytic.size(), fd.size());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_err(analytic[i], fd[i]));
    EXPECT_LE(worst, 1e-5) << "seed " << seed;
  }
}

TEST(ReverseGradient, MatchesFiniteDifferencesThroughMachinePort) {
  const ProcessSpec spec = cvd_spec();
  GroundTruthMachine machine = build_machine(spec, 5);
  MachineModel f(machine);
  MflConfig cfg;
  cfg.reverse_hidden = {16};
  const ReverseModel r = make_reverse_model(spec, cfg);
  const Matrix z = random_targets(spec.output_count(), 3, 11);
  // Bounded-affine output keeps proposals strictly inside the box, so the
  // machine is smooth along every difference step.
  ASSERT_LT(r.propose(z).cwiseAbs().maxCoeff(), 1.0);
  const Vector analytic = reverse_gradient(r, f, z).flatten();
  const Vector fd = fd_reverse_gradient(r, f, z);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_err(analytic[i], fd[i]));
  EXPECT_LE(worst, 1e-5);
}

TEST(MachineModel, FiniteDifferencePortMatchesExactAndCosts2nQueries) {
  const ProcessSpec spec = etch_spec();
  GroundTruthMachine machine = build_machine(spec, 3);
  MachineModel fd(machine, JacobianPort::finite_difference, 1e-4);
  MachineModel exact(machine);
  const Vector u = Vector::Constant(11, 0.1);
  const std::size_t before = machine.evaluations();
  const Matrix j_fd = fd.jacobian(u);
  EXPECT_EQ(machine.evaluations() - before, 22u);
  const Matrix j = exact.jacobian(u);
  EXPECT_EQ(machine.evaluations() - before, 22u);
  EXPECT_LE((j_fd - j).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, j.cwiseAbs().maxCoeff()));
}

TEST(MeanSensitivity, AveragesSpectralNorms) {
  Matrix w(2, 2);
  w << 3, 0, 0, 1;
  DenseNet em = oracle::single_layer(w, Vector::Zero(2));
  EmulatorModel f(em);
  EXPECT_NEAR(mean_sensitivity(f, Matrix::Random(2, 3)), 3.0, 1e-8);
}

TEST(Gate, ChooseRate) {
  EXPECT_EQ(choose_rate(0, 5, 10.0, 0.9, 0.01, 0.0099), 0.01);
  EXPECT_EQ(choose_rate(5, 5, 10.0, 0.9, 0.01, 0.0099), 0.0099);
  EXPECT_EQ(choose_rate(5, 5, 0.9, 0.9, 0.01, 0.0099), 0.0099);
  EXPECT_EQ(choose_rate(5, 5, 0.8999, 0.9, 0.01, 0.0099), 0.01);
  EXPECT_EQ(choose_rate(9, 0, 0.0, 0.0, 0.01, 0.0099), 0.0099);
  EXPECT_EQ(choose_rate(9, 0, 1e300, std::numeric_limits<double>::infinity(), 0.01, 0.0099), 0.01);
  EXPECT_THROW(choose_rate(0, 0, 1.0, 0.5, 0.01, 0.01), ConfigError);
  EXPECT_THROW(choose_rate(0, 0, 1.0, 0.5, 0.01, 0.02), ConfigError);
}

TEST(Gate, LoopRatesFollowDeltaExtremes) {
  const ProcessSpec spec = etch_spec();
  const DenseNet em = init_dense_net({11, {64}, 6, Activation::tanh, Activation::identity, {}, {}}, 4);
  MflConfig cfg;
  cfg.loop_a_iterations = 20;
  cfg.loop_a_gate_start = 0;
  const Matrix z = random_targets(6, 4, 1);

  cfg.delta = 0.0;
  auto low = loop_a(make_reverse_model(spec, cfg), em, z, spec, cfg);
  ASSERT_EQ(low.trace.size(), 20u);
  for (const auto& row : low.trace) EXPECT_EQ(row.rate, cfg.alpha2);

  cfg.delta = std::numeric_limits<double>::infinity();
  auto high = loop_a(make_reverse_model(spec, cfg), em, z, spec, cfg);
  for (const auto& row : high.trace) EXPECT_EQ(row.rate, cfg.alpha1);
}

TEST(Gate, SmallerRateGivesSmallerStep) {
  const ProcessSpec spec = etch_spec();
  MflConfig cfg;
  const ReverseModel r = make_reverse_model(spec, cfg);
  const DenseNet em = init_dense_net({11, {64}, 6, Activation::tanh, Activation::identity, {}, {}}, 9);
  EmulatorModel f(em);
  const GradientSet g = reverse_gradient(r, f, random_targets(6, 4, 2));
  auto step_norm = [&](double a) {
    const DenseNet next = gd_step(r.net, g, a);
    double s = 0.0;
    for (std::size_t k = 0; k < next.layer_count(); ++k) {
      s += (next.layers()[k].weight - r.net.layers()[k].weight).squaredNorm();
      s += (next.layers()[k].bias - r.net.layers()[k].bias).squaredNorm();
    }
    return std::sqrt(s);
  };
  EXPECT_LT(step_norm(cfg.alpha2), step_norm(cfg.alpha1));
  EXPECT_GT(step_norm(cfg.alpha2), 0.0);
}

TEST(Config, Validation) {
  MflConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha2 = c.alpha1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MflConfig{};
  c.loop_b_iterations = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MflConfig{};
  c.delta = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MflConfig{};
  c.reverse_hidden = {0};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(jacobian_port_from_string("fd"), JacobianPort::finite_difference);
  EXPECT_THROW(jacobian_port_from_string("numeric"), ConfigError);
}

TEST(LoopA, ZeroIterationsLeavesModelUntouched) {
  const ProcessSpec spec = etch_spec();
  MflConfig cfg;
  cfg.loop_a_iterations = 0;
  const ReverseModel r = make_reverse_model(spec, cfg);
  const DenseNet em = init_dense_net({11, {64}, 6, Activation::tanh, Activation::identity, {}, {}}, 4);
  auto res = loop_a(r, em, random_targets(6, 3, 5), spec, cfg);
  EXPECT_TRUE(res.trace.empty());
  EXPECT_EQ(res.updates, 0u);
  EXPECT_TRUE(res.model.net == r.net);
}

TEST(LoopB, QueryAccounting) {
  const ProcessSpec spec = etch_spec();
  GroundTruthMachine machine = build_machine(spec, 2);
  MflConfig cfg;
  cfg.loop_b_iterations = 3;
  cfg.early_stop = false;
  const Matrix z = random_targets(6, 4, 8);
  auto res = loop_b(make_reverse_model(spec, cfg), machine, z, cfg);
  EXPECT_EQ(machine.evaluations(), 12u);
  ASSERT_EQ(res.trace.size(), 3u);
  EXPECT_EQ(res.trace[0].cumulative_queries, 4u);
  EXPECT_EQ(res.trace[2].cumulative_queries, 12u);
  for (const auto& row : res.trace) EXPECT_TRUE(row.updated);

  GroundTruthMachine m2 = build_machine(spec, 2);
  cfg.port = JacobianPort::finite_difference;
  loop_b(make_reverse_model(spec, cfg), m2, z, cfg);
  EXPECT_EQ(m2.evaluations(), 3u * 4u * (1u + 2u * 11u));
}

TEST(LoopB, EarlyStopOnInitialSuccess) {
  // Every output meets anywhere in [-1, 1]: the first pass already succeeds.
  const ProcessSpec spec = toy_linear_spec();
  MachineOptions mo;
  mo.linear = true;
  mo.gain = 0.1;
  GroundTruthMachine machine = build_machine(spec, 1, mo);
  MflConfig cfg;
  cfg.reverse_hidden = {};
  auto res = loop_b(make_reverse_model(spec, cfg), machine, random_targets(2, 4, 1), cfg);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_FALSE(res.trace[0].updated);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_EQ(res.iterations_to_meet, std::optional<std::size_t>(1));
  EXPECT_EQ(machine.evaluations(), 4u);
  EXPECT_TRUE(res.final_outputs.has_value());
}

TEST(LoopB, ExhaustedBudgetAddsOneCheckingPass) {
  const ProcessSpec spec = etch_spec();
  GroundTruthMachine machine = build_machine(spec, 2);
  MflConfig cfg;
  cfg.loop_b_iterations = 2;
  // Far-off targets cannot all meet in two small steps.
  Matrix z = Matrix::Constant(6, 3, 0.45);
  z.row(0).setConstant(-0.45);
  auto res = loop_b(make_reverse_model(spec, cfg), machine, z, cfg);
  if (!res.stopped_early) {
    EXPECT_EQ(res.trace.size(), 3u);
    EXPECT_FALSE(res.trace.back().updated);
    EXPECT_EQ(machine.evaluations(), 3u * 3u);
    EXPECT_EQ(res.updates, 2u);
  }
}

// Loss of a linear reverse model on a linear machine is quadratic in the
// parameters; gradient descent below 1/L must descend monotonically.
TEST(Descent, LinearToyWithinLipschitzBound) {
  const ProcessSpec spec = toy_linear_spec();
  MachineOptions mo;
  mo.linear = true;
  GroundTruthMachine machine = build_machine(spec, 4, mo);
  const Matrix a = machine.output_gain().asDiagonal() * machine.hidden_net().layers()[0].weight;
  const Matrix z = random_targets(2, 8, 21, 0.2);

  Matrix zh(3, z.cols());
  zh.topRows(2) = z;
  zh.row(2).setOnes();
  const Matrix cov = zh * zh.transpose() / static_cast<double>(z.cols());
  const double lip = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(a.transpose() * a).eigenvalues().maxCoeff() *
                     Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().maxCoeff();

  MflConfig cfg;
  cfg.reverse_hidden = {};
  cfg.reverse_output = Activation::identity;
  cfg.alpha1 = 0.5 / lip;
  cfg.alpha2 = 0.25 / lip;
  cfg.delta = std::numeric_limits<double>::infinity();
  cfg.early_stop = false;
  cfg.loop_b_iterations = 300;
  // Keep proposals inside the box, where the machine is exactly linear.
  ReverseModel r = make_reverse_model(spec, cfg);
  std::vector<Layer> layers = r.net.layers();
  layers[0].weight *= 0.1;
  r.net = DenseNet(layers);

  auto res = loop_b(r, machine, z, cfg);
  ASSERT_EQ(res.trace.size(), 300u);
  GroundTruthMachine probe = machine.replica();
  MachineModel f(probe);
  const double final_loss = reverse_loss(res.model, f, z);
  double grad_sq = 0.0;
  for (std::size_t t = 0; t < res.trace.size(); ++t) {
    const double next = t + 1 < res.trace.size() ? res.trace[t + 1].loss : final_loss;
    EXPECT_LE(next, res.trace[t].loss + 1e-8) << "t=" << t;
    EXPECT_EQ(res.trace[t].out_of_box, 0u);
    grad_sq += std::pow(res.trace[t].gradient_norm, 2);
  }
  const double alpha = cfg.alpha1;
  EXPECT_LE(grad_sq, (res.trace.front().loss - final_loss) / (alpha * (1 - alpha * lip / 2)) + 1e-8);
}

TEST(MflTrain, SkipLoopAEqualsZeroIterations) {
  const ProcessSpec spec = cvd_spec();
  EmulatorConfig ec;
  ec.epochs = 30;
  MflConfig cfg;
  cfg.loop_a_iterations = 50;
  cfg.loop_b_iterations = 5;
  cfg.early_stop = false;

  auto run = [&](const MflConfig& c, MflOptions opt) {
    GroundTruthMachine m = build_machine(spec, 7);
    const Dataset d = sample_dataset(m, 60, 0.0, 1);
    const TargetSet t = make_targets(m, 4, 0.5, 1);
    const std::size_t after_data = m.evaluations();
    auto out = mfl_train(d, m, t.targets, ec, c, opt);
    EXPECT_EQ(out.report.method_queries, m.evaluations() - after_data);
    return out;
  };
  MflConfig zero = cfg;
  zero.loop_a_iterations = 0;
  auto skipped = run(cfg, {true, false});
  auto zeroed = run(zero, {});
  EXPECT_TRUE(skipped.model.net == zeroed.model.net);
  EXPECT_EQ(skipped.report.final_loss, zeroed.report.final_loss);
  // Five updates (4 queries each) and a scoring pass.
  EXPECT_EQ(skipped.report.method_queries, 5u * 4u + 4u);
  EXPECT_EQ(skipped.report.scoring_queries, 4u);
  EXPECT_EQ(skipped.report.loop_b_updates, 5u);
  EXPECT_TRUE(verdicts_consistent(skipped.report));
}

TEST(MflTrain, EarlyStopReusesClosingPassForScoring) {
  const ProcessSpec spec = cvd_spec();
  EmulatorConfig ec;
  ec.epochs = 30;
  MflConfig cfg;
  cfg.loop_a_iterations = 10;
  cfg.loop_b_iterations = 2;
  GroundTruthMachine m = build_machine(spec, 7);
  const Dataset d = sample_dataset(m, 60, 0.0, 1);
  const TargetSet t = make_targets(m, 4, 0.5, 1);
  const std::size_t before = m.evaluations();
  auto out = mfl_train(d, m, t.targets, ec, cfg);
  EXPECT_EQ(out.report.scoring_queries, 0u);
  EXPECT_EQ(out.report.method_queries, m.evaluations() - before);
  EXPECT_EQ(out.report.method_queries, 4u * (out.report.loop_b_updates + 1));
  EXPECT_EQ(out.report.outcomes.size(), 4u);
  EXPECT_TRUE(verdicts_consistent(out.report));
}

TEST(MflTrain, SkipLoopBNeverTouchesMachineBeyondScoring) {
  const ProcessSpec spec = cvd_spec();
  EmulatorConfig ec;
  ec.epochs = 20;
  MflConfig cfg;
  cfg.loop_a_iterations = 20;
  GroundTruthMachine m = build_machine(spec, 7);
  const Dataset d = sample_dataset(m, 60, 0.0, 1);
  const TargetSet t = make_targets(m, 5, 0.5, 1);
  auto out = mfl_train(d, m, t.targets, ec, cfg, {false, true});
  EXPECT_EQ(out.report.method_queries, 5u);
  EXPECT_EQ(out.report.loop_b_updates, 0u);
  for (const auto& row : out.report.trace) EXPECT_EQ(row.loop, 'A');
}

TEST(ReverseModel, BoundedOutputStaysInBox) {
  const ProcessSpec spec = bonding_spec();
  MflConfig cfg;
  const ReverseModel r = make_reverse_model(spec, cfg);
  const Matrix x = r.propose(Matrix::Constant(spec.output_count(), 3, 50.0));
  EXPECT_LE(x.cwiseAbs().maxCoeff(), 1.0);
}
