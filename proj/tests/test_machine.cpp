#include <gtest/gtest.h>

#include <cmath>

#include "mfl/machine.hpp"
#include "oracles.hpp"

using namespace mfl;

namespace {

Vector sample_std(const std::vector<Vector>& v) {
  Vector mean = Vector::Zero(v.front().size());
  for (const auto& x : v) mean += x;
  mean /= static_cast<double>(v.size());
  Vector var = Vector::Zero(mean.size());
  for (const auto& x : v) var += (x - mean).cwiseAbs2();
  return (var / static_cast<double>(v.size() - 1)).cwiseSqrt();
}

}  // namespace

TEST(Machine, CalibrationIdentityAtMidpoint) {
  for (const auto& name : builtin_scenarios()) {
    const auto spec = builtin_spec(name);
    for (std::uint64_t seed : {0u, 1u, 17u}) {
      auto m = build_machine(spec, seed);
      const Vector z = m.evaluate(spec.midpoint());
      for (Eigen::Index k = 0; k < z.size(); ++k) EXPECT_EQ(z[k], spec.reference_point[k]) << name;
      EXPECT_TRUE(meets_all(z, spec));
    }
  }
}

TEST(Machine, CustomCalibration) {
  const auto spec = etch_spec();
  const Vector c{{2300, 140, 420, 195, -5, 205}};
  auto m = build_machine(spec, 3, c);
  EXPECT_EQ(m.evaluate(spec.midpoint()), c);
  EXPECT_EQ(m.evaluations(), 1u);
}

TEST(Machine, RejectsInfeasibleCalibration) {
  EXPECT_THROW(build_machine(etch_spec(), 0, Vector::Zero(6)), ConfigError);
  EXPECT_THROW(build_machine(etch_spec(), 0, Vector::Zero(3)), DimensionError);
  MachineOptions bad;
  bad.gain = 0.0;
  EXPECT_THROW(build_machine(etch_spec(), 0, bad), ConfigError);
}

TEST(Machine, SameSeedSameMachine) {
  const auto spec = etch_spec();
  auto a = build_machine(spec, 42), b = build_machine(spec, 42), c = build_machine(spec, 43);
  Rng rng(5);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const Vector x = denormalize_input(sample_normalized_input(11, rng), spec);
    const Vector za = a.evaluate(x);
    EXPECT_EQ(za, b.evaluate(x));
    differs = differs || za != c.evaluate(x);
  }
  EXPECT_TRUE(differs);
}

TEST(Machine, RepeatEvaluationAndCounter) {
  const auto spec = cvd_spec();
  auto m = build_machine(spec, 1);
  const Vector x = 0.3 * spec.lower_bounds() + 0.7 * spec.upper_bounds();
  const auto before = m.evaluations();
  EXPECT_EQ(m.evaluate(x), m.evaluate(x));
  EXPECT_EQ(m.evaluations(), before + 2);
  EXPECT_EQ(m.clipped_evaluations(), 0u);
}

TEST(Machine, ClipsAndCounts) {
  const auto spec = bonding_spec();
  auto m = build_machine(spec, 2);
  Vector x = spec.upper_bounds();
  x[0] += 1000.0;
  EXPECT_EQ(m.evaluate(x), m.evaluate(spec.upper_bounds()));
  EXPECT_EQ(m.clipped_evaluations(), 1u);
  Vector bad = spec.midpoint();
  bad[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(m.evaluate(bad), NumericError);
  EXPECT_THROW(m.evaluate(Vector::Zero(2)), DimensionError);
}

TEST(Machine, OutputNoiseStatistics) {
  const auto spec = etch_spec();
  MachineOptions opt;
  opt.output_noise = 0.01;
  auto m = build_machine(spec, 4, opt);
  const Vector x = 0.4 * spec.lower_bounds() + 0.6 * spec.upper_bounds();
  std::vector<Vector> zs;
  for (int i = 0; i < 1000; ++i) zs.push_back(m.evaluate(x));
  const Vector sd = sample_std(zs);
  const Vector expect = 0.01 * output_half_range(spec);
  for (Eigen::Index k = 0; k < sd.size(); ++k) {
    EXPECT_GT(sd[k], 0.8 * expect[k]) << k;
    EXPECT_LT(sd[k], 1.2 * expect[k]) << k;
  }
  EXPECT_EQ(m.evaluations(), 1000u);
}

TEST(Machine, GainSetsOutputSpread) {
  const auto spec = etch_spec();
  MachineOptions opt;
  opt.gain = 0.7;
  auto m = build_machine(spec, 8, opt);
  Rng rng(99);
  std::vector<Vector> zs;
  for (int i = 0; i < 4000; ++i) zs.push_back(m.evaluate_normalized(sample_normalized_input(11, rng)));
  const Vector sd = sample_std(zs);
  for (Eigen::Index k = 0; k < sd.size(); ++k) EXPECT_NEAR(sd[k], 0.7, 0.07) << k;
}

TEST(Machine, JacobianPortIsExactAndFree) {
  const auto spec = etch_spec();
  auto m = build_machine(spec, 6);
  auto replica = m.replica();
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const Vector u = 0.8 * sample_normalized_input(11, rng);
    const Matrix j = m.jacobian_normalized(u);
    const Matrix fd =
        oracle::fd_jacobian([&](const Vector& v) { return replica.evaluate_normalized(v); }, u, 1e-5);
    for (Eigen::Index k = 0; k < j.size(); ++k) EXPECT_LE(oracle::rel_err(j.data()[k], fd.data()[k]), 1e-5);
  }
  EXPECT_EQ(m.evaluations(), 0u);
  Vector outside = Vector::Zero(11);
  outside[2] = 1.5;
  EXPECT_EQ(m.jacobian_normalized(outside).col(2).norm(), 0.0);
}

TEST(Machine, LinearVariantHasConstantJacobian) {
  MachineOptions opt;
  opt.linear = true;
  const auto m = build_machine(toy_linear_spec(), 1, opt);
  EXPECT_EQ(m.hidden_net().layer_count(), 1u);
  EXPECT_TRUE(m.jacobian_normalized(Vector::Zero(3)).isApprox(m.jacobian_normalized(Vector::Constant(3, 0.5))));
}

TEST(Dataset, WithinBoundsAndDeterministic) {
  const auto spec = etch_spec();
  auto m = build_machine(spec, 0);
  const auto d = sample_dataset(m, 500, 0.0, 11);
  ASSERT_EQ(d.size(), 500u);
  EXPECT_EQ(m.evaluations(), 500u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(within_bounds(d.inputs[i], spec));
    EXPECT_EQ(d.applied_noise[i].norm(), 0.0);
  }
  auto m2 = build_machine(spec, 0);
  const auto d2 = sample_dataset(m2, 500, 0.0, 11);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.inputs[i], d2.inputs[i]);
    EXPECT_EQ(d.outputs[i], d2.outputs[i]);
  }
  EXPECT_THROW(sample_dataset(m, 0, 0.0, 1), ConfigError);
}

TEST(Dataset, OutputsAreMachineEvaluations) {
  const auto spec = bonding_spec();
  auto m = build_machine(spec, 5);
  auto replica = m.replica();
  const auto d = sample_dataset(m, 50, 0.02, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector u = normalize_input(d.inputs[i], spec) + d.applied_noise[i];
    EXPECT_TRUE(d.outputs[i].isApprox(denormalize_output(replica.evaluate_normalized(u), spec), 1e-12));
  }
}

TEST(Dataset, SampleMeanNearMidpoint) {
  const auto spec = etch_spec();
  auto m = build_machine(spec, 0);
  const auto d = sample_dataset(m, 5000, 0.0, 21);
  Vector mean = Vector::Zero(11);
  for (const auto& x : d.inputs) mean += x;
  mean /= 5000.0;
  const Vector range = spec.upper_bounds() - spec.lower_bounds();
  EXPECT_LE(((mean - spec.midpoint()).array() / range.array()).abs().maxCoeff(), 0.05);
}

TEST(Targets, AchievableWithinBandAndFree) {
  for (const auto& name : builtin_scenarios()) {
    const auto spec = builtin_spec(name);
    MachineOptions opt;
    opt.linear = name == "toy-linear";
    auto m = build_machine(spec, 2, opt);
    const auto t = make_targets(m, 16, 0.5, 7);
    ASSERT_EQ(t.size(), 16u);
    EXPECT_EQ(m.evaluations(), 0u);
    for (const auto& z : t.targets) {
      EXPECT_TRUE(meets_all(z, spec)) << name;
      EXPECT_LE(normalize_output(z, spec).cwiseAbs().maxCoeff(), 0.5 + 1e-12);
    }
  }
  auto m = build_machine(etch_spec(), 2);
  EXPECT_THROW(make_targets(m, 0, 0.5, 1), ConfigError);
  EXPECT_THROW(make_targets(m, 4, 1.5, 1), ConfigError);
}

TEST(Targets, PerturbationClipsIntoBand) {
  const auto spec = etch_spec();
  auto m = build_machine(spec, 2);
  const auto base = make_targets(m, 16, 0.5, 7);
  const auto same = perturb_targets(base, spec, 0.0, 0.0, 0.5, 1);
  EXPECT_EQ(same.clipped_coordinates, 0u);
  for (std::size_t j = 0; j < base.size(); ++j) EXPECT_TRUE(same.targets[j].isApprox(base.targets[j], 1e-12));

  const auto shifted = perturb_targets(base, spec, 0.0, 5.0, 0.5, 1);
  EXPECT_EQ(shifted.clipped_coordinates, 16u * 6);
  for (const auto& z : shifted.targets) {
    EXPECT_TRUE(meets_all(z, spec));
    EXPECT_TRUE(normalize_output(z, spec).isApprox(Vector::Constant(6, 0.5), 1e-12));
  }
  const auto noisy = perturb_targets(base, spec, 100.0, 0.0, 0.5, 1);
  for (const auto& z : noisy.targets) EXPECT_TRUE(meets_all(z, spec));
  EXPECT_GT(noisy.clipped_coordinates, 0u);
}
