#pragma once

// Synthetic ground-truth machines standing in for real process equipment,
// plus emulator datasets and achievable target sets drawn from them.
//
// A machine is a seeded tanh network acting on normalized inputs, followed
// by a per-output affine calibration that pins the output at the bounds
// midpoint to a chosen calibration vector. The per-output gain is fixed so
// that outputs have a given normalized std over the dataset sampling
// distribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/nn.hpp"
#include "mfl/process.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct MachineOptions {
  int hidden_width = 32;
  int hidden_layers = 2;
  bool linear = false;      // single identity layer (toy scenarios)
  double gain = 1.0;        // normalized output std over the sampling distribution
  double output_noise = 0.0;  // Gaussian std, normalized output units
  double input_noise = 0.0;   // Gaussian std, normalized input units
};

// Std of the truncated Gaussian used for dataset/target/probe sampling,
// in normalized input units (a quarter of the physical range).
inline constexpr double kSamplingStd = 0.5;

inline Vector sample_normalized_input(Eigen::Index n, Rng& rng) {
  Vector u = gaussian_vector(n, kSamplingStd, rng);
  return u.cwiseMax(-1.0).cwiseMin(1.0);
}

class GroundTruthMachine {
 public:
  const ProcessSpec& spec() const noexcept { return spec_; }
  const DenseNet& hidden_net() const noexcept { return hidden_; }
  const Vector& calibration() const noexcept { return calibration_; }
  const Vector& output_gain() const noexcept { return gain_; }
  const MachineOptions& options() const noexcept { return options_; }

  std::size_t evaluations() const noexcept { return evaluations_; }
  // Evaluations whose input had to be clipped into the box.
  std::size_t clipped_evaluations() const noexcept { return clipped_; }

  // x in physical units; clipped into the spec box before use.
  Vector evaluate(const Vector& x) {
    if (x.size() != spec_.input_count()) throw DimensionError("machine input dimension mismatch");
    if (!x.allFinite()) throw NumericError("non-finite machine input");
    const Vector delta = respond(normalize_input(x, spec_));
    return calibration_ + half_range_.cwiseProduct(delta);
  }

  // Same as evaluate, with normalized inputs and outputs.
  Vector evaluate_normalized(const Vector& u) {
    if (u.size() != spec_.input_count()) throw DimensionError("machine input dimension mismatch");
    if (!u.allFinite()) throw NumericError("non-finite machine input");
    return calibration_normalized_ + respond(u);
  }

  // Differentiation port: exact d(normalized output)/d(normalized input) of
  // the noise-free response. Does not count as an evaluation. Clipped
  // coordinates have zero derivative.
  Matrix jacobian_normalized(const Vector& u) const {
    if (u.size() != spec_.input_count()) throw DimensionError("machine input dimension mismatch");
    if (!u.allFinite()) throw NumericError("non-finite machine input");
    const Vector uc = u.cwiseMax(-1.0).cwiseMin(1.0);
    Matrix j = gain_.asDiagonal() * jacobian_input(hidden_, uc);
    for (Eigen::Index i = 0; i < u.size(); ++i)
      if (u[i] < -1.0 || u[i] > 1.0) j.col(i).setZero();
    return j;
  }

  // Noise-free copy with fresh counters; used to draw goals without touching
  // this machine's query budget.
  GroundTruthMachine replica() const {
    GroundTruthMachine m = *this;
    m.options_.input_noise = 0.0;
    m.options_.output_noise = 0.0;
    m.evaluations_ = 0;
    m.clipped_ = 0;
    return m;
  }

  // Switch process noise on or off (ablation / robustness runs).
  void set_noise(double input_noise, double output_noise) {
    if (!(input_noise >= 0.0) || !(output_noise >= 0.0))
      throw ConfigError("noise std must be >= 0");
    options_.input_noise = input_noise;
    options_.output_noise = output_noise;
  }

 private:
  friend GroundTruthMachine build_machine(const ProcessSpec&, std::uint64_t, const Vector&,
                                          const MachineOptions&);
  GroundTruthMachine() = default;

  // Normalized output offset from the calibration point, with noise.
  Vector respond(const Vector& u) {
    ++evaluations_;
    Vector uc = u.cwiseMax(-1.0).cwiseMin(1.0);
    if (uc != u) ++clipped_;
    if (options_.input_noise > 0.0)
      uc = (uc + gaussian_vector(uc.size(), options_.input_noise, noise_rng_))
               .cwiseMax(-1.0)
               .cwiseMin(1.0);
    Vector delta = gain_.cwiseProduct(forward(hidden_, uc) - hidden_at_mid_);
    if (options_.output_noise > 0.0)
      delta += gaussian_vector(delta.size(), options_.output_noise, noise_rng_);
    return delta;
  }

  ProcessSpec spec_;
  DenseNet hidden_;
  MachineOptions options_;
  Vector calibration_;
  Vector calibration_normalized_;
  Vector half_range_;
  Vector gain_;
  Vector hidden_at_mid_;
  Rng noise_rng_;
  std::size_t evaluations_ = 0;
  std::size_t clipped_ = 0;
};

inline GroundTruthMachine build_machine(const ProcessSpec& spec, std::uint64_t seed,
                                        const Vector& calibration,
                                        const MachineOptions& options = {}) {
  spec.validate();
  if (calibration.size() != spec.output_count())
    throw DimensionError("calibration vector has wrong length");
  for (Eigen::Index k = 0; k < calibration.size(); ++k)
    if (spec.outputs[k].rule.classify(calibration[k]) != Verdict::meets)
      throw ConfigError("calibration value " + std::to_string(calibration[k]) + " for '" +
                        spec.outputs[k].name + "' violates its meets rule");
  if (!(options.gain > 0.0)) throw ConfigError("machine gain must be > 0");
  if (options.hidden_width <= 0 || options.hidden_layers < 0)
    throw ConfigError("machine hidden shape must be positive");

  GroundTruthMachine m;
  m.spec_ = spec;
  m.options_ = options;
  m.set_noise(options.input_noise, options.output_noise);
  NetShape shape{spec.input_count(), {}, spec.output_count(), Activation::tanh, Activation::identity, {}, {}};
  if (!options.linear) shape.hidden.assign(static_cast<std::size_t>(options.hidden_layers), options.hidden_width);
  m.hidden_ = init_dense_net(shape, derive_seed(seed, stream::machine_net));
  m.hidden_at_mid_ = forward(m.hidden_, normalize_input(spec.midpoint(), spec));

  Rng probe_rng(derive_seed(seed, stream::machine_probe));
  constexpr int kProbes = 512;
  Matrix probe(spec.input_count(), kProbes);
  for (int i = 0; i < kProbes; ++i) probe.col(i) = sample_normalized_input(spec.input_count(), probe_rng);
  const Matrix resp = forward_batch(m.hidden_, probe).colwise() - m.hidden_at_mid_;
  const Vector mean = resp.rowwise().mean();
  const Vector stddev =
      ((resp.colwise() - mean).array().square().rowwise().sum() / (kProbes - 1)).sqrt().matrix();
  if (!(stddev.array() > 0.0).all()) throw NumericError("machine response is constant in an output");
  m.gain_ = (options.gain / stddev.array()).matrix();

  m.calibration_ = calibration;
  m.calibration_normalized_ = normalize_output(calibration, spec);
  m.half_range_ = output_half_range(spec);
  m.noise_rng_.seed(derive_seed(seed, stream::machine_noise));
  return m;
}

// Machine built from the spec's reference point.
inline GroundTruthMachine build_machine(const ProcessSpec& spec, std::uint64_t seed,
                                        const MachineOptions& options = {}) {
  if (spec.reference_point.empty()) throw ConfigError(spec.name + ": spec has no reference point");
  return build_machine(spec, seed, spec.reference(), options);
}

// Emulator training pairs in physical units.
struct Dataset {
  std::vector<Vector> inputs;
  std::vector<Vector> outputs;
  // Normalized input perturbation the machine actually saw (zero when off).
  std::vector<Vector> applied_noise;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

// x_i: truncated Gaussians around the bounds midpoint (std = quarter range,
// clipped to the box); z_i = machine(x_i + noise_i).
inline Dataset sample_dataset(GroundTruthMachine& machine, std::size_t n, double input_noise_std,
                              std::uint64_t seed) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  if (!(input_noise_std >= 0.0)) throw ConfigError("dataset input noise must be >= 0");
  const auto& spec = machine.spec();
  Rng rng(derive_seed(seed, stream::dataset));
  Dataset d;
  d.inputs.reserve(n);
  d.outputs.reserve(n);
  d.applied_noise.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = sample_normalized_input(spec.input_count(), rng);
    const Vector e = input_noise_std > 0.0 ? gaussian_vector(u.size(), input_noise_std, rng)
                                           : Vector::Zero(u.size());
    d.inputs.push_back(denormalize_input(u, spec));
    d.outputs.push_back(denormalize_output(machine.evaluate_normalized(u + e), spec));
    d.applied_noise.push_back(e);
  }
  return d;
}

// Goals in physical units. Each satisfies every meets rule.
struct TargetSet {
  std::vector<Vector> targets;
  // Coordinates clipped back into the target band by a perturbation.
  std::size_t clipped_coordinates = 0;

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }
};

inline std::vector<Vector> normalize_targets(const TargetSet& t, const ProcessSpec& spec) {
  std::vector<Vector> out;
  out.reserve(t.size());
  for (const auto& z : t.targets) out.push_back(normalize_output(z, spec));
  return out;
}

// Achievable targets: outputs of a noise-free replica at sampled recipes,
// kept when every normalized output lies within +-band (the central part
// of each meets range). The source machine's counter is untouched.
inline TargetSet make_targets(const GroundTruthMachine& machine, std::size_t count, double band,
                              std::uint64_t seed, std::size_t max_attempts = 1'000'000) {
  if (count < 1) throw ConfigError("target count must be >= 1");
  if (!(band > 0.0 && band <= 1.0)) throw ConfigError("target band must be in (0, 1]");
  GroundTruthMachine replica = machine.replica();
  const auto& spec = replica.spec();
  Rng rng(derive_seed(seed, stream::targets));
  TargetSet set;
  for (std::size_t attempt = 0; attempt < max_attempts && set.size() < count; ++attempt) {
    const Vector u = sample_normalized_input(spec.input_count(), rng);
    const Vector zn = replica.evaluate_normalized(u);
    if (zn.cwiseAbs().maxCoeff() > band) continue;
    const Vector z = denormalize_output(zn, spec);
    if (!meets_all(z, spec)) continue;
    set.targets.push_back(z);
  }
  if (set.size() < count)
    throw ConfigError("could not draw " + std::to_string(count) + " achievable targets within band " +
                      std::to_string(band));
  return set;
}

// Shift every coordinate by `shift` and add N(0, noise_std^2), both in
// normalized output units, then clip into +-band so each target still meets.
inline TargetSet perturb_targets(const TargetSet& base, const ProcessSpec& spec, double noise_std,
                                 double shift, double band, std::uint64_t seed) {
  if (!(noise_std >= 0.0) || !std::isfinite(shift)) throw ConfigError("invalid perturbation");
  if (!(band > 0.0 && band <= 1.0)) throw ConfigError("target band must be in (0, 1]");
  Rng rng(derive_seed(seed, stream::perturbation));
  TargetSet out;
  for (const auto& z : base.targets) {
    Vector zn = normalize_output(z, spec);
    zn.array() += shift;
    if (noise_std > 0.0) zn += gaussian_vector(zn.size(), noise_std, rng);
    for (Eigen::Index k = 0; k < zn.size(); ++k) {
      const double c = std::clamp(zn[k], -band, band);
      if (c != zn[k]) ++out.clipped_coordinates;
      zn[k] = c;
    }
    out.targets.push_back(denormalize_output(zn, spec));
  }
  return out;
}

}  // namespace mfl
