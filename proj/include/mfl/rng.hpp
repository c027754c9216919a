#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace mfl {

using Rng = std::mt19937_64;

// splitmix64 finalizer; maps (seed, stream) to a decorrelated child seed so
// every consumer (data, targets, init, noise) owns an independent stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream ids used by the library. Keep them stable: changing one changes
// every seeded result.
namespace stream {
inline constexpr std::uint64_t machine_net = 1;
inline constexpr std::uint64_t machine_probe = 2;
inline constexpr std::uint64_t machine_noise = 3;
inline constexpr std::uint64_t dataset = 4;
inline constexpr std::uint64_t targets = 5;
inline constexpr std::uint64_t emulator_init = 6;
inline constexpr std::uint64_t emulator_split = 7;
inline constexpr std::uint64_t emulator_noise = 8;
inline constexpr std::uint64_t reverse_init = 9;
inline constexpr std::uint64_t baseline = 10;
inline constexpr std::uint64_t perturbation = 11;
inline constexpr std::uint64_t supervised = 12;
}  // namespace stream

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace mfl
