#pragma once

#include <cstdint>
#include <random>

namespace tvcov {

//! SplitMix64 finaliser; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seedable generator with named substreams. Rng(seed).split(k) is a fixed
/// function of (seed, k), so replication k draws the same numbers whatever the
/// order or thread it runs on.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  Rng split(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL))); }

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * unit_(engine_); }
  //! Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace tvcov
