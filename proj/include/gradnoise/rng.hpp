#pragma once

#include <array>
#include <cstdint>

namespace gradnoise {

// Deterministic generator: xoshiro256** seeded through splitmix64, with
// Box-Muller Gaussian sampling. The stream depends only on the seed, so a
// run is reproducible bit-for-bit on one build.
//
// Not thread-safe. Each run owns one instance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double gaussian(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  /// Seed for an independent child stream; pure function of (seed, stream).
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gradnoise
