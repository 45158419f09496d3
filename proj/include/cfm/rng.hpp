#pragma once

#include <cstdint>
#include <random>

namespace cfm {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; uniform and normal variates are derived
// here rather than through <random> distributions, whose algorithms vary
// between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream keyed by `stream`.
  Rng split(std::uint64_t stream) const { return Rng(seed_, mix(stream_ + 0x9e3779b97f4a7c15ULL * (stream + 1))); }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace cfm
