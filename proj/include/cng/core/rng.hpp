#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cng {

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Deterministic random stream. Identical seeds give bit-identical draws;
// `derive` forks an independent labeled sub-stream without consuming draws
// from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng derive(std::string_view label) const { return Rng(splitmix64(seed_ ^ fnv1a64(label))); }
  Rng derive(std::uint64_t index) const { return Rng(splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Standard Gumbel(0, 1).
  double gumbel();
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace cng
