#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace xtalgen {

// splitmix64 finalizer. Stream splitting: child seed = mix(parent ^ mix(stream)).
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random stream. Every draw is computed from raw 64-bit engine
// output so results do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on [0, 1] (both endpoints reachable).
  double uniform_closed() {
    return static_cast<double>(engine_() >> 11) / static_cast<double>((1ULL << 53) - 1);
  }
  double normal();
  std::size_t uniform_index(std::size_t n);
  // Draws an index with probability proportional to weights (need not be normalized).
  std::size_t categorical(std::span<const double> weights);

  Rng split(std::uint64_t stream) { return Rng(derive_seed(next_u64(), stream)); }

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace xtalgen
