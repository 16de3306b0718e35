#pragma once

#include <array>
#include <cstdint>

namespace physguide {

/// splitmix64 step; used for seeding and for deriving child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent seed from a parent seed and a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/**
 * Portable generator pinned for cross-implementation reproducibility.
 *
 * Bits come from xoshiro256** seeded by four splitmix64 outputs. Uniform
 * doubles take the top 53 bits. Normals use the Box-Muller transform and
 * cache the second variate. None of this goes through <random>
 * distributions, whose output is implementation-defined.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace physguide
