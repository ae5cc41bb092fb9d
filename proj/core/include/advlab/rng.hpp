#pragma once

#include <cstdint>
#include <random>

namespace advlab {

/// Deterministic random source with cheap independent substreams.
///
/// The generator is std::mt19937_64 seeded through a splitmix64 finalizer;
/// uniform doubles are produced by the 53-bit shift conversion rather than
/// std distributions, so the draw sequence for a given seed is identical on
/// every platform. derive() keys a child off the construction seed (not the
/// evolving state), which lets attack phases, transform draws and sampling
/// loops own streams that cannot perturb each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n must be positive.
  int uniform_int(int n);
  bool bernoulli(double p);

  /// Independent child stream; deterministic in (seed, stream).
  Rng derive(std::uint64_t stream) const;

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace advlab
