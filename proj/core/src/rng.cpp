#include "advlab/rng.hpp"

#include <stdexcept>

namespace advlab {

namespace {

// splitmix64 finalizer (Vigna); full-avalanche 64-bit mix.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  // multiply-shift; bias is < n / 2^64, immaterial for the small n used here
  return static_cast<int>((static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

Rng Rng::derive(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

}  // namespace advlab
