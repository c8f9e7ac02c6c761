#pragma once

#include <cmath>
#include <cstdint>

namespace comic {

// Counter-based deterministic RNG. Streams are derived by folding ids into
// the seed (splitmix64 finalizer), so any (seed, epoch, batch, op) tuple
// names a reproducible stream independent of draw order elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static std::uint64_t fold(std::uint64_t seed, std::uint64_t id) {
    return mix(seed + 0x9e3779b97f4a7c15ull * (id + 1));
  }

  Rng derive(std::uint64_t id) const { return Rng(fold(state_, id)); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard normal, Box-Muller (one value per call, no caching so that
  // streams stay stateless beyond the counter)
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // multiply-shift; bias is negligible for n << 2^64
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace comic
