#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rfn {

// Portable deterministic stream: splitmix64 seeding into xorshift64*.
//
//   seed:  z = seed + 0x9E3779B97F4A7C15; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//          z = (z ^ (z >> 27)) * 0x94D049BB133111EB; state = z ^ (z >> 31)  (0 -> 1)
//   next:  x ^= x >> 12; x ^= x << 25; x ^= x >> 27; return x * 0x2545F4914F6CDD1D
//   uniform(): top 53 bits of next() times 2^-53, in [0, 1)
//
// Any implementation of these constants reproduces datasets and initializations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {
    if (state_ == 0) state_ = 1;
  }

  static std::uint64_t mix(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  // Box-Muller; one draw per call (the second variate is discarded).
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Normal(0, stddev) redrawn until within +-2 stddev.
  double truncated_normal(double stddev) {
    double v;
    do {
      v = normal();
    } while (std::abs(v) > 2.0);
    return v * stddev;
  }

 private:
  std::uint64_t state_;
};

}  // namespace rfn
