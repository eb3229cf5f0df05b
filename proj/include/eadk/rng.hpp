#pragma once

#include <cmath>
#include <cstdint>

namespace eadk {

// Deterministic RNG with hand-rolled distributions. std::*_distribution output
// is implementation-defined, which would break byte-identical artifacts across
// platforms; everything here is pinned to one fixed bit stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed)) {}

  uint64_t next() {
    // xorshift64* on a splitmix-seeded state
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n)) % n;
  }

  // standard normal via Box-Muller (no cached spare; two draws per call)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  // stable derivation of per-stream seeds from (seed, index, ...)
  static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return splitmix(splitmix(seed ^ (a * 0x9E3779B97F4A7C15ULL)) ^ b);
  }

 private:
  uint64_t state_;
};

}  // namespace eadk
