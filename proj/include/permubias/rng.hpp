#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace permubias {

// Deterministic random source. All distributions are implemented by hand on
// top of mt19937_64 so that a given seed produces the same stream everywhere;
// std::*_distribution output is implementation-defined and would not be.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; two uniforms consumed per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, bound), unbiased via rejection.
  uint64_t below(uint64_t bound) {
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const uint64_t r = gen_();
      if (r >= threshold) return r % bound;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  std::vector<T> normal_vec(size_t n, double stddev) {
    std::vector<T> out(n);
    for (auto& v : out) v = static_cast<T>(normal() * stddev);
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

// SplitMix64 step; used to derive per-instance seeds from a run seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace permubias
