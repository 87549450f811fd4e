#pragma once

#include <cstdint>
#include <random>

namespace mfd {

// Deterministic random source. All distributions are derived from raw
// mt19937_64 output here rather than through std::*_distribution, so a
// given seed produces the same stream on every standard library.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n > 0, via rejection.
  int64_t uniform_int(int64_t n) {
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<int64_t>(x % un);
  }

  // Standard normal via Box-Muller (cosine branch only).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Normal(0, std) truncated to [-bound*std, bound*std] by resampling.
  double trunc_normal(double stddev, double bound = 2.0) {
    double z = normal();
    while (z < -bound || z > bound) z = normal();
    return z * stddev;
  }

  // Independent child stream; splitmix64 of (seed, stream) keeps forks
  // decorrelated from the parent sequence.
  Rng fork(uint64_t stream) const {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

private:
  std::mt19937_64 gen_;
  uint64_t seed_;
};

}  // namespace mfd
