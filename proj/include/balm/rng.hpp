#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace balm {

// Self-contained SplitMix64 generator. We avoid <random> distributions because
// their output is implementation-defined; seeded runs must replay identically.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  bool bernoulli(double p) { return uniform() < p; }

  float normal(float mean, float stddev) {
    // Box-Muller; the spare value is not cached so the stream stays positional.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * static_cast<float>(mag * std::cos(6.283185307179586 * u2));
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream; used to split one user seed across purposes
  // (init, masking, shuffling) without correlated draws.
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0x2545f4914f6cdd1dULL * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace balm
