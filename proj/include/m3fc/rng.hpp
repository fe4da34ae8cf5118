#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace m3fc {

// Counter-based generator: output n is a hash of (key, n), so a stream can be
// forked into independent substreams by deriving new keys instead of jumping
// state. Every simulation stream in the project is derived from (seed,
// episode index, purpose tag, step, agent id), which makes trajectories
// reproducible no matter how episodes are distributed across workers.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng() : key_(0) {}
  explicit Rng(uint64_t seed) : key_(mix64(seed)) {}

  // Child stream; independent of this stream's position.
  Rng fork(uint64_t tag) const {
    Rng child;
    child.key_ = mix64(key_ ^ mix64(tag ^ 0x632be59bd9b4e019ULL));
    return child;
  }
  Rng fork2(uint64_t a, uint64_t b) const { return fork(a).fork(b); }

  uint64_t next_u64() { return mix64(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL); }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased enough for n << 2^64; avoids modulo artifacts.
  int uniform_int(int n) {
    return int((unsigned __int128)(next_u64()) * (unsigned __int128)(n) >> 64);
  }

  // Box-Muller, fixed consumption of two uniforms per draw.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Knuth's product method; fine for the small rates used here.
  int poisson(double lambda) {
    double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Index draw from an unnormalized nonnegative weight row.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return int(i);
    }
    return int(weights.size()) - 1;
  }

 private:
  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace m3fc
