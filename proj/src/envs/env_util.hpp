#pragma once

#include <algorithm>
#include <cmath>

#include "m3fc/rng.hpp"

namespace m3fc::envdetail {

// Substream tag for environment-global events (targets, area spawns); agent
// substreams are tagged by their 32-bit ids, so this cannot collide.
inline constexpr uint64_t kGlobalTag = uint64_t(1) << 33;

// Velocity from a raw action: clamp components into [-1,1], then scale by
// v_max / max(1, ||u||).
inline void action_velocity(const double* u, int dim, double v_max,
                            double* vel) {
  double norm2 = 0.0;
  for (int j = 0; j < dim; ++j) {
    vel[j] = std::clamp(u[j], -1.0, 1.0);
    norm2 += vel[j] * vel[j];
  }
  double scale = v_max / std::max(1.0, std::sqrt(norm2));
  for (int j = 0; j < dim; ++j) vel[j] *= scale;
}

inline double wrap_torus(double x, double lo, double hi) {
  double len = hi - lo;
  double y = std::fmod(x - lo, len);
  if (y < 0) y += len;
  return lo + y;
}

inline double torus_dist(double a, double b, double len) {
  double d = std::abs(a - b);
  return std::min(d, len - d);
}

}  // namespace m3fc::envdetail
