#pragma once

#include <cmath>

#include "m3fc/measures.hpp"

// 3-cell cyclic world used for exact dynamic-programming cross-checks: both
// the minor shift and the bar move deterministically, the attraction target
// is pinned to cell 0, and the reward trades bar-to-target distance against
// crowd proximity and congestion. Deterministic transitions keep exact
// mean-field trajectories on any simplex lattice.
namespace m3fc::toy3core {

inline constexpr int kStates = 3;
inline constexpr int kActions = 3;  // shift by action - 1
inline constexpr int kTarget = 0;
inline constexpr int kInitBar = 1;
inline constexpr double kInitMf[kStates] = {0.4, 0.3, 0.3};

inline int wrap(int v) { return ((v % kStates) + kStates) % kStates; }
inline int shift(int x, int action) { return wrap(x + action - 1); }

inline int dist(int a, int b) {
  int d = std::abs(a - b);
  return std::min(d, kStates - d);
}

inline double reward(int bar, const FiniteMF& mu) {
  double crowd = 0.0, spread = 0.0;
  for (int c = 0; c < kStates; ++c) {
    crowd += mu[c] * dist(c, bar);
    spread += mu[c] * mu[c];
  }
  return -0.5 * dist(bar, kTarget) - 2.5 * crowd - 6.25 * spread;
}

}  // namespace m3fc::toy3core
