#pragma once

#include <cmath>
#include <cstdlib>

#include "m3fc/measures.hpp"

// Torus grid world shared by the agent-level environment and the exact
// kernel model: 5x5 cyclic grid, actions {stay, -x, -y, +x, +y}, a bar that
// the major agent steers and a target doing a lazy random walk.
namespace m3fc::beachcore {

inline constexpr int kSide = 5;
inline constexpr int kStates = kSide * kSide;
inline constexpr int kActions = 5;
inline constexpr int kDx[kActions] = {0, -1, 0, 1, 0};
inline constexpr int kDy[kActions] = {0, 0, -1, 0, 1};
inline constexpr double kMoveProb = 0.2;  // target random-walk rate

inline int cell(int x, int y) { return x * kSide + y; }
inline int cell_x(int c) { return c / kSide; }
inline int cell_y(int c) { return c % kSide; }

inline int wrap(int v) { return ((v % kSide) + kSide) % kSide; }

inline int axis_dist(int a, int b) {
  int d = std::abs(a - b);
  return std::min(d, kSide - d);
}

// toroidal L1
inline int dist(int cx, int cy, int ox, int oy) {
  return axis_dist(cx, ox) + axis_dist(cy, oy);
}

inline int step_cell(int c, int action) {
  return cell(wrap(cell_x(c) + kDx[action]), wrap(cell_y(c) + kDy[action]));
}

// proximity-to-bar and crowding penalties against the minor mean field
inline double reward(int bar, int target, const FiniteMF& mu) {
  double crowd = 0.0, spread = 0.0;
  for (int c = 0; c < kStates; ++c) {
    crowd += mu[c] * dist(cell_x(c), cell_y(c), cell_x(bar), cell_y(bar));
    spread += mu[c] * mu[c];
  }
  return -0.5 * dist(cell_x(bar), cell_y(bar), cell_x(target), cell_y(target)) -
         2.5 * crowd - 6.25 * spread;
}

// target transition: stay with 0.8, each cardinal direction with 0.05
inline void target_row(int target, double* out /* kStates */) {
  for (int c = 0; c < kStates; ++c) out[c] = 0.0;
  out[target] += 1.0 - kMoveProb;
  for (int a = 1; a < kActions; ++a)
    out[step_cell(target, a)] += kMoveProb / 4.0;
}

}  // namespace m3fc::beachcore
