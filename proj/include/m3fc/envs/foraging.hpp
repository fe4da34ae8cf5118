#pragma once

#include "m3fc/env.hpp"

// Layout of the foraging major-state vector, exposed so tests and inspection
// tools can audit the mass ledger. All masses are in mean-field units: an
// agent carrying encumbrance e contributes e/N.
namespace m3fc::foraging {

inline constexpr int kMaxAreas = 5;
inline constexpr int kSlotBase = 2;            // after (px, py)
inline constexpr int kSlotLen = 3;             // (cx, cy, remaining mass)
inline constexpr int kSpawnedIdx = kSlotBase + kMaxAreas * kSlotLen;
inline constexpr int kDepositedIdx = kSpawnedIdx + 1;
inline constexpr int kWastedIdx = kSpawnedIdx + 2;
inline constexpr int kMajorDim = kSpawnedIdx + 3;

inline const double* slot(const SystemState& s, int m) {
  return s.major.data() + kSlotBase + m * kSlotLen;
}
inline bool slot_active(const SystemState& s, int m) { return slot(s, m)[2] > 0.0; }

// Mass still sitting in foraging areas.
inline double mass_in_areas(const SystemState& s) {
  double total = 0.0;
  for (int m = 0; m < kMaxAreas; ++m) total += slot(s, m)[2];
  return total;
}

// Mass carried by the minor agents, (1/N) * sum of encumbrances.
inline double mass_carried(const SystemState& s) {
  double total = 0.0;
  for (int i = 0; i < s.n; ++i) total += s.minor(i)[2];
  return total / s.n;
}

inline double mass_spawned(const SystemState& s) { return s.major[kSpawnedIdx]; }
inline double mass_deposited(const SystemState& s) { return s.major[kDepositedIdx]; }
inline double mass_wasted(const SystemState& s) { return s.major[kWastedIdx]; }

}  // namespace m3fc::foraging
