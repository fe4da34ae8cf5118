#pragma once

#include <span>
#include <vector>

#include "m3fc/errors.hpp"

namespace m3fc {

// Regular box grid used to coarsen agent positions into a finite mean field.
// Cells are half-open along each axis except the top boundary, which is
// closed into the last bin so the full box is covered. Points up to 1e-9
// outside the box are clamped in; anything further out is rejected.
struct BinGrid {
  int dims = 0;
  std::vector<double> lo, hi;
  std::vector<int> cells;

  static BinGrid regular(std::vector<double> lo, std::vector<double> hi,
                         std::vector<int> cells);

  int n_cells() const;
  double cell_width(int d) const { return (hi[d] - lo[d]) / cells[d]; }
  // Flat index, first dimension slowest.
  int cell_index(const double* x) const;
  void cell_center(int flat, double* out) const;
};

// Probability weights over a finite support (grid cells or finite states).
struct FiniteMF {
  std::vector<double> w;

  FiniteMF() = default;
  explicit FiniteMF(int n) : w(n, 0.0) {}
  explicit FiniteMF(std::vector<double> v) : w(std::move(v)) {}

  int size() const { return int(w.size()); }
  double& operator[](int i) { return w[i]; }
  double operator[](int i) const { return w[i]; }

  // Throws if the weights are not a probability vector within tol.
  void validate(double tol = 1e-12) const;
};

// Grid-cell weights are the same representation.
using MeanFieldHist = FiniteMF;

// Empirical measure of `n` points coarsened onto the grid. `points` holds n
// rows of `stride` doubles; the leading grid.dims entries of each row are the
// coordinates. Weights sum to exactly 1 (counts over n).
MeanFieldHist histogram(std::span<const double> points, int stride,
                        const BinGrid& grid);

// Total variation style distance: sum of |a - b|, in [0, 2].
double l1_distance(const FiniteMF& a, const FiniteMF& b);

// Per-cell mean of a scalar value attached to each point (0 for empty cells).
// `values` has one entry per point row.
std::vector<double> mean_per_bin(std::span<const double> points, int stride,
                                 std::span<const double> values,
                                 const BinGrid& grid);

}  // namespace m3fc
