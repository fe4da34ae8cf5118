#include "m3fc/measures.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace m3fc {

namespace {
constexpr double kDomainSlack = 1e-9;
}

BinGrid BinGrid::regular(std::vector<double> lo, std::vector<double> hi,
                         std::vector<int> cells) {
  BinGrid g;
  g.dims = int(lo.size());
  if (hi.size() != lo.size() || cells.size() != lo.size() || g.dims == 0)
    throw InvalidArgument("grid axes must agree and be nonempty");
  for (int d = 0; d < g.dims; ++d) {
    if (!(hi[d] > lo[d])) throw InvalidArgument("grid box must have volume");
    if (cells[d] < 1) throw InvalidArgument("grid needs at least one cell");
  }
  g.lo = std::move(lo);
  g.hi = std::move(hi);
  g.cells = std::move(cells);
  return g;
}

int BinGrid::n_cells() const {
  int n = 1;
  for (int d = 0; d < dims; ++d) n *= cells[d];
  return n;
}

int BinGrid::cell_index(const double* x) const {
  int flat = 0;
  for (int d = 0; d < dims; ++d) {
    double v = x[d];
    if (v < lo[d] - kDomainSlack || v > hi[d] + kDomainSlack)
      throw PointOutOfDomain("coordinate " + std::to_string(v) +
                             " outside [" + std::to_string(lo[d]) + ", " +
                             std::to_string(hi[d]) + "] on axis " +
                             std::to_string(d));
    v = std::clamp(v, lo[d], hi[d]);
    int idx = int((v - lo[d]) / cell_width(d));
    idx = std::clamp(idx, 0, cells[d] - 1);  // top boundary joins the last bin
    flat = flat * cells[d] + idx;
  }
  return flat;
}

void BinGrid::cell_center(int flat, double* out) const {
  for (int d = dims - 1; d >= 0; --d) {
    int idx = flat % cells[d];
    flat /= cells[d];
    out[d] = lo[d] + (idx + 0.5) * cell_width(d);
  }
}

void FiniteMF::validate(double tol) const {
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw InvalidArgument("mean field has negative weight");
    total += x;
  }
  if (std::abs(total - 1.0) > tol)
    throw InvalidArgument("mean field weights sum to " + std::to_string(total));
}

MeanFieldHist histogram(std::span<const double> points, int stride,
                        const BinGrid& grid) {
  if (stride < grid.dims) throw InvalidArgument("point stride below grid dims");
  if (points.empty()) throw EmptyPointSet();
  if (points.size() % stride != 0)
    throw LengthMismatch("point buffer is not a whole number of rows");
  int n = int(points.size()) / stride;
  MeanFieldHist h(grid.n_cells());
  for (int i = 0; i < n; ++i) h[grid.cell_index(points.data() + i * stride)] += 1.0;
  for (double& x : h.w) x /= n;
  return h;
}

double l1_distance(const FiniteMF& a, const FiniteMF& b) {
  if (a.size() != b.size())
    throw SupportMismatch("mean fields over different supports: " +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  double total = 0.0;
  for (int i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total;
}

std::vector<double> mean_per_bin(std::span<const double> points, int stride,
                                 std::span<const double> values,
                                 const BinGrid& grid) {
  if (stride < grid.dims) throw InvalidArgument("point stride below grid dims");
  if (points.empty()) throw EmptyPointSet();
  if (points.size() % stride != 0)
    throw LengthMismatch("point buffer is not a whole number of rows");
  size_t n = points.size() / stride;
  if (values.size() != n)
    throw LengthMismatch("have " + std::to_string(values.size()) +
                         " values for " + std::to_string(n) + " points");
  std::vector<double> sum(grid.n_cells(), 0.0);
  std::vector<int> count(grid.n_cells(), 0);
  for (size_t i = 0; i < n; ++i) {
    int c = grid.cell_index(points.data() + i * stride);
    sum[c] += values[i];
    ++count[c];
  }
  for (size_t c = 0; c < sum.size(); ++c) sum[c] = count[c] ? sum[c] / count[c] : 0.0;
  return sum;
}

}  // namespace m3fc
