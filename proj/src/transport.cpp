#include "m3fc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace m3fc {

double assignment_cost(int n, const std::vector<double>& cost) {
  if (n <= 0) throw InvalidArgument("assignment needs at least one row");
  if (cost.size() != size_t(n) * n)
    throw SizeMismatch("cost matrix is not n*n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-indexed rows/columns; p[j] is the row matched to column j, p[0] is the
  // row currently being inserted.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), char(0));
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[size_t(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost[size_t(p[j] - 1) * n + (j - 1)];
  return total;
}

double ot_cost(const SampleCloud& a, const SampleCloud& b) {
  if (a.size() != b.size() || a.dim != b.dim)
    throw SizeMismatch("clouds differ: " + std::to_string(a.size()) + "x" +
                       std::to_string(a.dim) + " vs " +
                       std::to_string(b.size()) + "x" + std::to_string(b.dim));
  if (a.size() == 0) throw EmptyPointSet();
  int n = a.size(), d = a.dim;
  std::vector<double> cost(size_t(n) * n);
  for (int i = 0; i < n; ++i) {
    const double* pa = a.point(i);
    for (int j = 0; j < n; ++j) {
      const double* pb = b.point(j);
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        double diff = pa[k] - pb[k];
        s += diff * diff;
      }
      cost[size_t(i) * n + j] = s;
    }
  }
  return assignment_cost(n, cost) / n;
}

double w1_1d_abs(const SampleCloud& a, const SampleCloud& b) {
  if (a.dim != 1 || b.dim != 1)
    throw SizeMismatch("w1_1d_abs is for 1-d clouds");
  if (a.size() != b.size())
    throw SizeMismatch("clouds differ in size");
  if (a.size() == 0) throw EmptyPointSet();
  std::vector<double> xa = a.xs, xb = b.xs;
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  double total = 0.0;
  for (size_t i = 0; i < xa.size(); ++i) total += std::abs(xa[i] - xb[i]);
  return total / double(xa.size());
}

}  // namespace m3fc
