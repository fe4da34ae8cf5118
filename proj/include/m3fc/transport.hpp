#pragma once

#include <vector>

#include "m3fc/errors.hpp"

namespace m3fc {

// Uniform empirical measure: n points in R^dim, flattened row-major.
struct SampleCloud {
  int dim = 0;
  std::vector<double> xs;

  int size() const { return dim ? int(xs.size()) / dim : 0; }
  const double* point(int i) const { return xs.data() + i * dim; }
  double* point(int i) { return xs.data() + i * dim; }

  static SampleCloud zeros(int n, int dim) {
    SampleCloud c;
    c.dim = dim;
    c.xs.assign(size_t(n) * dim, 0.0);
    return c;
  }
};

// Exact minimum of sum_j cost[p(j)][j] over permutations p, by shortest
// augmenting paths with potentials (O(n^3)). `cost` is n*n row-major.
double assignment_cost(int n, const std::vector<double>& cost);

// Optimal coupling cost between two equal-size uniform clouds with squared
// euclidean ground cost, normalized by the point count. Exact, not entropic.
double ot_cost(const SampleCloud& a, const SampleCloud& b);

// 1-d Wasserstein-1 with |x-y| ground cost: sort both sides, average the
// coordinate gaps. Equal-size clouds of dim 1 only.
double w1_1d_abs(const SampleCloud& a, const SampleCloud& b);

}  // namespace m3fc
