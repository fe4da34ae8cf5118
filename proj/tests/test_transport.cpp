#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "m3fc/rng.hpp"
#include "m3fc/transport.hpp"

using namespace m3fc;

namespace {

SampleCloud random_cloud(Rng& rng, int n, int dim, double scale = 2.0) {
  SampleCloud c = SampleCloud::zeros(n, dim);
  for (double& x : c.xs) x = rng.uniform(-scale, scale);
  return c;
}

// Exhaustive minimum over all n! matchings, squared euclidean cost.
double permutation_oracle(const SampleCloud& a, const SampleCloud& b) {
  int n = a.size();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < a.dim; ++d) {
        double diff = a.point(i)[d] - b.point(perm[i])[d];
        total += diff * diff;
      }
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

}  // namespace

TEST_CASE("two single points cost their squared distance") {
  SampleCloud a = SampleCloud::zeros(1, 1), b = SampleCloud::zeros(1, 1);
  b.xs[0] = 1.0;
  CHECK(ot_cost(a, b) == 1.0);
  b.xs[0] = 3.0;
  CHECK(ot_cost(a, b) == 9.0);
}

TEST_CASE("identical clouds cost zero") {
  Rng rng(11);
  SampleCloud a = random_cloud(rng, 20, 2);
  CHECK(ot_cost(a, a) == 0.0);
}

TEST_CASE("crossing pairs relax to the uncrossed matching") {
  // {(0,0),(1,0)} vs {(1,0),(0,0)}: the identity matching would pay 2,
  // the optimal matching pays 0.
  SampleCloud a = SampleCloud::zeros(2, 2), b = SampleCloud::zeros(2, 2);
  a.point(1)[0] = 1.0;
  b.point(0)[0] = 1.0;
  CHECK(ot_cost(a, b) == 0.0);
}

TEST_CASE("small random pairs match the exhaustive oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 80; ++trial) {
    int n = 1 + rng.uniform_int(6);
    int dim = 1 + rng.uniform_int(3);
    SampleCloud a = random_cloud(rng, n, dim);
    SampleCloud b = random_cloud(rng, n, dim);
    double got = ot_cost(a, b);
    double want = permutation_oracle(a, b);
    CHECK(std::abs(got - want) <= 1e-9);
  }
}

TEST_CASE("cost is symmetric and translation invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + rng.uniform_int(29);
    SampleCloud a = random_cloud(rng, n, 2);
    SampleCloud b = random_cloud(rng, n, 2);
    double ab = ot_cost(a, b);
    CHECK(std::abs(ab - ot_cost(b, a)) <= 1e-9);

    double tx = rng.uniform(-5.0, 5.0), ty = rng.uniform(-5.0, 5.0);
    SampleCloud at = a, bt = b;
    for (int i = 0; i < n; ++i) {
      at.point(i)[0] += tx;
      at.point(i)[1] += ty;
      bt.point(i)[0] += tx;
      bt.point(i)[1] += ty;
    }
    CHECK(std::abs(ab - ot_cost(at, bt)) <= 1e-9);
    CHECK(ab >= 0.0);
  }
}

TEST_CASE("mismatched clouds are rejected") {
  SampleCloud a = SampleCloud::zeros(3, 2), b = SampleCloud::zeros(4, 2);
  CHECK_THROWS_AS(ot_cost(a, b), SizeMismatch);
  SampleCloud c = SampleCloud::zeros(3, 1);
  CHECK_THROWS_AS(ot_cost(a, c), SizeMismatch);
  SampleCloud e0 = SampleCloud::zeros(0, 2), e1 = SampleCloud::zeros(0, 2);
  CHECK_THROWS_AS(ot_cost(e0, e1), EmptyPointSet);
}

TEST_CASE("1-d sorted distance equals the assignment solver with abs cost") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 1 + rng.uniform_int(40);
    SampleCloud a = random_cloud(rng, n, 1);
    SampleCloud b = random_cloud(rng, n, 1);
    std::vector<double> cost(size_t(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        cost[size_t(i) * n + j] = std::abs(a.xs[i] - b.xs[j]);
    double via_solver = assignment_cost(n, cost) / n;
    CHECK(std::abs(w1_1d_abs(a, b) - via_solver) <= 1e-10);
  }
}

TEST_CASE("w1_1d_abs wants 1-d equal-size clouds") {
  SampleCloud a = SampleCloud::zeros(3, 2), b = SampleCloud::zeros(3, 2);
  CHECK_THROWS_AS(w1_1d_abs(a, b), SizeMismatch);
  SampleCloud c = SampleCloud::zeros(3, 1), d = SampleCloud::zeros(2, 1);
  CHECK_THROWS_AS(w1_1d_abs(c, d), SizeMismatch);
}
