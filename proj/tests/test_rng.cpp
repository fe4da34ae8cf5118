#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "m3fc/rng.hpp"

using namespace m3fc;

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("forks are position independent") {
  Rng a(7);
  Rng child1 = a.fork(3);
  a.next_u64();
  a.next_u64();
  Rng child2 = a.fork(3);
  CHECK(child1.next_u64() == child2.next_u64());
}

TEST_CASE("distinct tags give distinct streams") {
  Rng a(7);
  std::set<uint64_t> firsts;
  for (uint64_t tag = 0; tag < 64; ++tag) firsts.insert(a.fork(tag).next_u64());
  CHECK(firsts.size() == 64);
}

TEST_CASE("uniform stays in [0,1) and looks flat") {
  Rng r(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("normal moments") {
  Rng r(2);
  double s1 = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("uniform_int covers its range") {
  Rng r(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    int k = r.uniform_int(5);
    REQUIRE(k >= 0);
    REQUIRE(k < 5);
    ++counts[k];
  }
  for (int c : counts) CHECK(c > 8000);
}

TEST_CASE("poisson mean is about lambda") {
  Rng r(4);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += r.poisson(0.2);
  CHECK(std::abs(sum / n - 0.2) < 0.02);
}

TEST_CASE("categorical follows the weights") {
  Rng r(5);
  std::vector<double> w = {1.0, 3.0, 0.0, 6.0};
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[r.categorical(w)];
  CHECK(counts[2] == 0);
  CHECK(std::abs(counts[0] / double(n) - 0.1) < 0.01);
  CHECK(std::abs(counts[1] / double(n) - 0.3) < 0.01);
  CHECK(std::abs(counts[3] / double(n) - 0.6) < 0.01);
}

TEST_CASE("deterministic row always returns its support point") {
  Rng r(6);
  std::vector<double> w = {0.0, 1.0, 0.0};
  for (int i = 0; i < 1000; ++i) CHECK(r.categorical(w) == 1);
}
