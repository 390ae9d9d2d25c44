#include "doctest.h"
#include "transim/util.hpp"

#include <atomic>
#include <cmath>

using namespace transim;

TEST_CASE("linspace hits both endpoints with uniform spacing") {
  const auto v = linspace(0.0, 19600.0, 71);
  REQUIRE(v.size() == 71);
  CHECK(v.front() == 0.0);
  CHECK(v.back() == 19600.0);
  CHECK(v[1] - v[0] == doctest::Approx(280.0).epsilon(1e-12));
}

TEST_CASE("logspace is geometric and endpoint-exact") {
  const auto v = logspace(1e-3, 0.2, 5);
  REQUIRE(v.size() == 5);
  CHECK(v.front() == 1e-3);
  CHECK(v.back() == 0.2);
  const double r0 = v[1] / v[0], r1 = v[2] / v[1];
  CHECK(r0 == doctest::Approx(r1).epsilon(1e-10));
}

TEST_CASE("derive_seed separates nearby streams") {
  const auto a = derive_seed(42, 0);
  const auto b = derive_seed(42, 1);
  const auto c = derive_seed(43, 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(derive_seed(42, 0) == a);
}

TEST_CASE("parallel_for covers every index exactly once") {
  const int n = 1000;
  std::vector<std::atomic<int>> hits(n);
  parallel_for(n, [&](int i) { hits[i].fetch_add(1); }, 4);
  for (int i = 0; i < n; ++i) CHECK(hits[i].load() == 1);
}

TEST_CASE("millikelvin conversion uses the Boltzmann-over-Planck scale") {
  CHECK(millikelvin_to_ghz(20.0) == doctest::Approx(0.41673).epsilon(1e-4));
}
