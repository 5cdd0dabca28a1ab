#include "doctest.h"
#include "helpers.hpp"

#include "pwadeepc/error.hpp"
#include "pwadeepc/verification.hpp"

#include <cmath>

using namespace pwadeepc;

namespace {

DeepcProblem instance(std::uint64_t seed, bool affine = true) {
  return random_instance(make_example_system(), make_example_pwarx(1), 2, 1, 5, affine, seed);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("elastic solver matches sign enumeration") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = instance(seed);
    const auto sol = solve_elastic(p, 0.7, 1e-3);
    const auto ref = elastic_enumeration_oracle(p, 0.7, 1e-3);
    CHECK(rel(sol.objective, ref.objective) < 1e-6);
    CHECK(sol.kkt.max() < 1e-6);
    const Vector eq = p.A * sol.g - p.zt_ini;
    CHECK(eq.norm() < 1e-6);
  }
}

TEST_CASE("cap solver matches the barrier method") {
  for (std::uint64_t seed : {4u, 5u}) {
    const auto p = instance(seed);
    const auto sol = solve_cap(p, 1.3);
    const auto ref = cap_barrier_oracle(p, 1.3);
    CHECK(rel(sol.objective, ref.objective) < 1e-4);
    CHECK(kkt_residual_cap(p, sol, 1.3).max() < 1e-5);
  }
}

TEST_CASE("sum-to-one rows hold per mode") {
  const auto p = instance(6);
  const auto sol = solve_cap(p, 0.5);
  REQUIRE(sol.G.size() == static_cast<size_t>(p.S));
  for (const auto& Gi : sol.G) CHECK(Gi.sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("group weights scale with the square root of group size") {
  const auto p = instance(7);
  const Vector w = p.group_weights(2.0);
  for (int i = 0; i < p.S; ++i) CHECK(w(i) == doctest::Approx(2.0 * std::sqrt(double(p.group_size(i)))));
}

TEST_CASE("shrink threshold needs two modes and a regular reduced system") {
  const auto p = instance(9, true);
  const auto sol = solve_cap(p, 1.0);
  CHECK_THROWS_AS(shrink_threshold(p, sol, 1.0, 0), Error);
}

TEST_CASE("explicit elastic law reproduces the solver") {
  const auto p = instance(10);
  const auto sol = solve_elastic(p, 0.5, 1e-3);
  const auto reg = explicit_elastic_coefficients(p, 0.5, 1e-3, sol.active_inequalities, sign_pattern(sol.g, 1e-9));
  const Vector g = reg.F * p.zt_ini + reg.e;
  CHECK((g - sol.g).norm() < 1e-6 * std::max(1.0, sol.g.norm()));
}

TEST_CASE("sign pattern") {
  Vector g(4);
  g << 0.5, -1e-12, 0.0, -2.0;
  const auto s = sign_pattern(g, 1e-9);
  CHECK(s == std::vector<int>{1, 0, 0, -1});
}
