#include "doctest.h"
#include "helpers.hpp"

#include "pwadeepc/closed_loop.hpp"

#include <cmath>

using namespace pwadeepc;
using testutil::scalar;

TEST_CASE("rmse") {
  const std::vector<Vector> a = {scalar(1), scalar(2), scalar(3)};
  CHECK(rmse(a, a) == 0.0);
  const std::vector<Vector> b = {scalar(1.5), scalar(2.5), scalar(3.5)};
  CHECK(rmse(a, b) == doctest::Approx(0.5));
}

TEST_CASE("equilibrium inputs of the example plant") {
  const auto sys = make_example_system();
  CHECK(equilibrium_input(sys, -4.0) == doctest::Approx(-4.0 * 1.3 / 1.4));
  CHECK(equilibrium_input(sys, 4.0) == doctest::Approx(4.0 * 0.1 / 0.15));
}

TEST_CASE("reference cases switch sign once") {
  const auto sys = make_example_system();
  const auto r1 = make_reference_case(sys, 1, 4.0, 25, 70);
  const auto r2 = make_reference_case(sys, 2, 4.0, 25, 70);
  REQUIRE(r1.y_ref.size() == 70);
  CHECK(r1.y_ref[0](0) == -4.0);
  CHECK(r1.y_ref[25](0) == 4.0);
  CHECK(r2.y_ref[0](0) == 4.0);
  CHECK(r2.y_ref[69](0) == -4.0);
}

TEST_CASE("past window is zero-padded") {
  std::vector<Vector> u = {scalar(1), scalar(2)}, y = {scalar(3), scalar(4)};
  const Vector z = past_window(u, y, 2, 3, 1, 1);
  REQUIRE(z.size() == 6);
  CHECK(z(0) == 0);
  CHECK(z(1) == 1);
  CHECK(z(2) == 2);
  CHECK(z(3) == 0);
  CHECK(z(5) == 4);
}

TEST_CASE("support size uses a relative threshold") {
  Vector g(4);
  g << 100.0, 1e-5, 0.02, 0.0;
  CHECK(support_size(g) == 2);
}

TEST_CASE("planned modes follow the plant") {
  const auto sys = make_example_system();
  Vector uf(3);
  uf << -10.0, 0.0, 10.0;
  const auto m = planned_modes(sys, scalar(1.0), uf, 1);
  REQUIRE(m.size() == 3);
  CHECK(m[0] == 1);
  CHECK(m[1] == 0);
}
