#include "doctest.h"
#include "helpers.hpp"

#include "pwadeepc/error.hpp"
#include "pwadeepc/linalg.hpp"

using namespace pwadeepc;
using testutil::scalar;

TEST_CASE("example plant steps by hand") {
  const auto sys = make_example_system();
  auto r = step_ss(sys, scalar(-1.0), scalar(2.0));
  CHECK(r.mode == 0);
  CHECK(r.x_next(0) == doctest::Approx(0.3 + 2.8));
  CHECK(r.y(0) == doctest::Approx(-1.0));

  r = step_ss(sys, scalar(2.0), scalar(-1.0));
  CHECK(r.mode == 1);
  CHECK(r.x_next(0) == doctest::Approx(1.8 - 0.15));
}

TEST_CASE("boundary point belongs to the nonnegative region") {
  const auto sys = make_example_system();
  CHECK(step_ss(sys, scalar(0.0), scalar(0.0)).mode == 1);
}

TEST_CASE("simulation records realized modes") {
  const auto sys = make_example_system();
  const auto u = testutil::random_inputs(60, 3);
  const auto tr = simulate_ss(sys, scalar(0.5), u);
  REQUIRE(tr.size() == 60);
  CHECK(tr.x.size() == 61);
  CHECK(mode_sequence_realized(sys, tr));
  for (size_t t = 0; t < tr.size(); ++t) CHECK(tr.s[t] == (tr.x[t](0) < 0 ? 0 : 1));
}

TEST_CASE("pwarx realization reproduces the state-space outputs") {
  const auto sys = make_example_system();
  const auto model = make_example_pwarx(1);
  const auto u = testutil::random_inputs(80, 5);
  const auto ss = simulate_ss(sys, scalar(0.0), u);
  const auto labels = pwarx_labels(model, ss.u, ss.y);
  REQUIRE(labels.size() == ss.size());
  // regressor mode at t is the plant mode that produced y_t
  for (size_t t = 1; t < ss.size(); ++t) CHECK(labels[t] == ss.s[t - 1]);
}

TEST_CASE("multistep map matches simulation along a fixed mode sequence") {
  const auto sys = make_example_system();
  const std::vector<int> seq = {1, 1, 0, 0, 1};
  const auto m = multistep_map(sys, seq);
  Vector u(5);
  u << 0.3, -2.0, 0.7, 1.1, -0.4;
  const double x0 = 0.8;
  Vector y = m.O * Vector::Constant(1, x0) + m.T * u + m.c;
  double x = x0;
  for (int k = 0; k < 5; ++k) {
    CHECK(y(k) == doctest::Approx(x));
    x = seq[k] == 0 ? -0.3 * x + 1.4 * u(k) : 0.9 * x + 0.15 * u(k);
  }
}

TEST_CASE("behavior basis has rank nx + nu L + 1") {
  const auto sys = make_example_system();
  for (int L : {3, 5, 8}) {
    std::vector<int> seq(static_cast<size_t>(L));
    for (int k = 0; k < L; ++k) seq[static_cast<size_t>(k)] = k % 2;
    CHECK(numerical_rank(behavior_basis(sys, seq)) == 1 + L + 1);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  const auto sys = make_example_system();
  CHECK_THROWS_AS(step_ss(sys, Vector::Zero(2), scalar(0.0)), Error);
}
