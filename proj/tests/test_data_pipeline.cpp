#include "doctest.h"
#include "helpers.hpp"

#include "pwadeepc/data_pipeline.hpp"

#include <algorithm>
#include <cmath>

using namespace pwadeepc;
using testutil::scalar;

namespace {

Dataset simulated(size_t n, unsigned seed) {
  const auto sys = make_example_system();
  const auto tr = simulate_ss(sys, scalar(0.0), testutil::random_inputs(n, seed));
  Dataset ds;
  ds.u = tr.u;
  ds.y = tr.y;
  ds.sigma = tr.s;
  ds.s_true = tr.s;
  label_with_pwarx(ds, make_example_pwarx(1));
  return ds;
}

}  // namespace

TEST_CASE("triangular reference peaks decay per period") {
  const auto r = triangular_reference(10.0, 40, 0.01, 200);
  REQUIRE(r.size() == 200);
  CHECK(r[0] == doctest::Approx(0.0));
  const double first = *std::max_element(r.begin(), r.begin() + 40);
  const double second = *std::max_element(r.begin() + 40, r.begin() + 80);
  CHECK(first == doctest::Approx(10.0));
  CHECK(second == doctest::Approx(9.9));
  CHECK(*std::min_element(r.begin(), r.begin() + 40) == doctest::Approx(-10.0));
}

TEST_CASE("partition covers every sample once") {
  const auto ds = simulated(300, 2);
  for (auto pol : {WindowPolicy::Concatenated, WindowPolicy::SegmentAware}) {
    const auto locals = partition_dataset(ds, ds.s_true, 2, pol);
    size_t total = 0;
    for (const auto& l : locals) {
      total += l.u.size();
      for (size_t k = 0; k < l.source.size(); ++k) CHECK(ds.s_true[l.source[k]] == l.mode);
    }
    CHECK(total == ds.size());
  }
}

TEST_CASE("random inputs are persistently exciting, constants are not") {
  const auto u = testutil::random_inputs(100, 9);
  CHECK(persistence_check(u, 10).exciting);
  const std::vector<Vector> flat(100, scalar(1.0));
  CHECK_FALSE(persistence_check(flat, 3).exciting);
}

TEST_CASE("misclassification is label-permutation invariant") {
  const std::vector<int> truth = {0, 0, 1, 1, 1, 0, 1, 0};
  std::vector<int> flipped;
  for (int s : truth) flipped.push_back(1 - s);
  CHECK(misclassification_rate(truth, truth) == 0.0);
  const auto perm = match_clusters_to_modes(flipped, truth, 2);
  CHECK(misclassification_rate(apply_permutation(flipped, perm), truth) == 0.0);
  std::vector<int> one_off = truth;
  one_off[3] = 0;
  CHECK(misclassification_rate(one_off, truth) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("kmeans recovers separated blobs and is seed-deterministic") {
  Matrix pts(40, 2);
  for (int k = 0; k < 40; ++k) {
    const double c = k < 20 ? -5.0 : 5.0;
    pts(k, 0) = c + 0.01 * (k % 7);
    pts(k, 1) = c - 0.02 * (k % 5);
  }
  const auto a = kmeans(pts, 2, 4, {});
  const auto b = kmeans(pts, 2, 4, {});
  CHECK(a.assign == b.assign);
  for (int k = 1; k < 20; ++k) CHECK(a.assign[static_cast<size_t>(k)] == a.assign[0]);
  CHECK(a.assign[20] != a.assign[0]);
}

TEST_CASE("aic picks the true lag of the example plant") {
  auto ds = simulated(400, 4);
  std::vector<AicEntry> table;
  const int lag = aic_lag_select(ds, 4, &table);
  CHECK(lag >= 1);
  REQUIRE(table.size() == 4);
  for (size_t k = 1; k < table.size(); ++k) CHECK(table[k].sse <= table[k - 1].sse * (1 + 1e-12) + 1e-12);
}

TEST_CASE("dataset csv round trip") {
  auto ds = simulated(50, 7);
  ds.s_hat.assign(ds.size(), 1);
  const auto back = dataset_from_csv("# comment\n" + dataset_to_csv(ds, true));
  REQUIRE(back.size() == ds.size());
  for (size_t t = 0; t < ds.size(); ++t) {
    CHECK(back.u[t](0) == ds.u[t](0));
    CHECK(back.y[t](0) == ds.y[t](0));
    CHECK(back.s_true[t] == ds.s_true[t]);
  }
}

TEST_CASE("oracle collection keeps the plant inside the grid") {
  const auto sys = make_example_system();
  OracleSettings os;
  const auto ref = triangular_reference(10.0, 40, 0.01, 60 + os.horizon);
  os.x_points = 601;
  os.check_refinement = false;
  OracleStats st;
  const auto ds = oracle_mpc_collect(sys, ref, 60, os, scalar(0.0), &st);
  REQUIRE(ds.size() == 60);
  for (size_t t = 0; t < ds.size(); ++t) {
    CHECK(std::abs(ds.u[t](0)) <= 12.0 + 1e-12);
    CHECK(std::abs(ds.y[t](0)) <= 15.0 + 1e-12);
  }
}
