#include "doctest.h"
#include "helpers.hpp"

#include "pwadeepc/behavior_matrices.hpp"
#include "pwadeepc/error.hpp"

using namespace pwadeepc;
using testutil::scalar;

TEST_CASE("hankel layout") {
  const std::vector<Vector> seq = {scalar(1), scalar(2), scalar(3), scalar(4)};
  const Matrix h = hankel(seq, 2);
  REQUIRE(h.rows() == 2);
  REQUIRE(h.cols() == 3);
  CHECK(h(0, 0) == 1);
  CHECK(h(1, 0) == 2);
  CHECK(h(0, 2) == 3);
  CHECK(h(1, 2) == 4);
  CHECK_THROWS_AS(hankel(seq, 5), Error);
}

TEST_CASE("windows never straddle segments") {
  LocalDataset l;
  for (int k = 0; k < 6; ++k) {
    l.u.push_back(scalar(k));
    l.y.push_back(scalar(10 + k));
  }
  l.source = {0, 1, 2, 10, 11, 12};
  l.segment_starts = {0, 3};
  const auto b = local_blocks(l, 1, 2);
  CHECK(b.cols() == 2);
  CHECK(b.UP(0, 0) == 0);
  CHECK(b.UP(0, 1) == 3);
  CHECK(b.UF(0, 1) == 5);
  CHECK(b.YF(0, 1) == 15);
}

TEST_CASE("mosaic stacks modes side by side with indicator rows") {
  LocalDataset a, b;
  a.mode = 0;
  b.mode = 1;
  for (int k = 0; k < 5; ++k) {
    a.u.push_back(scalar(k));
    a.y.push_back(scalar(-k));
    a.source.push_back(static_cast<size_t>(k));
    b.u.push_back(scalar(100 + k));
    b.y.push_back(scalar(50 + k));
    b.source.push_back(static_cast<size_t>(20 + k));
  }
  a.segment_starts = b.segment_starts = {0};
  const auto blocks = build_mosaic_blocks({a, b}, 2, 1);
  REQUIRE(blocks.mode_count() == 2);
  CHECK(blocks.total_cols() == 6);
  const Matrix m = mosaic(blocks);
  CHECK(m.rows() == 2 * (1 + 2) + 2);
  const Matrix ind = blocks.indicator();
  CHECK(ind.row(0).sum() == 3);
  CHECK(ind(0, 2) == 1);
  CHECK(ind(1, 3) == 1);
  CHECK(ind(0, 3) == 0);
}

TEST_CASE("selection masks partition the horizon") {
  const std::vector<int> seq = {0, 1, 1, 0};
  const auto s = selection_masks(seq, 2, 1, 1);
  REQUIRE(s.mask.size() == 2);
  const Vector sum = s.mask[0] + s.mask[1];
  CHECK(sum.isApprox(Vector::Ones(8)));
  CHECK(s.mask[1](1) == 1);
  CHECK(s.mask[1](0) == 0);
}

TEST_CASE("lemma holds on plant data") {
  const auto sys = make_example_system();
  const auto model = make_example_pwarx(1);
  // held inputs give long single-mode runs
  std::vector<Vector> u;
  for (const auto& v : testutil::random_inputs(150, 11))
    for (int k = 0; k < 8; ++k) u.push_back(v);
  const auto tr = simulate_ss(sys, scalar(0.0), u);
  Dataset ds;
  ds.u = tr.u;
  ds.y = tr.y;
  ds.sigma = tr.s;
  ds.s_true = tr.s;
  label_with_pwarx(ds, model);
  const auto locals = partition_dataset(ds, ds.s_true, 2, WindowPolicy::SegmentAware);
  const auto blocks = trajectory_blocks(locals, 4);
  const auto rep = verify_fundamental_lemma(sys, model, blocks, 20, 12);
  CHECK(rep.trials == 20);
  CHECK(rep.feasible == 20);
  CHECK(rep.mode_consistent == 20);
  CHECK(rep.max_residual < 1e-6);
}
