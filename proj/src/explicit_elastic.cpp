#include "pwadeepc/deepc_solver.hpp"

#include "pwadeepc/error.hpp"

#include <algorithm>

namespace pwadeepc {

ExplicitRegion explicit_elastic_coefficients(const DeepcProblem& p, double lambda1, double lambda2,
                                             const std::vector<int>& active,
                                             const std::vector<int>& signs) {
  const Index n = p.n(), m = p.A.rows(), mw = static_cast<Index>(active.size());
  if (static_cast<Index>(signs.size()) != n) throw Error(ErrorCode::DimensionMismatch, "sign pattern length");
  std::vector<Index> F;
  for (Index j = 0; j < n; ++j)
    if (signs[static_cast<size_t>(j)] != 0) F.push_back(j);
  const Index nf = static_cast<Index>(F.size());

  Matrix C(m + mw, nf);
  for (Index a = 0; a < nf; ++a) {
    C.block(0, a, m, 1) = p.A.col(F[static_cast<size_t>(a)]);
    for (Index r = 0; r < mw; ++r) C(m + r, a) = p.Gam(active[static_cast<size_t>(r)], F[static_cast<size_t>(a)]);
  }
  if (numerical_rank(C) < C.rows()) {
    throw Error(ErrorCode::RankDeficient, "constraint rows on the support are linearly dependent");
  }
  Matrix H = p.M.transpose() * p.Wt * p.M;
  H.diagonal().array() += 2.0 * lambda2;

  const Index k = nf + m + mw;
  Matrix K = Matrix::Zero(k, k);
  for (Index a = 0; a < nf; ++a)
    for (Index b = 0; b < nf; ++b) K(a, b) = H(F[static_cast<size_t>(a)], F[static_cast<size_t>(b)]);
  K.block(nf, 0, m + mw, nf) = C;
  K.block(0, nf, nf, m + mw) = C.transpose();
  const Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible()) throw Error(ErrorCode::RankDeficient, "reduced optimality system is singular");

  // Solution = S0 + S1 zt.
  Vector r0 = Vector::Zero(k);
  for (Index a = 0; a < nf; ++a) r0(a) = -(p.q(F[static_cast<size_t>(a)]) + lambda1 * signs[static_cast<size_t>(F[static_cast<size_t>(a)])]);
  for (Index r = 0; r < mw; ++r) r0(nf + m + r) = p.gamma(active[static_cast<size_t>(r)]);
  Matrix r1 = Matrix::Zero(k, m);
  r1.block(nf, 0, m, m).setIdentity();
  const Vector S0 = lu.solve(r0);
  const Matrix S1 = lu.solve(r1);

  ExplicitRegion out;
  out.F = Matrix::Zero(n, m);
  out.e = Vector::Zero(n);
  for (Index a = 0; a < nf; ++a) {
    out.F.row(F[static_cast<size_t>(a)]) = S1.row(a);
    out.e(F[static_cast<size_t>(a)]) = S0(a);
  }
  const Matrix alphaF = S1.block(nf, 0, m, m);
  const Vector alphae = S0.segment(nf, m);
  const Matrix muF = S1.block(nf + m, 0, mw, m);
  const Vector mue = S0.segment(nf + m, mw);

  // d = H g + q + A' alpha + Gamma_W' mu, affine in zt.
  Matrix GW(mw, n);
  for (Index r = 0; r < mw; ++r) GW.row(r) = p.Gam.row(active[static_cast<size_t>(r)]);
  const Matrix dF = H * out.F + p.A.transpose() * alphaF + GW.transpose() * muF;
  const Vector de = H * out.e + p.q + p.A.transpose() * alphae + GW.transpose() * mue;

  std::vector<Vector> rows;
  auto push = [&](const Vector& lin, double c) {
    Vector row(m + 1);
    row << lin, c;
    rows.push_back(row);
  };
  for (Index a = 0; a < nf; ++a) {
    const Index j = F[static_cast<size_t>(a)];
    const double s = signs[static_cast<size_t>(j)];
    push(-s * out.F.row(j).transpose(), -s * out.e(j));
  }
  for (Index j = 0; j < n; ++j) {
    if (signs[static_cast<size_t>(j)] != 0) continue;
    push(dF.row(j).transpose(), de(j) - lambda1);
    push(-dF.row(j).transpose(), -de(j) - lambda1);
  }
  for (Index r = 0; r < p.Gam.rows(); ++r) {
    if (std::find(active.begin(), active.end(), static_cast<int>(r)) != active.end()) continue;
    push((p.Gam.row(r) * out.F).transpose(), p.Gam.row(r).dot(out.e) - p.gamma(r));
  }
  for (Index r = 0; r < mw; ++r) push(-muF.row(r).transpose(), -mue(r));

  out.E.resize(static_cast<Index>(rows.size()), m + 1);
  for (size_t r = 0; r < rows.size(); ++r) out.E.row(static_cast<Index>(r)) = rows[r].transpose();
  for (int i = 0; i < p.S; ++i) {
    out.F_group.push_back(out.F.middleRows(p.offsets[static_cast<size_t>(i)], p.group_size(i)));
    out.e_group.push_back(out.e.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)));
  }
  return out;
}

}  // namespace pwadeepc
