#include "pwadeepc/deepc_solver.hpp"

#include "pwadeepc/error.hpp"
#include "qp_detail.hpp"

#include <algorithm>
#include <cmath>

namespace pwadeepc {

const char* to_string(Scheme s) { return s == Scheme::Elastic ? "elastic" : "cap"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "elastic") return Scheme::Elastic;
  if (s == "cap") return Scheme::Cap;
  throw Error(ErrorCode::InvalidArgument, "unknown scheme '" + s + "'");
}

namespace {

Matrix block_repeat(const Matrix& w, int L) {
  const Index k = w.rows();
  Matrix out = Matrix::Zero(k * L, k * L);
  for (int t = 0; t < L; ++t) out.block(t * k, t * k, k, k) = w;
  return out;
}

void add_box_rows(const Matrix& F, const std::optional<Vector>& lo, const std::optional<Vector>& hi,
                  Index dim, int L, std::vector<Vector>& rows, std::vector<double>& rhs) {
  for (int t = 0; t < L; ++t) {
    for (Index k = 0; k < dim; ++k) {
      const Index r = t * dim + k;
      if (hi && std::isfinite((*hi)(k))) {
        rows.push_back(F.row(r).transpose());
        rhs.push_back((*hi)(k));
      }
      if (lo && std::isfinite((*lo)(k))) {
        rows.push_back(-F.row(r).transpose());
        rhs.push_back(-(*lo)(k));
      }
    }
  }
}

}  // namespace

Matrix DeepcProblem::WF(int i) const {
  const Matrix Mi = M.middleCols(offsets[static_cast<size_t>(i)], group_size(i));
  return Mi.transpose() * Wt * Mi;
}

Vector DeepcProblem::group_weights(double lambda) const {
  Vector w(S);
  for (int i = 0; i < S; ++i) w(i) = lambda * std::sqrt(static_cast<double>(group_size(i)));
  return w;
}

std::vector<Vector> DeepcProblem::split(const Vector& g) const {
  std::vector<Vector> out;
  for (int i = 0; i < S; ++i) out.emplace_back(g.segment(offsets[static_cast<size_t>(i)], group_size(i)));
  return out;
}

double DeepcProblem::tracking_cost(const Vector& g) const {
  const Vector r = M * g - (Vector(u_ref.size() + y_ref.size()) << u_ref, y_ref).finished();
  return 0.5 * r.dot(Wt * r);
}

Vector DeepcProblem::tracking_gradient(const Vector& g) const {
  const Vector r = M * g - (Vector(u_ref.size() + y_ref.size()) << u_ref, y_ref).finished();
  return M.transpose() * (Wt * r);
}

Vector DeepcProblem::c_not(int i, const Vector& g) const {
  Vector h = g;
  h.segment(offsets[static_cast<size_t>(i)], group_size(i)).setZero();
  const Vector r = M * h - (Vector(u_ref.size() + y_ref.size()) << u_ref, y_ref).finished();
  return M.middleCols(offsets[static_cast<size_t>(i)], group_size(i)).transpose() * (Wt * r);
}

DeepcProblem build_problem(const MosaicBlocks& blocks, const Vector& z_ini, const Vector& u_ref,
                           const Vector& y_ref, const DeepcConfig& cfg) {
  DeepcProblem p;
  p.S = blocks.mode_count();
  p.L = blocks.L;
  p.rho = blocks.rho;
  p.nu = blocks.nu;
  p.ny = blocks.ny;
  p.affine = cfg.affine;
  if (p.S == 0) throw Error(ErrorCode::InvalidArgument, "no modes");
  const Index zp_rows = (p.nu + p.ny) * p.rho;
  if (z_ini.size() != zp_rows) throw Error(ErrorCode::DimensionMismatch, "z_ini has the wrong size");
  if (u_ref.size() != p.nu * p.L || y_ref.size() != p.ny * p.L) {
    throw Error(ErrorCode::DimensionMismatch, "reference length must match the horizon");
  }
  if (cfg.Q.rows() != p.ny || cfg.Q.cols() != p.ny || cfg.R.rows() != p.nu || cfg.R.cols() != p.nu) {
    throw Error(ErrorCode::DimensionMismatch, "Q and R must be ny x ny and nu x nu");
  }
  p.offsets = blocks.col_offsets();
  const Index n = p.offsets.back();
  const Index eq_rows = zp_rows + (p.affine ? p.S : 0);
  p.z_ini = z_ini;
  p.zt_ini = Vector::Ones(eq_rows);
  p.zt_ini.head(zp_rows) = z_ini;
  p.u_ref = u_ref;
  p.y_ref = y_ref;
  p.Qbar = block_repeat(cfg.Q, p.L);
  p.Rbar = block_repeat(cfg.R, p.L);

  const Index fr = (p.nu + p.ny) * p.L;
  p.A.resize(eq_rows, n);
  p.A.setZero();
  p.M.resize(fr, n);
  for (int i = 0; i < p.S; ++i) {
    const ModeBlocks& mb = blocks.modes[static_cast<size_t>(i)];
    const Index off = p.offsets[static_cast<size_t>(i)], c = mb.cols();
    Matrix zt = Matrix::Zero(eq_rows, c);
    zt.topRows(zp_rows) = mb.ZP();
    if (p.affine) zt.row(zp_rows + i).setOnes();
    p.A.middleCols(off, c) = zt;
    p.Zt.push_back(zt);
    p.UF.push_back(mb.UF);
    p.YF.push_back(mb.YF);
    p.M.block(0, off, p.nu * p.L, c) = mb.UF;
    p.M.block(p.nu * p.L, off, p.ny * p.L, c) = mb.YF;
  }
  p.Wt = Matrix::Zero(fr, fr);
  p.Wt.topLeftCorner(p.nu * p.L, p.nu * p.L) = 2.0 * p.Rbar;
  p.Wt.bottomRightCorner(p.ny * p.L, p.ny * p.L) = 2.0 * p.Qbar;
  const Vector r = (Vector(fr) << u_ref, y_ref).finished();
  p.q = -p.M.transpose() * (p.Wt * r);
  p.c0 = 0.5 * r.dot(p.Wt * r);

  std::vector<Vector> rows;
  std::vector<double> rhs;
  add_box_rows(p.M.topRows(p.nu * p.L), cfg.u_min, cfg.u_max, p.nu, p.L, rows, rhs);
  add_box_rows(p.M.bottomRows(p.ny * p.L), cfg.y_min, cfg.y_max, p.ny, p.L, rows, rhs);
  p.Gam.resize(static_cast<Index>(rows.size()), n);
  p.gamma.resize(static_cast<Index>(rows.size()));
  for (size_t k = 0; k < rows.size(); ++k) {
    p.Gam.row(static_cast<Index>(k)) = rows[k].transpose();
    p.gamma(static_cast<Index>(k)) = rhs[k];
  }
  for (int i = 0; i < p.S; ++i) p.Gamma.push_back(p.Gam.middleCols(p.offsets[static_cast<size_t>(i)], p.group_size(i)));
  return p;
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_equality, primal_inequality, complementarity,
                   dual_feasibility, zero_group});
}

double elastic_regularizer(const Vector& g, double lambda1, double lambda2) {
  return lambda1 * g.lpNorm<1>() + lambda2 * g.squaredNorm();
}

double cap_regularizer(const DeepcProblem& p, const Vector& g, double lambda) {
  const Vector w = p.group_weights(lambda);
  double r = 0.0;
  for (int i = 0; i < p.S; ++i) r += w(i) * g.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)).norm();
  return r;
}

namespace {

void primal_residuals(const DeepcProblem& p, const DeepcSolution& sol, KktResiduals& k) {
  k.primal_equality = p.A.rows() ? (p.A * sol.g - p.zt_ini).lpNorm<Eigen::Infinity>() : 0.0;
  if (p.Gam.rows() == 0) return;
  const Vector slack = p.Gam * sol.g - p.gamma;
  k.primal_inequality = std::max(0.0, slack.maxCoeff());
  if (sol.mu.size() == slack.size()) {
    k.complementarity = sol.mu.cwiseProduct(slack).cwiseAbs().maxCoeff();
    k.dual_feasibility = std::max(0.0, -sol.mu.minCoeff());
  }
}

Vector multiplier_term(const DeepcProblem& p, const DeepcSolution& sol) {
  Vector v = Vector::Zero(p.n());
  if (sol.alpha.size() == p.A.rows()) v += p.A.transpose() * sol.alpha;
  if (p.Gam.rows() && sol.mu.size() == p.Gam.rows()) v += p.Gam.transpose() * sol.mu;
  return v;
}

}  // namespace

KktResiduals kkt_residual_elastic(const DeepcProblem& p, const DeepcSolution& sol, double lambda1,
                                  double lambda2) {
  KktResiduals k;
  primal_residuals(p, sol, k);
  const Vector d = p.tracking_gradient(sol.g) + 2.0 * lambda2 * sol.g + multiplier_term(p, sol);
  for (Index j = 0; j < p.n(); ++j) {
    const double gj = sol.g(j);
    const double r = gj > 0 ? std::abs(d(j) + lambda1)
                     : gj < 0 ? std::abs(d(j) - lambda1)
                              : std::max(0.0, std::abs(d(j)) - lambda1);
    k.stationarity = std::max(k.stationarity, r);
  }
  return k;
}

KktResiduals kkt_residual_cap(const DeepcProblem& p, const DeepcSolution& sol, double lambda) {
  KktResiduals k;
  primal_residuals(p, sol, k);
  const Vector d = p.tracking_gradient(sol.g) + multiplier_term(p, sol);
  const Vector w = p.group_weights(lambda);
  for (int i = 0; i < p.S; ++i) {
    const Index off = p.offsets[static_cast<size_t>(i)], c = p.group_size(i);
    const Vector gi = sol.g.segment(off, c);
    const Vector di = d.segment(off, c);
    const double nrm = gi.norm();
    if (nrm > 0) {
      k.stationarity = std::max(k.stationarity, (di + w(i) * gi / nrm).lpNorm<Eigen::Infinity>());
    } else {
      k.zero_group = std::max(k.zero_group, di.norm() - w(i));
    }
  }
  return k;
}

double shrink_threshold(const DeepcProblem& p, const DeepcSolution& sol, double lambda, int iota) {
  if (p.S < 2) throw Error(ErrorCode::InvalidArgument, "shrink threshold needs at least two modes");
  if (iota < 0 || iota >= p.S) throw Error(ErrorCode::InvalidArgument, "mode index out of range");
  const Vector w = p.group_weights(lambda);
  std::vector<Index> act = {};
  for (int k : sol.active_inequalities) act.push_back(k);
  const Index m = p.A.rows() + static_cast<Index>(act.size());
  auto ztilde = [&](int i) {
    const Index off = p.offsets[static_cast<size_t>(i)], c = p.group_size(i);
    Matrix z(m, c);
    z.topRows(p.A.rows()) = p.A.middleCols(off, c);
    for (size_t r = 0; r < act.size(); ++r) z.row(p.A.rows() + static_cast<Index>(r)) = p.Gam.block(act[r], off, 1, c);
    return z;
  };
  Vector bt(m);
  bt.head(p.A.rows()) = p.zt_ini;
  for (size_t r = 0; r < act.size(); ++r) bt(p.A.rows() + static_cast<Index>(r)) = p.gamma(act[r]);

  Matrix Wbar = Matrix::Zero(m, m);
  Vector acc = Vector::Zero(m);
  for (int i = 0; i < p.S; ++i) {
    if (i == iota) continue;
    const Index off = p.offsets[static_cast<size_t>(i)], c = p.group_size(i);
    const double nrm = sol.g.segment(off, c).norm();
    if (nrm == 0.0) continue;
    const Matrix Wi = p.WF(i) + (w(i) / nrm) * Matrix::Identity(c, c);
    const Eigen::LLT<Matrix> llt(Wi);
    const Matrix Z = ztilde(i);
    const Matrix WiZt = llt.solve(Z.transpose());
    Wbar += Z * WiZt;
    acc += WiZt.transpose() * p.c_not(i, sol.g);
  }
  const Eigen::FullPivLU<Matrix> lu(Wbar);
  if (lu.rank() < m) {
    throw Error(ErrorCode::SingularWbar, "reduced constraint matrix has rank " + std::to_string(lu.rank()) +
                                             " of " + std::to_string(m));
  }
  const Vector alpha = -lu.solve(acc + bt);
  const Vector v = p.c_not(iota, sol.g) + ztilde(iota).transpose() * alpha;
  return v.norm() / std::sqrt(static_cast<double>(p.group_size(iota)));
}

std::vector<int> sign_pattern(const Vector& g, double tol) {
  std::vector<int> s(static_cast<size_t>(g.size()));
  for (Index j = 0; j < g.size(); ++j) s[static_cast<size_t>(j)] = g(j) > tol ? 1 : g(j) < -tol ? -1 : 0;
  return s;
}

Json problem_to_json(const DeepcProblem& p) {
  Json j;
  j["S"] = p.S;
  j["L"] = p.L;
  j["rho"] = p.rho;
  j["affine"] = p.affine;
  j["offsets"] = p.offsets;
  j["A"] = matrix_to_json(p.A);
  j["M"] = matrix_to_json(p.M);
  j["Wt"] = matrix_to_json(p.Wt);
  j["zt_ini"] = vector_to_json(p.zt_ini);
  j["u_ref"] = vector_to_json(p.u_ref);
  j["y_ref"] = vector_to_json(p.y_ref);
  j["Gamma"] = matrix_to_json(p.Gam);
  j["gamma"] = vector_to_json(p.gamma);
  return j;
}

Json solution_to_json(const DeepcSolution& s) {
  Json j;
  j["g"] = vector_to_json(s.g);
  j["u_f"] = vector_to_json(s.u_f);
  j["y_pred"] = vector_to_json(s.y_pred);
  j["alpha"] = vector_to_json(s.alpha);
  j["mu"] = vector_to_json(s.mu);
  j["active_inequalities"] = s.active_inequalities;
  j["iterations"] = s.iterations;
  j["tracking"] = s.tracking;
  j["regularizer"] = s.regularizer;
  j["objective"] = s.objective;
  j["converged"] = s.converged;
  j["method"] = s.method;
  j["kkt"] = {{"stationarity", s.kkt.stationarity},
              {"primal_equality", s.kkt.primal_equality},
              {"primal_inequality", s.kkt.primal_inequality},
              {"complementarity", s.kkt.complementarity},
              {"dual_feasibility", s.kkt.dual_feasibility},
              {"zero_group", s.kkt.zero_group}};
  return j;
}

namespace detail {

EqualityRows independent_rows(const Matrix& A, const Vector& b, double tol) {
  EqualityRows out;
  if (A.rows() == 0) {
    out.A = A;
    out.b = b;
    return out;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(A.transpose());
  qr.setThreshold(tol);
  const Index r = qr.rank();
  for (Index k = 0; k < r; ++k) out.rows.push_back(qr.colsPermutation().indices()(k));
  std::sort(out.rows.begin(), out.rows.end());
  out.A.resize(r, A.cols());
  out.b.resize(r);
  for (Index k = 0; k < r; ++k) {
    out.A.row(k) = A.row(out.rows[static_cast<size_t>(k)]);
    out.b(k) = b(out.rows[static_cast<size_t>(k)]);
  }
  if (r < A.rows()) {
    const Vector g = min_norm_solve(out.A, out.b);
    const double res = (A * g - b).lpNorm<Eigen::Infinity>();
    if (res > 1e-8 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
      throw Error(ErrorCode::Infeasible, "equality constraints are inconsistent (residual " +
                                             std::to_string(res) + ")");
    }
  }
  return out;
}

DiagLowRank::DiagLowRank(const Vector& d, Matrix U, const Matrix& C)
    : dinv_(d.cwiseInverse()), U_(std::move(U)) {
  CUt_ = C * U_.transpose();
  DinvU_ = dinv_.asDiagonal() * U_;
  Matrix inner = Matrix::Identity(C.rows(), C.rows()) + CUt_ * DinvU_;
  inner_.compute(inner);
  ok_ = inner.size() == 0 || std::abs(inner_.determinant()) > 0.0;
  if (ok_ && inner.size() > 0) ok_ = std::isfinite(inner_.rcond()) && inner_.rcond() > 1e-14;
}

DiagLowRank DiagLowRank::from_capacitance(const Vector& d, Matrix U, const Matrix& K) {
  DiagLowRank P;
  P.dinv_ = d.cwiseInverse();
  P.U_ = std::move(U);
  P.CUt_ = P.U_.transpose();
  P.DinvU_ = P.dinv_.asDiagonal() * P.U_;
  P.inner_.compute(K);
  P.ok_ = K.size() == 0 || (std::isfinite(P.inner_.rcond()) && P.inner_.rcond() > 1e-14);
  return P;
}

Matrix DiagLowRank::solve(const Matrix& r) const {
  const Matrix y = dinv_.asDiagonal() * r;
  if (U_.cols() == 0) return y;
  return y - DinvU_ * inner_.solve(CUt_ * y);
}

EqualitySolver::EqualitySolver(const DiagLowRank& P, const Matrix& C) : P_(&P), C_(C) {
  if (C_.rows() == 0) return;
  X_ = P_->solve(C_.transpose());
  schur_.compute(C_ * X_);
}

Vector EqualitySolver::solve(const Vector& r, const Vector& d, Vector* nu) const {
  const Vector x0 = P_->solve(r);
  if (C_.rows() == 0) {
    if (nu) nu->resize(0);
    return x0;
  }
  const Vector v = schur_.solve(C_ * x0 - d);
  if (nu) *nu = v;
  return x0 - X_ * v;
}

AdmmResult admm(const DeepcProblem& p, const EqualityRows& eq, const Prox& prox,
                const AdmmOptions& opt, const Vector* z0) {
  const Index n = p.n(), ni = p.Gam.rows();
  const Matrix U = (Matrix(n, p.M.rows() + ni) << p.M.transpose(), p.Gam.transpose()).finished();
  double rho = opt.rho_scale * std::max(1e-6, (p.M.transpose() * p.Wt * p.M).trace() / static_cast<double>(n));

  AdmmResult res;
  Vector z = z0 ? *z0 : Vector::Zero(n);
  Vector y1 = Vector::Zero(n);
  Vector w = ni ? Vector(p.Gam * z) : Vector(0);
  if (ni) w = w.cwiseMin(p.gamma);
  Vector y2 = Vector::Zero(ni);
  const double sq = std::sqrt(static_cast<double>(n + ni));

  auto factor = [&](double r) {
    Matrix C = Matrix::Zero(U.cols(), U.cols());
    C.topLeftCorner(p.M.rows(), p.M.rows()) = p.Wt;
    if (ni) C.bottomRightCorner(ni, ni) = r * Matrix::Identity(ni, ni);
    return DiagLowRank(Vector::Constant(n, r), U, C);
  };
  DiagLowRank P = factor(rho);
  EqualitySolver solver(P, eq.A);

  for (int it = 1; it <= opt.max_iter; ++it) {
    Vector rhs = -p.q + rho * (z - y1);
    if (ni) rhs += rho * p.Gam.transpose() * (w - y2);
    const Vector x = solver.solve(rhs, eq.b);
    const Vector xr = opt.relaxation * x + (1.0 - opt.relaxation) * z;
    const Vector z_old = z;
    z = prox(xr + y1, 1.0 / rho);
    y1 += xr - z;
    Vector gx, w_old;
    double rp2 = (x - z).squaredNorm(), rd2 = (z - z_old).squaredNorm();
    if (ni) {
      gx = p.Gam * x;
      const Vector gr = opt.relaxation * gx + (1.0 - opt.relaxation) * w;
      w_old = w;
      w = (gr + y2).cwiseMin(p.gamma);
      y2 += gr - w;
      rp2 += (gx - w).squaredNorm();
      rd2 += (p.Gam.transpose() * (w - w_old)).squaredNorm();
    }
    const double rp = std::sqrt(rp2), rd = rho * std::sqrt(rd2);
    const double scale_p = std::max(x.norm(), z.norm());
    const double scale_d = rho * std::sqrt(y1.squaredNorm() + y2.squaredNorm());
    res.iterations = it;
    if (rp <= opt.eps_abs * sq + opt.eps_rel * scale_p && rd <= opt.eps_abs * sq + opt.eps_rel * scale_d) {
      res.converged = true;
      break;
    }
    if (it % 50 == 0) {
      const double ratio = (rp / std::max(scale_p, 1e-12)) / std::max(rd / std::max(scale_d, 1e-12), 1e-300);
      double f = 1.0;
      if (ratio > 10.0) f = std::min(10.0, std::sqrt(ratio));
      if (ratio < 0.1) f = std::max(0.1, std::sqrt(ratio));
      if (f != 1.0) {
        rho *= f;
        y1 /= f;
        y2 /= f;
        P = factor(rho);
        solver = EqualitySolver(P, eq.A);
      }
    }
  }
  res.z = z;
  res.w = w;
  res.y2 = y2 * rho;
  res.rho = rho;
  return res;
}

void finish(const DeepcProblem& p, DeepcSolution& sol, double regularizer) {
  sol.G = p.split(sol.g);
  sol.u_f = p.M.topRows(p.nu * p.L) * sol.g;
  sol.y_pred = p.M.bottomRows(p.ny * p.L) * sol.g;
  sol.tracking = p.tracking_cost(sol.g);
  sol.regularizer = regularizer;
  sol.objective = sol.tracking + regularizer;
}

}  // namespace detail

}  // namespace pwadeepc
