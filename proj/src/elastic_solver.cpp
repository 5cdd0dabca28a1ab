#include "pwadeepc/deepc_solver.hpp"

#include "pwadeepc/error.hpp"
#include "qp_detail.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace pwadeepc {

namespace {

struct Eqp {
  Vector g;      // full length
  Vector nu_eq;  // reduced equality rows
  Vector mu;     // working-set rows
  bool ok = false;
};

class ActiveSet {
 public:
  ActiveSet(const DeepcProblem& p, const detail::EqualityRows& eq, double l1, double l2)
      : p_(p), eq_(eq), l1_(l1) {
    H_ = p.M.transpose() * p.Wt * p.M;
    H_.diagonal().array() += 2.0 * l2;
  }

  // Minimize the smooth model on the free set with working inequalities held as equalities.
  Eqp solve(const std::vector<int>& sign, const std::vector<int>& work) const {
    std::vector<Index> F;
    for (size_t j = 0; j < sign.size(); ++j)
      if (sign[j] != 0) F.push_back(static_cast<Index>(j));
    const Index nf = static_cast<Index>(F.size()), me = eq_.A.rows(), mw = static_cast<Index>(work.size());
    const Index k = nf + me + mw;
    Matrix K = Matrix::Zero(k, k);
    Vector rhs(k);
    for (Index a = 0; a < nf; ++a) {
      for (Index b = 0; b < nf; ++b) K(a, b) = H_(F[a], F[b]);
      rhs(a) = -(p_.q(F[a]) + l1_ * sign[static_cast<size_t>(F[a])]);
      for (Index r = 0; r < me; ++r) K(nf + r, a) = K(a, nf + r) = eq_.A(r, F[a]);
      for (Index r = 0; r < mw; ++r) K(nf + me + r, a) = K(a, nf + me + r) = p_.Gam(work[r], F[a]);
    }
    rhs.segment(nf, me) = eq_.b;
    for (Index r = 0; r < mw; ++r) rhs(nf + me + r) = p_.gamma(work[r]);
    Eqp out;
    Vector sol;
    Eigen::PartialPivLU<Matrix> lu(K);
    sol = lu.solve(rhs);
    if (!sol.allFinite() || (K * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
      sol = K.completeOrthogonalDecomposition().solve(rhs);
    }
    const double res = (K * sol - rhs).lpNorm<Eigen::Infinity>();
    out.ok = sol.allFinite() && res <= 1e-7 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    out.g = Vector::Zero(p_.n());
    for (Index a = 0; a < nf; ++a) out.g(F[a]) = sol(a);
    out.nu_eq = sol.segment(nf, me);
    out.mu = sol.segment(nf + me, mw);
    return out;
  }

  [[nodiscard]] Vector gradient(const Vector& g) const { return H_ * g + p_.q; }

  const DeepcProblem& p_;
  const detail::EqualityRows& eq_;
  double l1_;
  Matrix H_;
};

bool inequalities_hold(const DeepcProblem& p, const Vector& g, double tol) {
  return p.Gam.rows() == 0 || (p.Gam * g - p.gamma).maxCoeff() <= tol;
}

std::optional<Vector> basic_start(const detail::EqualityRows& eq, Index n) {
  Vector g = Vector::Zero(n);
  const Index r = eq.A.rows();
  if (r == 0) return g;
  Eigen::ColPivHouseholderQR<Matrix> qr(eq.A);
  std::vector<Index> B;
  for (Index k = 0; k < r; ++k) B.push_back(qr.colsPermutation().indices()(k));
  std::sort(B.begin(), B.end());
  Matrix AB(r, r);
  for (Index k = 0; k < r; ++k) AB.col(k) = eq.A.col(B[static_cast<size_t>(k)]);
  const Vector gB = AB.partialPivLu().solve(eq.b);
  if (!gB.allFinite()) return std::nullopt;
  for (Index k = 0; k < r; ++k) g(B[static_cast<size_t>(k)]) = gB(k);
  return g;
}

DeepcSolution elastic_admm(const DeepcProblem& p, const detail::EqualityRows& eq, double l1, double l2,
                           const ElasticSettings& s) {
  detail::AdmmOptions opt;
  opt.max_iter = s.admm_max_iter;
  opt.eps_abs = opt.eps_rel = s.admm_tol;
  const auto prox = [l1, l2](const Vector& v, double t) -> Vector {
    Vector z = v;
    for (Index j = 0; j < z.size(); ++j) {
      const double a = std::max(0.0, std::abs(v(j)) - l1 * t);
      z(j) = std::copysign(a, v(j)) / (1.0 + 2.0 * l2 * t);
      if (a == 0.0) z(j) = 0.0;
    }
    return z;
  };
  const detail::AdmmResult r = detail::admm(p, eq, prox, opt);
  DeepcSolution sol;
  sol.g = r.z;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  sol.method = "admm";
  sol.mu = Vector::Zero(p.Gam.rows());
  if (p.Gam.rows()) {
    sol.mu = r.y2.cwiseMax(0.0);
    for (Index k = 0; k < p.Gam.rows(); ++k)
      if (sol.mu(k) > 0) sol.active_inequalities.push_back(static_cast<int>(k));
  }
  return sol;
}

}  // namespace

DeepcSolution solve_elastic(const DeepcProblem& p, double lambda1, double lambda2,
                            const ElasticSettings& s, const DeepcSolution* warm) {
  if (lambda1 < 0 || lambda2 < 0) throw Error(ErrorCode::InvalidArgument, "regularization weights must be nonnegative");
  const detail::EqualityRows eq = detail::independent_rows(p.A, p.zt_ini);
  const Index n = p.n();
  ActiveSet as(p, eq, lambda1, lambda2);
  const double scale = std::max({1.0, lambda1, p.q.lpNorm<Eigen::Infinity>()});
  const double tol = s.tol * scale;
  const double ineq_tol = 1e-9 * (1.0 + (p.gamma.size() ? p.gamma.lpNorm<Eigen::Infinity>() : 0.0));

  Vector g;
  std::vector<int> sign, work;
  bool have_start = false;
  int admm_iters = 0;

  auto try_pattern = [&](const std::vector<int>& sg, const std::vector<int>& wk) {
    const Eqp e = as.solve(sg, wk);
    if (!e.ok || !inequalities_hold(p, e.g, ineq_tol)) return false;
    for (Index j = 0; j < n; ++j)
      if (sg[static_cast<size_t>(j)] * e.g(j) < 0) return false;
    g = e.g;
    sign = sg;
    for (Index j = 0; j < n; ++j)
      if (g(j) == 0.0) sign[static_cast<size_t>(j)] = 0;
    work = wk;
    return true;
  };

  if (warm && warm->g.size() == n) have_start = try_pattern(sign_pattern(warm->g), warm->active_inequalities);
  if (!have_start) {
    if (auto b = basic_start(eq, n); b && inequalities_hold(p, *b, ineq_tol)) {
      g = *b;
      sign = sign_pattern(g);
      work.clear();
      have_start = true;
    }
  }
  if (!have_start) {
    DeepcSolution a = elastic_admm(p, eq, lambda1, lambda2, s);
    admm_iters = a.iterations;
    have_start = try_pattern(sign_pattern(a.g), a.active_inequalities);
    if (!have_start) {
      a.alpha = Vector::Zero(p.A.rows());
      detail::finish(p, a, elastic_regularizer(a.g, lambda1, lambda2));
      a.kkt = kkt_residual_elastic(p, a, lambda1, lambda2);
      if (!a.converged) throw Error(ErrorCode::MaxIter, "elastic splitting did not converge");
      return a;
    }
  }

  DeepcSolution sol;
  sol.method = "active_set";
  Vector nu_eq = Vector::Zero(eq.A.rows()), mu_w;
  int it = 0;
  for (; it < s.max_active_set_iter; ++it) {
    const Eqp e = as.solve(sign, work);
    if (!e.ok) throw Error(ErrorCode::RankDeficient, "active-set subproblem is singular");
    const Vector step = e.g - g;
    if (step.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, g.lpNorm<Eigen::Infinity>())) {
      g = e.g;
      nu_eq = e.nu_eq;
      mu_w = e.mu;
      Vector d = as.gradient(g);
      if (eq.A.rows()) d += eq.A.transpose() * nu_eq;
      for (size_t r = 0; r < work.size(); ++r) d += p.Gam.row(work[r]).transpose() * mu_w(static_cast<Index>(r));
      double worst = tol;
      Index release = -1, drop = -1;
      for (Index j = 0; j < n; ++j) {
        if (sign[static_cast<size_t>(j)] != 0) continue;
        const double v = std::abs(d(j)) - lambda1;
        if (v > worst) {
          worst = v;
          release = j;
          drop = -1;
        }
      }
      for (Index r = 0; r < mu_w.size(); ++r) {
        if (-mu_w(r) > worst) {
          worst = -mu_w(r);
          drop = r;
          release = -1;
        }
      }
      if (release >= 0) {
        sign[static_cast<size_t>(release)] = d(release) > 0 ? -1 : 1;
      } else if (drop >= 0) {
        work.erase(work.begin() + drop);
      } else {
        sol.converged = true;
        break;
      }
      continue;
    }
    double t = 1.0;
    Index block_var = -1, block_row = -1;
    for (Index j = 0; j < n; ++j) {
      const int sj = sign[static_cast<size_t>(j)];
      if (sj == 0 || sj * e.g(j) >= 0) continue;
      const double tj = g(j) / (g(j) - e.g(j));
      if (tj < t) {
        t = tj;
        block_var = j;
        block_row = -1;
      }
    }
    for (Index k = 0; k < p.Gam.rows(); ++k) {
      if (std::find(work.begin(), work.end(), static_cast<int>(k)) != work.end()) continue;
      const double slope = p.Gam.row(k).dot(step);
      if (slope <= 0) continue;
      const double tk = std::max(0.0, p.gamma(k) - p.Gam.row(k).dot(g)) / slope;
      if (tk < t) {
        t = tk;
        block_row = k;
        block_var = -1;
      }
    }
    t = std::max(t, 0.0);
    g += t * step;
    if (block_var >= 0) {
      g(block_var) = 0.0;
      sign[static_cast<size_t>(block_var)] = 0;
    } else if (block_row >= 0) {
      work.push_back(static_cast<int>(block_row));
    }
    for (Index j = 0; j < n; ++j)
      if (sign[static_cast<size_t>(j)] == 0) g(j) = 0.0;
  }
  if (!sol.converged) {
    DeepcSolution a = elastic_admm(p, eq, lambda1, lambda2, s);
    a.alpha = Vector::Zero(p.A.rows());
    detail::finish(p, a, elastic_regularizer(a.g, lambda1, lambda2));
    a.kkt = kkt_residual_elastic(p, a, lambda1, lambda2);
    if (!a.converged) throw Error(ErrorCode::MaxIter, "elastic active set and splitting both stalled");
    return a;
  }

  sol.g = g;
  sol.iterations = it + admm_iters;
  sol.alpha = Vector::Zero(p.A.rows());
  for (size_t r = 0; r < eq.rows.size(); ++r) sol.alpha(eq.rows[r]) = nu_eq(static_cast<Index>(r));
  sol.mu = Vector::Zero(p.Gam.rows());
  for (size_t r = 0; r < work.size(); ++r) sol.mu(work[r]) = mu_w(static_cast<Index>(r));
  std::sort(work.begin(), work.end());
  sol.active_inequalities = work;
  detail::finish(p, sol, elastic_regularizer(g, lambda1, lambda2));
  sol.kkt = kkt_residual_elastic(p, sol, lambda1, lambda2);
  return sol;
}

}  // namespace pwadeepc
