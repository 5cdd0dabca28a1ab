#include "pwadeepc/deepc_solver.hpp"

#include "pwadeepc/error.hpp"
#include "qp_detail.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace pwadeepc {

namespace {

struct Polished {
  Vector g;
  Vector alpha;  // full equality rows
  Vector mu;     // full inequality rows
  std::vector<int> active_ineq;
  int iterations = 0;
};

class GroupNewton {
 public:
  GroupNewton(const DeepcProblem& p, double lambda, int max_iter)
      : p_(p), w_(p.group_weights(lambda)), max_iter_(max_iter) {
    r_.resize(p.M.rows());
    r_ << p.u_ref, p.y_ref;
  }

  // Returns nullopt when the restricted problem is inconsistent or Newton fails.
  std::optional<Polished> run(std::vector<bool> alive, std::vector<int> work, Vector g) const {
    int total = 0;
    std::vector<bool> keep(static_cast<size_t>(p_.S), false);
    for (int outer = 0; outer < 4 * p_.S + 10; ++outer) {
      std::vector<Index> cols;
      for (int i = 0; i < p_.S; ++i)
        if (alive[static_cast<size_t>(i)])
          for (Index c = 0; c < p_.group_size(i); ++c) cols.push_back(p_.offsets[static_cast<size_t>(i)] + c);
      if (cols.empty()) return std::nullopt;
      const Index nt = static_cast<Index>(cols.size());
      Matrix CT(p_.A.rows() + static_cast<Index>(work.size()), nt);
      Vector d(CT.rows());
      for (Index a = 0; a < nt; ++a) {
        CT.block(0, a, p_.A.rows(), 1) = p_.A.col(cols[static_cast<size_t>(a)]);
        for (size_t k = 0; k < work.size(); ++k) CT(p_.A.rows() + static_cast<Index>(k), a) = p_.Gam(work[k], cols[static_cast<size_t>(a)]);
      }
      d.head(p_.A.rows()) = p_.zt_ini;
      for (size_t k = 0; k < work.size(); ++k) d(p_.A.rows() + static_cast<Index>(k)) = p_.gamma(work[k]);
      detail::EqualityRows eq;
      try {
        eq = detail::independent_rows(CT, d);
      } catch (const Error&) {
        return std::nullopt;
      }
      Matrix MT(p_.M.rows(), nt);
      for (Index a = 0; a < nt; ++a) MT.col(a) = p_.M.col(cols[static_cast<size_t>(a)]);
      std::vector<std::pair<int, Index>> groups;  // (mode, local offset)
      {
        Index off = 0;
        for (int i = 0; i < p_.S; ++i)
          if (alive[static_cast<size_t>(i)]) {
            groups.emplace_back(i, off);
            off += p_.group_size(i);
          }
      }

      Vector x(nt);
      for (Index a = 0; a < nt; ++a) x(a) = g(cols[static_cast<size_t>(a)]);
      for (auto [i, off] : groups) {
        if (x.segment(off, p_.group_size(i)).norm() == 0.0)
          x.segment(off, p_.group_size(i)).setConstant(1.0 / static_cast<double>(p_.group_size(i)));
      }
      if (eq.A.rows()) x -= min_norm_solve(eq.A, eq.A * x - eq.b);

      auto objective = [&](const Vector& v) {
        const Vector e = MT * v - r_;
        double f = 0.5 * e.dot(p_.Wt * e);
        for (auto [i, off] : groups) f += w_(i) * v.segment(off, p_.group_size(i)).norm();
        return f;
      };
      auto gradient = [&](const Vector& v) {
        Vector gr = MT.transpose() * (p_.Wt * (MT * v - r_));
        for (auto [i, off] : groups) {
          const Index c = p_.group_size(i);
          gr.segment(off, c) += w_(i) * v.segment(off, c) / v.segment(off, c).norm();
        }
        return gr;
      };

      const Eigen::CompleteOrthogonalDecomposition<Matrix> eqT(eq.A.transpose());
      auto projected = [&](const Vector& gr) {
        if (eq.A.rows() == 0) return gr.norm();
        return (gr - eq.A.transpose() * eqT.solve(gr)).norm();
      };

      int dying = -1;
      bool ok = true;
      for (int it = 0; it < max_iter_; ++it, ++total) {
        Vector dg(nt);
        Matrix U = Matrix::Zero(nt, MT.rows() + static_cast<Index>(groups.size()));
        U.leftCols(MT.rows()) = MT.transpose();
        for (size_t k = 0; k < groups.size(); ++k) {
          const auto [i, off] = groups[k];
          const Index c = p_.group_size(i);
          const double nrm = x.segment(off, c).norm();
          dg.segment(off, c).setConstant(w_(i) / nrm);
          U.block(off, MT.rows() + static_cast<Index>(k), c, 1) = x.segment(off, c) / nrm;
        }
        // Capacitance of D + M'Wt M - sum d_i u_i u_i'; the radial diagonal cancels exactly.
        const Index mr = MT.rows();
        const Matrix DinvU = dg.cwiseInverse().asDiagonal() * U;
        Matrix K = U.transpose() * DinvU;
        K.topLeftCorner(mr, mr) += p_.Wt.inverse();
        K.bottomRightCorner(K.rows() - mr, K.cols() - mr).setZero();
        const detail::DiagLowRank P = detail::DiagLowRank::from_capacitance(dg, U, K);
        if (!P.ok()) {
          ok = false;
          break;
        }
        const detail::EqualitySolver es(P, eq.A);
        const Vector gr = gradient(x);
        const Vector dx = es.solve(-gr, Vector::Zero(eq.A.rows()));
        const double dec = -gr.dot(dx);
        const double f0 = objective(x);
        if (!dx.allFinite() || dec < -1e-9 * std::max(1.0, std::abs(f0))) {
          ok = false;
          break;
        }
        if (dec <= 1e-24 * std::max(1.0, std::abs(f0)) + 1e-30) break;
        if (dec <= 1e-13 * std::max(1.0, std::abs(f0)) && gr.norm() * dx.norm() <= 1e-11 * std::max(1.0, std::abs(f0))) break;
        // A group whose Newton step reverses its direction is heading for zero.
        for (auto [i, off] : groups) {
          const Index c = p_.group_size(i);
          const Vector xi = x.segment(off, c);
          if (!keep[static_cast<size_t>(i)] && xi.dot(xi + dx.segment(off, c)) <= 0.0 && dying < 0) dying = i;
        }
        double t = 1.0;
        Vector xn = x + dx;
        while (objective(xn) > f0 - 0.25 * t * dec && t > 1e-14) {
          t *= 0.5;
          xn = x + t * dx;
        }
        if (t <= 1e-14) {
          // f is flat to roundoff here; take the full step if it shrinks the projected gradient.
          xn = x + dx;
          const double flat = 1e-12 * std::max(1.0, std::abs(f0));
          if (objective(xn) <= f0 + flat && projected(gradient(xn)) < projected(gr)) {
            t = 1.0;
          } else {
            break;
          }
        }
        x = xn;
        if (dying >= 0) {
          const Index c = p_.group_size(dying);
          Index off = 0;
          for (auto [i, o] : groups)
            if (i == dying) off = o;
          if (x.segment(off, c).norm() <= 1e-9 * std::max(1.0, x.norm()) || t < 1.0) break;
          dying = -1;
        }
        if (dec <= 1e-20 * std::max(1.0, std::abs(f0))) break;
      }
      if (!ok) return std::nullopt;

      g.setZero();
      for (Index a = 0; a < nt; ++a) g(cols[static_cast<size_t>(a)]) = x(a);

      if (dying >= 0) {
        int cnt = 0;
        for (bool b : alive) cnt += b;
        if (cnt > 1) {
          std::vector<bool> trial = alive;
          trial[static_cast<size_t>(dying)] = false;
          Vector gt = g;
          gt.segment(p_.offsets[static_cast<size_t>(dying)], p_.group_size(dying)).setZero();
          if (run_once_check(trial, work)) {
            alive = trial;
            g = gt;
            continue;
          }
        }
        keep[static_cast<size_t>(dying)] = true;
        continue;
      }

      // Multipliers from stationarity, then the optimality checks on dead groups and inequalities.
      const Vector gr = gradient(x);
      Vector nu = Vector::Zero(CT.rows());
      if (eq.A.rows()) {
        const Vector v = -eqT.solve(gr);
        for (size_t k = 0; k < eq.rows.size(); ++k) nu(eq.rows[k]) = v(static_cast<Index>(k));
      }
      Vector alpha = nu.head(p_.A.rows());
      Vector mu = Vector::Zero(p_.Gam.rows());
      for (size_t k = 0; k < work.size(); ++k) mu(work[k]) = nu(p_.A.rows() + static_cast<Index>(k));

      Vector full = p_.tracking_gradient(g) + p_.A.transpose() * alpha;
      if (p_.Gam.rows()) full += p_.Gam.transpose() * mu;
      int add = -1;
      double worst = 1e-9;
      for (int i = 0; i < p_.S; ++i) {
        if (alive[static_cast<size_t>(i)]) continue;
        const Vector v = full.segment(p_.offsets[static_cast<size_t>(i)], p_.group_size(i));
        const double viol = (v.norm() - w_(i)) / std::max(1.0, w_(i));
        if (viol > worst) {
          worst = viol;
          add = i;
        }
      }
      if (add >= 0) {
        alive[static_cast<size_t>(add)] = true;
        const Vector v = full.segment(p_.offsets[static_cast<size_t>(add)], p_.group_size(add));
        g.segment(p_.offsets[static_cast<size_t>(add)], p_.group_size(add)) = -1e-6 * v / v.norm();
        continue;
      }
      int neg = -1;
      double most = -1e-9;
      for (size_t k = 0; k < work.size(); ++k)
        if (mu(work[k]) < most) {
          most = mu(work[k]);
          neg = static_cast<int>(k);
        }
      if (neg >= 0) {
        work.erase(work.begin() + neg);
        continue;
      }
      if (p_.Gam.rows()) {
        const Vector slack = p_.Gam * g - p_.gamma;
        Index k;
        if (slack.maxCoeff(&k) > 1e-9 * (1.0 + std::abs(p_.gamma(k)))) {
          work.push_back(static_cast<int>(k));
          continue;
        }
      }
      Polished out;
      out.g = g;
      out.alpha = alpha;
      out.mu = mu;
      std::sort(work.begin(), work.end());
      out.active_ineq = work;
      out.iterations = total;
      return out;
    }
    return std::nullopt;
  }

 private:
  // Consistency of the equality rows when only `alive` groups may be nonzero.
  bool run_once_check(const std::vector<bool>& alive, const std::vector<int>& work) const {
    std::vector<Index> cols;
    for (int i = 0; i < p_.S; ++i)
      if (alive[static_cast<size_t>(i)])
        for (Index c = 0; c < p_.group_size(i); ++c) cols.push_back(p_.offsets[static_cast<size_t>(i)] + c);
    Matrix CT(p_.A.rows() + static_cast<Index>(work.size()), static_cast<Index>(cols.size()));
    Vector d(CT.rows());
    for (size_t a = 0; a < cols.size(); ++a) {
      CT.block(0, static_cast<Index>(a), p_.A.rows(), 1) = p_.A.col(cols[a]);
      for (size_t k = 0; k < work.size(); ++k) CT(p_.A.rows() + static_cast<Index>(k), static_cast<Index>(a)) = p_.Gam(work[k], cols[a]);
    }
    d.head(p_.A.rows()) = p_.zt_ini;
    for (size_t k = 0; k < work.size(); ++k) d(p_.A.rows() + static_cast<Index>(k)) = p_.gamma(work[k]);
    try {
      detail::independent_rows(CT, d);
    } catch (const Error&) {
      return false;
    }
    return true;
  }

  const DeepcProblem& p_;
  Vector w_;
  Vector r_;
  int max_iter_;
};

}  // namespace

DeepcSolution solve_cap(const DeepcProblem& p, double lambda, const CapSettings& s,
                        const DeepcSolution* warm) {
  if (lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be nonnegative");
  const detail::EqualityRows eq = detail::independent_rows(p.A, p.zt_ini);
  const Vector w = p.group_weights(lambda);
  const GroupNewton newton(p, lambda, s.newton_max_iter);

  auto support = [&](const Vector& g) {
    std::vector<bool> alive(static_cast<size_t>(p.S));
    for (int i = 0; i < p.S; ++i)
      alive[static_cast<size_t>(i)] = g.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)).norm() > 0.0;
    return alive;
  };
  auto accept = [&](const Polished& r, const std::string& method, int extra) {
    DeepcSolution sol;
    sol.g = r.g;
    sol.alpha = r.alpha;
    sol.mu = r.mu;
    sol.active_inequalities = r.active_ineq;
    sol.iterations = r.iterations + extra;
    sol.method = method;
    detail::finish(p, sol, cap_regularizer(p, sol.g, lambda));
    sol.kkt = kkt_residual_cap(p, sol, lambda);
    sol.converged = true;
    return sol;
  };

  if (s.polish && warm && warm->g.size() == p.n() && warm->g.norm() > 0) {
    if (auto r = newton.run(support(warm->g), warm->active_inequalities, warm->g)) return accept(*r, "newton", 0);
  }

  const auto prox = [&](const Vector& v, double t) -> Vector {
    Vector z = v;
    for (int i = 0; i < p.S; ++i) {
      auto seg = z.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i));
      const double nrm = seg.norm();
      const double thr = w(i) * t;
      if (nrm <= thr) {
        seg.setZero();
      } else {
        seg *= 1.0 - thr / nrm;
      }
    }
    return z;
  };
  detail::AdmmOptions opt;
  opt.rho_scale = s.rho_scale;
  opt.relaxation = s.relaxation;
  opt.eps_abs = s.eps_abs;
  opt.eps_rel = s.eps_rel;
  opt.max_iter = s.max_iter;
  const detail::AdmmResult a = detail::admm(p, eq, prox, opt);

  if (s.polish) {
    std::vector<int> work;
    for (Index k = 0; k < a.y2.size(); ++k)
      if (a.y2(k) > 0) work.push_back(static_cast<int>(k));
    std::vector<bool> alive = support(a.z);
    if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; })) alive.assign(alive.size(), true);
    if (auto r = newton.run(alive, work, a.z)) return accept(*r, "admm+newton", a.iterations);
  }

  DeepcSolution sol;
  sol.g = a.z;
  sol.iterations = a.iterations;
  sol.converged = a.converged;
  sol.method = "admm";
  // Least-squares multipliers over the nonzero groups.
  sol.mu = Vector::Zero(p.Gam.rows());
  for (Index k = 0; k < a.y2.size(); ++k) {
    sol.mu(k) = std::max(0.0, a.y2(k));
    if (sol.mu(k) > 0) sol.active_inequalities.push_back(static_cast<int>(k));
  }
  Vector gr = p.tracking_gradient(sol.g);
  if (p.Gam.rows()) gr += p.Gam.transpose() * sol.mu;
  for (int i = 0; i < p.S; ++i) {
    auto seg = sol.g.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i));
    if (seg.norm() > 0) gr.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)) += w(i) * seg / seg.norm();
  }
  sol.alpha = p.A.rows() ? Vector(-p.A.transpose().completeOrthogonalDecomposition().solve(gr)) : Vector(0);
  detail::finish(p, sol, cap_regularizer(p, sol.g, lambda));
  sol.kkt = kkt_residual_cap(p, sol, lambda);
  if (!a.converged) throw Error(ErrorCode::MaxIter, "group-lasso splitting did not converge in " + std::to_string(a.iterations) + " iterations");
  return sol;
}

}  // namespace pwadeepc
