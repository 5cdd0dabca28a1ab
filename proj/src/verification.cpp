#include "pwadeepc/verification.hpp"

#include "pwadeepc/closed_loop.hpp"
#include "pwadeepc/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace pwadeepc {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Quadratic data of the tracking cost built directly from the blocks.
struct Quad {
  Matrix P;  // Hessian of the tracking cost
  Vector c;  // linear term
  double k = 0.0;
};

Quad tracking_quad(const DeepcProblem& p) {
  const Index n = p.n();
  Matrix U(p.nu * p.L, n), Y(p.ny * p.L, n);
  for (int i = 0; i < p.S; ++i) {
    U.middleCols(p.offsets[static_cast<size_t>(i)], p.group_size(i)) = p.UF[static_cast<size_t>(i)];
    Y.middleCols(p.offsets[static_cast<size_t>(i)], p.group_size(i)) = p.YF[static_cast<size_t>(i)];
  }
  Quad q;
  q.P = 2.0 * (U.transpose() * p.Rbar * U + Y.transpose() * p.Qbar * Y);
  q.c = -2.0 * (U.transpose() * p.Rbar * p.u_ref + Y.transpose() * p.Qbar * p.y_ref);
  q.k = p.u_ref.dot(p.Rbar * p.u_ref) + p.y_ref.dot(p.Qbar * p.y_ref);
  return q;
}

double tracking(const DeepcProblem& p, const Vector& g) {
  Vector u = Vector::Zero(p.nu * p.L), y = Vector::Zero(p.ny * p.L);
  for (int i = 0; i < p.S; ++i) {
    const Vector gi = g.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i));
    u += p.UF[static_cast<size_t>(i)] * gi;
    y += p.YF[static_cast<size_t>(i)] * gi;
  }
  const Vector eu = u - p.u_ref, ey = y - p.y_ref;
  return eu.dot(p.Rbar * eu) + ey.dot(p.Qbar * ey);
}

}  // namespace

double elastic_objective(const DeepcProblem& p, const Vector& g, double lambda1, double lambda2) {
  return tracking(p, g) + lambda1 * g.lpNorm<1>() + lambda2 * g.squaredNorm();
}

double cap_objective(const DeepcProblem& p, const Vector& g, double lambda) {
  double r = 0.0;
  for (int i = 0; i < p.S; ++i) {
    const Index c = p.group_size(i);
    r += lambda * std::sqrt(static_cast<double>(c)) * g.segment(p.offsets[static_cast<size_t>(i)], c).norm();
  }
  return tracking(p, g) + r;
}

OracleResult elastic_enumeration_oracle(const DeepcProblem& p, double lambda1, double lambda2) {
  const Index n = p.n();
  if (n > 14) throw Error(ErrorCode::InvalidArgument, "enumeration oracle is limited to 14 variables");
  const Quad q = tracking_quad(p);
  const Matrix& A = p.A;
  const Index m = A.rows();
  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  long total = 1;
  for (Index j = 0; j < n; ++j) total *= 3;
  std::vector<int> s(static_cast<size_t>(n));
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<Index> F;
    for (Index j = 0; j < n; ++j) {
      s[static_cast<size_t>(j)] = static_cast<int>(c % 3) - 1;
      c /= 3;
      if (s[static_cast<size_t>(j)] != 0) F.push_back(j);
    }
    const Index nf = static_cast<Index>(F.size());
    Matrix K = Matrix::Zero(nf + m, nf + m);
    Vector rhs(nf + m);
    for (Index a = 0; a < nf; ++a) {
      for (Index b = 0; b < nf; ++b) K(a, b) = q.P(F[a], F[b]);
      K(a, a) += 2.0 * lambda2;
      rhs(a) = -q.c(F[a]) - lambda1 * s[static_cast<size_t>(F[a])];
      for (Index r = 0; r < m; ++r) K(nf + r, a) = K(a, nf + r) = A(r, F[a]);
    }
    rhs.tail(m) = p.zt_ini;
    const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
    if ((K * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;
    Vector g = Vector::Zero(n);
    bool consistent = true;
    for (Index a = 0; a < nf; ++a) {
      g(F[a]) = sol(a);
      if (s[static_cast<size_t>(F[a])] * sol(a) < 0) consistent = false;
    }
    if (!consistent) continue;
    if (m && (A * g - p.zt_ini).norm() > 1e-8 * (1.0 + p.zt_ini.norm())) continue;
    ++best.candidates;
    const double f = elastic_objective(p, g, lambda1, lambda2);
    if (f < best.objective) {
      best.objective = f;
      best.g = g;
    }
  }
  if (best.candidates == 0) throw Error(ErrorCode::Infeasible, "no feasible sign pattern");
  return best;
}

OracleResult cap_barrier_oracle(const DeepcProblem& p, double lambda) {
  const Index n = p.n(), S = p.S, m = p.A.rows();
  const Index nv = n + S;
  const Quad q = tracking_quad(p);
  Vector w(S);
  for (int i = 0; i < S; ++i) w(i) = lambda * std::sqrt(static_cast<double>(p.group_size(i)));

  Vector x = Vector::Zero(nv);
  x.head(n) = m ? min_norm_solve(p.A, p.zt_ini) : Vector::Zero(n);
  for (int i = 0; i < S; ++i) x(n + i) = x.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)).norm() + 1.0;
  // Steps stay in the null space of the equality rows.
  Matrix N = Matrix::Identity(nv, nv);
  if (m) {
    Matrix Aeq = Matrix::Zero(m, nv);
    Aeq.leftCols(n) = p.A;
    Eigen::JacobiSVD<Matrix> svd(Aeq, Eigen::ComputeFullV);
    const Index r = numerical_rank(Aeq);
    N = svd.matrixV().rightCols(nv - r);
  }

  auto f0 = [&](const Vector& v) {
    const Vector g = v.head(n);
    return 0.5 * g.dot(q.P * g) + q.c.dot(g) + w.dot(v.tail(S));
  };
  auto slack = [&](const Vector& v, int i) {
    return v(n + i) * v(n + i) - v.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)).squaredNorm();
  };
  auto barrier = [&](const Vector& v, double tau) {
    double b = tau * f0(v);
    for (int i = 0; i < S; ++i) {
      const double s = slack(v, i);
      if (!(s > 0) || v(n + i) <= 0) return std::numeric_limits<double>::infinity();
      b -= std::log(s);
    }
    return b;
  };

  double tau = 1.0;
  for (int outer = 0; outer < 60; ++outer) {
    for (int it = 0; it < 200; ++it) {
      Vector grad = Vector::Zero(nv);
      Matrix H = Matrix::Zero(nv, nv);
      grad.head(n) = tau * (q.P * x.head(n) + q.c);
      grad.tail(S) = tau * w;
      H.topLeftCorner(n, n) = tau * q.P;
      for (int i = 0; i < S; ++i) {
        const Index off = p.offsets[static_cast<size_t>(i)], c = p.group_size(i);
        const Vector G = x.segment(off, c);
        const double t = x(n + i), s = slack(x, i);
        grad.segment(off, c) += 2.0 * G / s;
        grad(n + i) += -2.0 * t / s;
        H.block(off, off, c, c) += (2.0 / s) * Matrix::Identity(c, c) + (4.0 / (s * s)) * G * G.transpose();
        H.block(off, n + i, c, 1) += (-4.0 * t / (s * s)) * G;
        H.block(n + i, off, 1, c) += (-4.0 * t / (s * s)) * G.transpose();
        H(n + i, n + i) += -2.0 / s + 4.0 * t * t / (s * s);
      }
      const Matrix Hr = N.transpose() * H * N;
      const Vector dx = N * Hr.ldlt().solve(-N.transpose() * grad);
      const double dec = -grad.dot(dx);
      if (dec / 2.0 < 1e-13) break;
      const double b0 = barrier(x, tau);
      double step = 1.0;
      while (barrier(x + step * dx, tau) > b0 - 0.25 * step * dec && step > 1e-16) step *= 0.5;
      if (step <= 1e-16) break;
      x += step * dx;
    }
    const double gap = 2.0 * static_cast<double>(S) / tau;
    if (gap < 1e-11 * std::max(1.0, std::abs(f0(x)))) break;
    tau *= 8.0;
  }
  OracleResult r;
  r.g = x.head(n);
  r.objective = cap_objective(p, r.g, lambda);
  r.candidates = 1;
  return r;
}

SuiteResult fundamental_lemma_suite(const PwaStateSpace& sys, const PwarxModel& model,
                                    const Dataset& ds, int L, int trials, std::uint64_t seed,
                                    double tol) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto locals = partition_dataset(ds, ds.s_true, model.mode_count(), WindowPolicy::SegmentAware,
                                        static_cast<size_t>(L));
  const TrajectoryBlocks tb = trajectory_blocks(locals, L);
  TrialSettings ts;
  ts.tol = tol;
  const FundamentalLemmaReport rep = verify_fundamental_lemma(sys, model, tb, trials, seed, ts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  SuiteResult r;
  r.name = "fundamental_lemma";
  r.pass = rep.feasible == trials && rep.mode_consistent == trials && rep.max_residual < tol && secs < 30.0;
  r.detail = std::to_string(rep.feasible) + "/" + std::to_string(trials) + " feasible, " +
             std::to_string(rep.mode_consistent) + " mode-consistent, max residual " +
             std::to_string(rep.max_residual);
  r.seconds = secs;
  r.data = {{"trials", trials}, {"feasible", rep.feasible}, {"mode_consistent", rep.mode_consistent},
            {"max_residual", rep.max_residual}, {"max_sum_violation", rep.max_sum_violation},
            {"seed", seed}, {"L", L}};
  return r;
}

SuiteResult rank_suite(const PwaStateSpace& sys, const std::vector<int>& horizons, int per_horizon,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  r.name = "behavior_rank";
  r.pass = true;
  Json rows = Json::array();
  int bad = 0;
  for (int L : horizons) {
    for (int k = 0; k < per_horizon; ++k) {
      Vector x0(sys.nx());
      for (Index i = 0; i < x0.size(); ++i) x0(i) = uniform(rng, -5.0, 5.0);
      std::vector<Vector> us(static_cast<size_t>(L), Vector(sys.nu()));
      for (auto& u : us)
        for (Index i = 0; i < u.size(); ++i) u(i) = uniform(rng, -4.0, 4.0);
      const Trajectory tr = simulate_ss(sys, x0, us);
      const Matrix B = behavior_basis(sys, tr.s);
      const Index rank = numerical_rank(B, 1e-9);
      const Index expected = sys.nx() + sys.nu() * L + 1;
      if (rank != expected) ++bad;
      Json modes = Json::array();
      for (int s : tr.s) modes.push_back(s + 1);
      rows.push_back({{"L", L}, {"modes", modes}, {"rank", rank}, {"expected", expected}});
    }
  }
  r.pass = bad == 0;
  r.detail = std::to_string(rows.size() - static_cast<size_t>(bad)) + "/" + std::to_string(rows.size()) + " sequences at full rank";
  r.data = {{"seed", seed}, {"sequences", rows}};
  return r;
}

DeepcProblem random_instance(const PwaStateSpace& sys, const PwarxModel& model, int L, int rho,
                             int cols, bool affine, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> us(400, Vector(sys.nu()));
  for (auto& u : us)
    for (Index i = 0; i < u.size(); ++i) u(i) = uniform(rng, -4.0, 4.0);
  const Trajectory tr = simulate_ss(sys, Vector::Zero(sys.nx()), us);
  Dataset ds;
  ds.u = tr.u;
  ds.y = tr.y;
  ds.sigma = tr.s;
  label_with_pwarx(ds, model);
  auto locals = partition_dataset(ds, ds.s_true, model.mode_count(), WindowPolicy::Concatenated);
  const size_t keep = static_cast<size_t>(L + rho + cols - 1);
  for (auto& d : locals) {
    if (d.size() < keep) throw Error(ErrorCode::InsufficientData, "instance data too short");
    d.u.resize(keep);
    d.y.resize(keep);
    d.source.resize(keep);
    d.segment_starts = {0};
  }
  const MosaicBlocks b = build_mosaic_blocks(locals, L, rho);
  const size_t tau = static_cast<size_t>(rho) + rng() % (tr.size() - static_cast<size_t>(rho));
  const Vector z = past_window(tr.u, tr.y, tau, rho, sys.nu(), sys.ny());
  Vector ur(sys.nu() * L), yr(sys.ny() * L);
  for (Index i = 0; i < ur.size(); ++i) ur(i) = uniform(rng, -4.0, 4.0);
  for (Index i = 0; i < yr.size(); ++i) yr(i) = uniform(rng, -4.0, 4.0);
  DeepcConfig cfg;
  cfg.L = L;
  cfg.rho = rho;
  cfg.affine = affine;
  cfg.Q = Matrix::Identity(sys.ny(), sys.ny());
  cfg.R = Matrix::Identity(sys.nu(), sys.nu());
  return build_problem(b, z, ur, yr, cfg);
}

SuiteResult solver_oracle_suite(const PwaStateSpace& sys, const PwarxModel& model, int instances,
                                std::uint64_t seed, double rel_tol, double kkt_tol) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  r.name = "solver_oracle";
  Json rows = Json::array();
  int bad = 0;
  for (int k = 0; k < instances; ++k) {
    const int L = 2 + static_cast<int>(rng() % 2);
    const double l1 = uniform(rng, 0.1, 5.0);
    const double l2 = k % 2 == 0 ? 1e-9 : 1e-3;
    const double lam = uniform(rng, 0.1, 5.0);
    const DeepcProblem p = random_instance(sys, model, L, 1, 5, true, rng());
    const DeepcSolution se = solve_elastic(p, l1, l2);
    const OracleResult oe = elastic_enumeration_oracle(p, l1, l2);
    const DeepcSolution sc = solve_cap(p, lam);
    const OracleResult oc = cap_barrier_oracle(p, lam);
    const double fe = elastic_objective(p, se.g, l1, l2), fc = cap_objective(p, sc.g, lam);
    const double de = std::abs(fe - oe.objective) / std::max(1.0, std::abs(oe.objective));
    const double dc = std::abs(fc - oc.objective) / std::max(1.0, std::abs(oc.objective));
    const double ke = kkt_residual_elastic(p, se, l1, l2).max(), kc = kkt_residual_cap(p, sc, lam).max();
    const bool ok = de <= rel_tol && dc <= rel_tol && ke < kkt_tol && kc < kkt_tol;
    bad += !ok;
    rows.push_back({{"L", L}, {"n", p.n()}, {"lambda1", l1}, {"lambda2", l2}, {"lambda", lam},
                    {"elastic", fe}, {"elastic_oracle", oe.objective}, {"elastic_rel", de}, {"elastic_kkt", ke},
                    {"cap", fc}, {"cap_oracle", oc.objective}, {"cap_rel", dc}, {"cap_kkt", kc}, {"pass", ok}});
  }
  r.pass = bad == 0;
  r.detail = std::to_string(instances - bad) + "/" + std::to_string(instances) + " instances match";
  r.data = {{"seed", seed}, {"instances", rows}};
  return r;
}

namespace {

double group_norm(const DeepcProblem& p, const Vector& g, int i) {
  return g.segment(p.offsets[static_cast<size_t>(i)], p.group_size(i)).norm();
}

}  // namespace

SuiteResult shrink_threshold_suite(const PwaStateSpace& sys, const PwarxModel& model,
                                   int instances, std::uint64_t seed, double band,
                                   double zero_norm) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  r.name = "shrink_threshold";
  Json rows = Json::array();
  int bad = 0, built = 0;
  for (int attempt = 0; built < instances && attempt < 20 * instances; ++attempt) {
    const DeepcProblem p = random_instance(sys, model, 3, 1, 8, false, rng());
    // Coarse sweep for the first lambda where a single group is zero.
    double lo = -1, hi = -1;
    int iota = -1;
    for (double lam = 1e-3; lam <= 1e6; lam *= 1.5) {
      const DeepcSolution s = solve_cap(p, lam);
      int dead = -1, alive = 0;
      for (int i = 0; i < p.S; ++i) {
        if (group_norm(p, s.g, i) < zero_norm) dead = i;
        else ++alive;
      }
      if (dead >= 0 && alive > 0) {
        hi = lam;
        iota = dead;
        break;
      }
      lo = lam;
    }
    if (iota < 0 || lo < 0) continue;
    ++built;
    for (int it = 0; it < 60 && (hi - lo) > 1e-7 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (group_norm(p, solve_cap(p, mid).g, iota) < zero_norm ? hi : lo) = mid;
    }
    const DeepcSolution sd = solve_cap(p, hi);
    const double T = shrink_threshold(p, sd, hi, iota);
    const double above = group_norm(p, solve_cap(p, (1.0 + band) * T).g, iota);
    const double below = group_norm(p, solve_cap(p, (1.0 - band) * T).g, iota);
    const bool ok = above < zero_norm && below > zero_norm;
    bad += !ok;
    rows.push_back({{"mode", iota + 1}, {"bracket_lo", lo}, {"bracket_hi", hi}, {"threshold", T},
                    {"norm_above", above}, {"norm_below", below}, {"pass", ok}});
  }
  r.pass = bad == 0 && built == instances;
  r.detail = std::to_string(built - bad) + "/" + std::to_string(instances) + " instances bracket the threshold";
  r.data = {{"seed", seed}, {"band", band}, {"instances", rows}};
  return r;
}

Json suite_to_json(const SuiteResult& s) {
  return {{"name", s.name}, {"pass", s.pass}, {"detail", s.detail}, {"data", s.data}};
}

}  // namespace pwadeepc
