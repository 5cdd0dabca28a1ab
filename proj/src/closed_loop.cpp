#include "pwadeepc/closed_loop.hpp"

#include "pwadeepc/error.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace pwadeepc {

double equilibrium_input(const PwaStateSpace& sys, double y) {
  if (sys.nx() != 1 || sys.nu() != 1 || sys.ny() != 1) {
    throw Error(ErrorCode::InvalidArgument, "equilibrium inputs are implemented for scalar plants");
  }
  for (int i = 0; i < sys.mode_count(); ++i) {
    const AffineMode& m = sys.mode(i);
    const double c = m.C(0, 0);
    if (c == 0.0 || m.B(0, 0) == 0.0 || m.D(0, 0) != 0.0) continue;
    const double x = (y - m.g(0)) / c;
    const double u = ((1.0 - m.A(0, 0)) * x - m.f(0)) / m.B(0, 0);
    Vector xu(2);
    xu << x, u;
    if (sys.partition()[static_cast<size_t>(i)].contains(xu)) return u;
  }
  throw Error(ErrorCode::NoRegion, "no mode admits an equilibrium at y=" + std::to_string(y));
}

ReferenceCase make_reference_case(const PwaStateSpace& sys, int id, double level, int switch_at,
                                  size_t length) {
  if (id != 1 && id != 2) throw Error(ErrorCode::InvalidArgument, "reference case must be 1 or 2");
  const double first = id == 1 ? -level : level;
  ReferenceCase rc;
  rc.id = id;
  const double u_first = equilibrium_input(sys, first), u_second = equilibrium_input(sys, -first);
  for (size_t t = 0; t < length; ++t) {
    const bool before = static_cast<int>(t) < switch_at;
    rc.y_ref.push_back(Vector::Constant(1, before ? first : -first));
    rc.u_ref.push_back(Vector::Constant(1, before ? u_first : u_second));
  }
  return rc;
}

Vector past_window(const std::vector<Vector>& u, const std::vector<Vector>& y, size_t t, int rho,
                   Index nu, Index ny) {
  Vector z = Vector::Zero((nu + ny) * rho);
  for (int k = 0; k < rho; ++k) {
    const long s = static_cast<long>(t) - rho + k;
    if (s < 0) continue;
    z.segment(k * nu, nu) = u[static_cast<size_t>(s)];
    z.segment(nu * rho + k * ny, ny) = y[static_cast<size_t>(s)];
  }
  return z;
}

namespace {

Vector stack_window(const std::vector<Vector>& seq, size_t t, int L) {
  const Index d = seq.front().size();
  Vector out(d * L);
  for (int k = 0; k < L; ++k) out.segment(k * d, d) = seq[t + static_cast<size_t>(k)];
  return out;
}

std::vector<Vector> unstack(const Vector& v, Index d) {
  std::vector<Vector> out;
  for (Index k = 0; k < v.size() / d; ++k) out.emplace_back(v.segment(k * d, d));
  return out;
}

}  // namespace

ClosedLoopRun run_receding_horizon(const PwaStateSpace& sys, const MosaicBlocks& blocks,
                                   const DeepcConfig& cfg, Scheme scheme,
                                   const std::vector<Vector>& u_ref,
                                   const std::vector<Vector>& y_ref, int T, const Vector& x0) {
  if (T < 0) throw Error(ErrorCode::InvalidArgument, "T must be nonnegative");
  const size_t need = static_cast<size_t>(T + cfg.L);
  if (u_ref.size() < need || y_ref.size() < need) {
    throw Error(ErrorCode::TooShort, "references must cover T + L samples");
  }
  if (blocks.L != cfg.L || blocks.rho != cfg.rho) throw Error(ErrorCode::DimensionMismatch, "blocks and config disagree on L or rho");
  ClosedLoopRun run;
  run.scheme = scheme;
  run.u_ref.assign(u_ref.begin(), u_ref.begin() + static_cast<long>(need));
  run.y_ref.assign(y_ref.begin(), y_ref.begin() + static_cast<long>(need));
  run.x.push_back(x0);
  const Index nu = sys.nu(), ny = sys.ny();
  const DeepcSolution* warm = nullptr;
  for (int t = 0; t < T; ++t) {
    const size_t ts = static_cast<size_t>(t);
    const Vector z = past_window(run.u, run.y, ts, cfg.rho, nu, ny);
    DeepcSolution sol;
    try {
      const DeepcProblem p = build_problem(blocks, z, stack_window(run.u_ref, ts, cfg.L),
                                           stack_window(run.y_ref, ts, cfg.L), cfg);
      if (run.lambda_weights.empty()) {
        const Vector w = p.group_weights(cfg.lambda);
        run.lambda_weights.assign(w.data(), w.data() + w.size());
      }
      sol = scheme == Scheme::Elastic ? solve_elastic(p, cfg.lambda1, cfg.lambda2, cfg.elastic, warm)
                                      : solve_cap(p, cfg.lambda, cfg.cap, warm);
    } catch (const Error& e) {
      run.failed = true;
      run.failure = "t=" + std::to_string(t) + ": " + e.what();
      return run;
    }
    const Vector u = sol.u_f.head(nu);
    const StepResult r = step_ss(sys, run.x.back(), u);
    run.z_ini.push_back(z);
    run.u.push_back(u);
    run.y.push_back(r.y);
    run.mode.push_back(r.mode);
    run.x.push_back(r.x_next);
    run.solutions.push_back(std::move(sol));
    warm = &run.solutions.back();
  }
  return run;
}

double rmse(const std::vector<Vector>& seq, const std::vector<Vector>& ref) {
  if (seq.size() > ref.size()) throw Error(ErrorCode::DimensionMismatch, "reference shorter than sequence");
  if (seq.empty()) return 0.0;
  double s = 0.0;
  for (size_t t = 0; t < seq.size(); ++t) s += (seq[t] - ref[t]).squaredNorm();
  return std::sqrt(s / static_cast<double>(seq.size()));
}

int support_size(const Vector& g, double zero_tol) {
  if (g.size() == 0) return 0;
  const double thr = zero_tol * std::max(1.0, g.lpNorm<Eigen::Infinity>());
  int n = 0;
  for (Index j = 0; j < g.size(); ++j) n += std::abs(g(j)) > thr;
  return n;
}

std::vector<int> planned_modes(const PwaStateSpace& sys, const Vector& x, const Vector& u_f, Index nu) {
  const auto us = unstack(u_f, nu);
  return simulate_ss(sys, x, us).s;
}

std::vector<std::vector<double>> bpi(const PwaStateSpace& sys, const ClosedLoopRun& run, int rho,
                                     int L, double zero_tol) {
  const int S = sys.mode_count();
  const double extra = sys.is_piecewise_linear() ? 0.0 : 1.0;
  std::vector<std::vector<double>> out(static_cast<size_t>(S));
  // Modes before time 0: the plant at rest in the region containing the origin.
  const Vector rest = Vector::Zero(sys.nx() + sys.nu());
  const int rest_mode = first_region(sys.partition(), rest);
  for (size_t t = 0; t < run.solutions.size(); ++t) {
    std::vector<int> count(static_cast<size_t>(S), 0);
    for (int k = 0; k < rho; ++k) {
      const long s = static_cast<long>(t) - rho + k;
      ++count[static_cast<size_t>(s < 0 ? rest_mode : run.mode[static_cast<size_t>(s)])];
    }
    const DeepcSolution& sol = run.solutions[t];
    for (int m : planned_modes(sys, run.x[t], sol.u_f.head(sys.nu() * L), sys.nu())) ++count[static_cast<size_t>(m)];
    for (int i = 0; i < S; ++i) {
      const double den = static_cast<double>(sys.nu() * count[static_cast<size_t>(i)] + sys.nx()) + extra;
      const int nz = i < static_cast<int>(sol.G.size()) ? support_size(sol.G[static_cast<size_t>(i)], zero_tol) : 0;
      out[static_cast<size_t>(i)].push_back(den > 0 ? nz / den : std::numeric_limits<double>::infinity());
    }
  }
  return out;
}

MetricsReport compute_metrics(const PwaStateSpace& sys, const ClosedLoopRun& run, int rho, int L) {
  MetricsReport m;
  m.rmse_u = rmse(run.u, run.u_ref);
  m.rmse_y = rmse(run.y, run.y_ref);
  m.bpi = bpi(sys, run, rho, L);
  for (const auto& s : m.bpi)
    for (double v : s) m.infinite_bpi += std::isinf(v);
  return m;
}

double realized_tracking_cost(const PwaStateSpace& sys, const Vector& x, const Vector& u_f,
                              const Vector& u_ref, const Vector& y_ref, const Matrix& Qbar,
                              const Matrix& Rbar) {
  const Trajectory tr = simulate_ss(sys, x, unstack(u_f, sys.nu()));
  const Vector ey = stack(tr.y) - y_ref;
  const Vector eu = u_f - u_ref;
  return ey.dot(Qbar * ey) + eu.dot(Rbar * eu);
}

namespace {

// Selector entries placed at the dataset index of each column's first sample.
Vector embed(const MosaicBlocks& b, const Vector& g, Index N) {
  Vector out = Vector::Zero(N);
  Index c = 0;
  for (const auto& m : b.modes)
    for (size_t k = 0; k < m.column_source.size(); ++k, ++c) out(static_cast<Index>(m.column_source[k])) += g(c);
  return out;
}

Matrix embed_cols(const MosaicBlocks& b, const Matrix& F, Index N) {
  Matrix out = Matrix::Zero(F.rows(), N);
  Index c = 0;
  for (const auto& m : b.modes)
    for (size_t k = 0; k < m.column_source.size(); ++k, ++c) out.col(static_cast<Index>(m.column_source[k])) += F.col(c);
  return out;
}

Index source_extent(const MosaicBlocks& b) {
  Index n = 0;
  for (const auto& m : b.modes)
    for (size_t s : m.column_source) n = std::max(n, static_cast<Index>(s) + 1);
  return n;
}

}  // namespace

BoundLedger misclassification_bound_check(const PwaStateSpace& sys, const ClosedLoopRun& exact,
                                          const ClosedLoopRun& miss, const MosaicBlocks& blocks_exact,
                                          const MosaicBlocks& blocks_miss, const DeepcConfig& cfg,
                                          Scheme scheme, double tol) {
  if (exact.scheme != scheme || miss.scheme != scheme) throw Error(ErrorCode::InvalidArgument, "runs use a different scheme");
  const size_t T = std::min(exact.steps(), miss.steps());
  if (exact.failed || miss.failed || exact.solutions.size() < T || miss.solutions.size() < T || T == 0) {
    throw Error(ErrorCode::MissingSolution, "both runs need a solution at every step");
  }
  const int L = cfg.L, rho = cfg.rho;
  const Index nu = sys.nu();
  const Matrix Qbar = [&] {
    Matrix q = Matrix::Zero(sys.ny() * L, sys.ny() * L);
    for (int k = 0; k < L; ++k) q.block(k * sys.ny(), k * sys.ny(), sys.ny(), sys.ny()) = cfg.Q;
    return q;
  }();
  const Matrix Rbar = [&] {
    Matrix r = Matrix::Zero(nu * L, nu * L);
    for (int k = 0; k < L; ++k) r.block(k * nu, k * nu, nu, nu) = cfg.R;
    return r;
  }();
  const double phi = std::max(Eigen::SelfAdjointEigenSolver<Matrix>(cfg.Q).eigenvalues().maxCoeff(),
                              Eigen::SelfAdjointEigenSolver<Matrix>(cfg.R).eigenvalues().maxCoeff());

  const Matrix YF = blocks_exact.YF(), UF = blocks_exact.UF();
  const Matrix YFh = blocks_miss.YF(), UFh = blocks_miss.UF();
  const Index N = std::max(source_extent(blocks_exact), source_extent(blocks_miss));
  const double nYF = spectral_norm(YF), nUFh = spectral_norm(UFh);
  const double nDYF = spectral_norm(embed_cols(blocks_exact, YF, N) - embed_cols(blocks_miss, YFh, N));
  const Matrix Phi = subspace_predictor(blocks_exact).Phi;

  auto regularizer = [&](const ClosedLoopRun& run, const Vector& g) {
    if (scheme == Scheme::Elastic) return elastic_regularizer(g, cfg.lambda1, cfg.lambda2);
    double r = 0.0;
    Index off = 0;
    const auto& mb = &run == &exact ? blocks_exact : blocks_miss;
    for (int i = 0; i < mb.mode_count(); ++i) {
      const Index c = mb.modes[static_cast<size_t>(i)].cols();
      r += cfg.lambda * std::sqrt(static_cast<double>(c)) * g.segment(off, c).norm();
      off += c;
    }
    return r;
  };
  double lambda_bar = 0.0;
  for (const auto& m : blocks_exact.modes) lambda_bar = std::max(lambda_bar, cfg.lambda * std::sqrt(static_cast<double>(m.cols())));

  const Vector rest = Vector::Zero(sys.nx() + nu);
  const int rest_mode = first_region(sys.partition(), rest);

  BoundLedger led;
  led.scheme = scheme;
  led.min_slack = std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < T; ++t) {
    const DeepcSolution& s = exact.solutions[t];
    const DeepcSolution& sh = miss.solutions[t];
    const Vector uref = stack(std::vector<Vector>(exact.u_ref.begin() + static_cast<long>(t), exact.u_ref.begin() + static_cast<long>(t) + L));
    const Vector yref = stack(std::vector<Vector>(exact.y_ref.begin() + static_cast<long>(t), exact.y_ref.begin() + static_cast<long>(t) + L));

    BoundRow row;
    row.t = static_cast<int>(t);
    row.lhs = realized_tracking_cost(sys, exact.x[t], s.u_f, uref, yref, Qbar, Rbar) + regularizer(exact, s.g);
    const double jhat = realized_tracking_cost(sys, miss.x[t], sh.u_f, uref, yref, Qbar, Rbar) + regularizer(miss, sh.g);

    row.eta_g = (embed(blocks_miss, sh.g, N) - embed(blocks_exact, s.g, N)).lpNorm<1>();
    row.eta_ini = (exact.z_ini[t] - miss.z_ini[t]).squaredNorm();
    row.eta_u = (s.u_f - sh.u_f).squaredNorm();
    row.eps_hat = (sh.y_pred - yref).squaredNorm() + (sh.u_f - uref).squaredNorm();

    std::vector<int> modes;
    for (int k = 0; k < rho; ++k) {
      const long i = static_cast<long>(t) - rho + k;
      modes.push_back(i < 0 ? rest_mode : exact.mode[static_cast<size_t>(i)]);
    }
    for (int m : planned_modes(sys, exact.x[t], s.u_f, nu)) modes.push_back(m);
    const Matrix dM = true_multistep_map(sys, modes, rho, L) - Phi;
    row.delta_m = spectral_norm(dM);
    row.phi_bar = phi;

    const double dm2 = row.delta_m * row.delta_m;
    const double c1 = 16.0 * phi * dm2;
    const double c2 = phi * (16.0 * dm2 + 2.0);
    const double gh2 = sh.g.squaredNorm();
    double rhs = jhat + c1 * (row.eta_ini + miss.z_ini[t].squaredNorm()) + c2 * row.eta_u +
                 2.0 * phi * row.eps_hat + 8.0 * phi * dm2;
    const double c4 = phi * (16.0 * dm2 * nUFh * nUFh + 8.0 * nDYF * nDYF);
    if (scheme == Scheme::Elastic) {
      rhs += (16.0 * phi * nYF * nYF + 2.0 * cfg.lambda2) * row.eta_g * row.eta_g +
             (c4 + cfg.lambda2) * gh2 + cfg.lambda1 * row.eta_g;
    } else {
      rhs += 16.0 * phi * nYF * nYF * row.eta_g * row.eta_g + c4 * gh2 +
             lambda_bar * (row.eta_g + sh.g.lpNorm<1>());
    }
    row.rhs = rhs;
    row.slack = rhs - row.lhs;
    row.holds = row.slack >= -tol;
    led.all_hold = led.all_hold && row.holds;
    led.min_slack = std::min(led.min_slack, row.slack);
    led.rows.push_back(row);
  }
  return led;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Json seq_json(const std::vector<Vector>& s) {
  Json j = Json::array();
  for (const auto& v : s) j.push_back(v.size() == 1 ? Json(v(0)) : vector_to_json(v));
  return j;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json run_to_json(const ClosedLoopRun& run, const MetricsReport& metrics, int rho) {
  Json j;
  j["scheme"] = to_string(run.scheme);
  j["rho"] = rho;
  j["T"] = run.steps();
  j["failed"] = run.failed;
  j["failure"] = run.failure;
  j["u"] = seq_json(run.u);
  j["y"] = seq_json(run.y);
  j["u_ref"] = seq_json(std::vector<Vector>(run.u_ref.begin(), run.u_ref.begin() + static_cast<long>(run.steps())));
  j["y_ref"] = seq_json(std::vector<Vector>(run.y_ref.begin(), run.y_ref.begin() + static_cast<long>(run.steps())));
  Json modes = Json::array();
  for (int m : run.mode) modes.push_back(m + 1);
  j["mode"] = modes;
  j["lambda_weights"] = run.lambda_weights;
  Json steps = Json::array();
  for (const auto& s : run.solutions) {
    Json st;
    Json supp = Json::array();
    for (const auto& G : s.G) {
      Json idx = Json::array();
      const double thr = 1e-6 * std::max(1.0, G.lpNorm<Eigen::Infinity>());
      for (Index k = 0; k < G.size(); ++k)
        if (std::abs(G(k)) > thr) idx.push_back(k);
      supp.push_back(idx);
    }
    st["support"] = supp;
    st["objective"] = s.objective;
    st["tracking"] = s.tracking;
    st["regularizer"] = s.regularizer;
    st["kkt_max"] = s.kkt.max();
    st["iterations"] = s.iterations;
    st["method"] = s.method;
    steps.push_back(st);
  }
  j["steps"] = steps;
  Json bp = Json::array();
  for (const auto& s : metrics.bpi) {
    Json a = Json::array();
    for (double v : s) a.push_back(finite_or_null(v));
    bp.push_back(a);
  }
  j["metrics"] = {{"rmse_u", metrics.rmse_u}, {"rmse_y", metrics.rmse_y}, {"bpi", bp},
                  {"infinite_bpi", metrics.infinite_bpi}};
  return j;
}

std::string run_to_csv(const ClosedLoopRun& run, const MetricsReport& metrics) {
  std::string out = "t,u,u_ref,y,y_ref,mode";
  for (size_t i = 0; i < metrics.bpi.size(); ++i) out += ",BPI_" + std::to_string(i + 1);
  out += "\n";
  for (size_t t = 0; t < run.steps(); ++t) {
    out += std::to_string(t) + "," + fmt(run.u[t](0)) + "," + fmt(run.u_ref[t](0)) + "," + fmt(run.y[t](0)) +
           "," + fmt(run.y_ref[t](0)) + "," + std::to_string(run.mode[t] + 1);
    for (const auto& s : metrics.bpi) out += "," + (t < s.size() ? fmt(s[t]) : std::string());
    out += "\n";
  }
  return out;
}

Json ledger_to_json(const BoundLedger& ledger) {
  Json j;
  j["scheme"] = to_string(ledger.scheme);
  j["all_hold"] = ledger.all_hold;
  j["min_slack"] = finite_or_null(ledger.min_slack);
  Json rows = Json::array();
  for (const auto& r : ledger.rows) {
    rows.push_back({{"t", r.t}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"slack", r.slack}, {"eta_g", r.eta_g},
                    {"eta_ini", r.eta_ini}, {"eta_u", r.eta_u}, {"eps_hat", r.eps_hat},
                    {"delta_m", r.delta_m}, {"phi_bar", r.phi_bar}, {"holds", r.holds}});
  }
  j["rows"] = rows;
  return j;
}

}  // namespace pwadeepc
