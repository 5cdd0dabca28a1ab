#include "pwadeepc/pwa_system.hpp"

#include "pwadeepc/error.hpp"

#include <algorithm>
#include <string>

namespace pwadeepc {

Polyhedron::Polyhedron(Matrix coeffs, std::vector<bool> strict_rows)
    : coefficients(std::move(coeffs)), strict(std::move(strict_rows)) {
  if (!strict.empty() && static_cast<Index>(strict.size()) != coefficients.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "strict flags do not match polyhedron rows");
  }
  if (coefficients.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "polyhedron needs an affine column");
  }
}

bool Polyhedron::is_strict(Index row) const {
  return !strict.empty() && strict[static_cast<size_t>(row)];
}

bool Polyhedron::contains(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != dim()) {
    throw Error(ErrorCode::DimensionMismatch, "point dimension " + std::to_string(z.size()) +
                                                  " vs polyhedron " + std::to_string(dim()));
  }
  const Index d = dim();
  for (Index r = 0; r < rows(); ++r) {
    const double v = coefficients.row(r).head(d).dot(z) + coefficients(r, d);
    if (is_strict(r) ? !(v < 0.0) : !(v <= 0.0)) return false;
  }
  return true;
}

PwaStateSpace::PwaStateSpace(std::vector<AffineMode> modes, std::vector<Polyhedron> partition)
    : modes_(std::move(modes)), partition_(std::move(partition)) {
  if (modes_.empty()) throw Error(ErrorCode::InvalidArgument, "system has no modes");
  if (modes_.size() != partition_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one polyhedron per mode required");
  }
  nx_ = modes_[0].A.rows();
  nu_ = modes_[0].B.cols();
  ny_ = modes_[0].C.rows();
  for (auto& m : modes_) {
    if (m.f.size() == 0) m.f = Vector::Zero(nx_);
    if (m.g.size() == 0) m.g = Vector::Zero(ny_);
    if (m.D.size() == 0) m.D = Matrix::Zero(ny_, nu_);
    const bool ok = m.A.rows() == nx_ && m.A.cols() == nx_ && m.B.rows() == nx_ &&
                    m.B.cols() == nu_ && m.C.rows() == ny_ && m.C.cols() == nx_ &&
                    m.D.rows() == ny_ && m.D.cols() == nu_ && m.f.size() == nx_ &&
                    m.g.size() == ny_;
    if (!ok) throw Error(ErrorCode::DimensionMismatch, "inconsistent mode matrices");
  }
  for (const auto& p : partition_) {
    if (p.dim() != nx_ + nu_) {
      throw Error(ErrorCode::DimensionMismatch, "partition must live in (x, u) space");
    }
  }
}

bool PwaStateSpace::is_piecewise_linear() const {
  return std::all_of(modes_.begin(), modes_.end(),
                     [](const AffineMode& m) { return m.f.isZero(0.0) && m.g.isZero(0.0); });
}

std::vector<int> containing_regions(std::span<const Polyhedron> partition,
                                    const Eigen::Ref<const Vector>& z) {
  std::vector<int> out;
  for (size_t i = 0; i < partition.size(); ++i) {
    if (partition[i].contains(z)) out.push_back(static_cast<int>(i));
  }
  return out;
}

int first_region(std::span<const Polyhedron> partition, const Eigen::Ref<const Vector>& z,
                 TieRule) {
  for (size_t i = 0; i < partition.size(); ++i) {
    if (partition[i].contains(z)) return static_cast<int>(i);
  }
  throw Error(ErrorCode::NoRegion, "point lies outside every polyhedron");
}

int active_mode_ss(const PwaStateSpace& sys, const Vector& x, const Vector& u, TieRule tie_rule) {
  if (x.size() != sys.nx() || u.size() != sys.nu()) {
    throw Error(ErrorCode::DimensionMismatch, "state/input size mismatch");
  }
  Vector z(sys.nx() + sys.nu());
  z << x, u;
  return first_region(sys.partition(), z, tie_rule);
}

StepResult step_ss(const PwaStateSpace& sys, const Vector& x, const Vector& u) {
  const int s = active_mode_ss(sys, x, u);
  const AffineMode& m = sys.mode(s);
  return {m.A * x + m.B * u + m.f, m.C * x + m.D * u + m.g, s};
}

Trajectory simulate_ss(const PwaStateSpace& sys, const Vector& x0, std::span<const Vector> u_seq) {
  Trajectory tr;
  Vector x = x0;
  for (size_t t = 0; t < u_seq.size(); ++t) {
    StepResult r;
    try {
      r = step_ss(sys, x, u_seq[t]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoRegion) throw;
      throw Error(ErrorCode::NoRegion, "no region at t=" + std::to_string(t));
    }
    tr.x.push_back(x);
    tr.u.push_back(u_seq[t]);
    tr.y.push_back(r.y);
    tr.s.push_back(r.mode);
    x = r.x_next;
  }
  tr.x.push_back(x);
  return tr;
}

PwarxModel::PwarxModel(Index ny, Index nu, int lag, std::vector<ArxCoefficients> modes,
                       std::vector<Polyhedron> partition)
    : ny_(ny), nu_(nu), lag_(lag), modes_(std::move(modes)), partition_(std::move(partition)) {
  if (modes_.empty()) throw Error(ErrorCode::InvalidArgument, "model has no modes");
  if (modes_.size() != partition_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one polyhedron per mode required");
  }
  for (auto& m : modes_) {
    na_ = std::max(na_, static_cast<int>(m.a.size()));
    nb_ = std::max(nb_, static_cast<int>(m.b.size()) - 1);
    if (m.c.size() == 0) m.c = Vector::Zero(ny_);
    for (const auto& a : m.a)
      if (a.rows() != ny_ || a.cols() != ny_)
        throw Error(ErrorCode::DimensionMismatch, "a_j must be ny x ny");
    for (const auto& b : m.b)
      if (b.rows() != ny_ || b.cols() != nu_)
        throw Error(ErrorCode::DimensionMismatch, "b_j must be ny x nu");
    if (m.c.size() != ny_) throw Error(ErrorCode::DimensionMismatch, "c must have ny entries");
  }
  if (lag_ < std::max(na_, nb_) || lag_ < 1) {
    throw Error(ErrorCode::InvalidArgument, "lag smaller than model orders");
  }
  for (const auto& p : partition_) {
    if (p.dim() != regressor_dim()) {
      throw Error(ErrorCode::DimensionMismatch, "partition must live in regressor space");
    }
  }
}

Vector make_regressor(std::span<const Vector> y_hist, std::span<const Vector> u_hist) {
  std::vector<Vector> parts(y_hist.begin(), y_hist.end());
  parts.insert(parts.end(), u_hist.begin(), u_hist.end());
  return stack(parts);
}

int pwarx_active_mode(const PwarxModel& model, std::span<const Vector> y_hist,
                      std::span<const Vector> u_hist, TieRule tie_rule) {
  if (static_cast<int>(y_hist.size()) != model.lag() ||
      static_cast<int>(u_hist.size()) != model.lag() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "history length must match the lag");
  }
  return first_region(model.partition(), make_regressor(y_hist, u_hist), tie_rule);
}

PwarxPrediction pwarx_predict(const PwarxModel& model, std::span<const Vector> y_hist,
                              std::span<const Vector> u_past, const Vector& u_t) {
  const int lag = model.lag();
  if (static_cast<int>(u_past.size()) != lag) {
    throw Error(ErrorCode::DimensionMismatch, "input history length must match the lag");
  }
  std::vector<Vector> u_hist(u_past.begin(), u_past.end());
  u_hist.push_back(u_t);
  const int s = pwarx_active_mode(model, y_hist, u_hist);
  const ArxCoefficients& m = model.mode(s);
  Vector y = m.c;
  for (size_t j = 1; j <= m.a.size(); ++j) y -= m.a[j - 1] * y_hist[static_cast<size_t>(lag) - j];
  for (size_t j = 0; j < m.b.size(); ++j) y += m.b[j] * u_hist[static_cast<size_t>(lag) - j];
  return {y, s};
}

namespace {

// Fill a window of `lag` past samples ending before index t, padding with `init` then zeros.
std::vector<Vector> window(const std::vector<Vector>& seq, std::span<const Vector> init, long t,
                           int lag, Index dim) {
  std::vector<Vector> w;
  w.reserve(static_cast<size_t>(lag));
  for (long k = t - lag; k < t; ++k) {
    if (k >= 0) {
      w.push_back(seq[static_cast<size_t>(k)]);
    } else {
      const long idx = static_cast<long>(init.size()) + k;
      w.push_back(idx >= 0 ? init[static_cast<size_t>(idx)] : Vector::Zero(dim));
    }
  }
  return w;
}

}  // namespace

Trajectory simulate_pwarx(const PwarxModel& model, std::span<const Vector> u_seq,
                          std::span<const Vector> y_init, std::span<const Vector> u_init) {
  Trajectory tr;
  std::vector<Vector> us(u_seq.begin(), u_seq.end());
  for (size_t t = 0; t < u_seq.size(); ++t) {
    const long tt = static_cast<long>(t);
    auto yh = window(tr.y, y_init, tt, model.lag(), model.ny());
    auto uh = window(us, u_init, tt, model.lag(), model.nu());
    PwarxPrediction p;
    try {
      p = pwarx_predict(model, yh, uh, u_seq[t]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoRegion) throw;
      throw Error(ErrorCode::NoRegion, "no region at t=" + std::to_string(t));
    }
    tr.u.push_back(u_seq[t]);
    tr.y.push_back(p.y);
    tr.s.push_back(p.mode);
  }
  return tr;
}

std::vector<int> pwarx_labels(const PwarxModel& model, std::span<const Vector> u,
                              std::span<const Vector> y) {
  if (u.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "u and y lengths differ");
  std::vector<Vector> us(u.begin(), u.end()), ys(y.begin(), y.end());
  std::vector<int> labels;
  labels.reserve(u.size());
  for (size_t t = 0; t < u.size(); ++t) {
    const long tt = static_cast<long>(t);
    auto yh = window(ys, {}, tt, model.lag(), model.ny());
    auto uh = window(us, {}, tt, model.lag(), model.nu());
    uh.push_back(us[t]);
    labels.push_back(pwarx_active_mode(model, yh, uh));
  }
  return labels;
}

MultistepMap multistep_map(const PwaStateSpace& sys, std::span<const int> mode_seq) {
  const Index L = static_cast<Index>(mode_seq.size());
  const Index nx = sys.nx(), nu = sys.nu(), ny = sys.ny();
  MultistepMap m{Matrix::Zero(ny * L, nx), Matrix::Zero(ny * L, nu * L), Vector::Zero(ny * L)};
  // State after k steps: x_k = Phi x0 + Gam u + d.
  Matrix Phi = Matrix::Identity(nx, nx);
  Matrix Gam = Matrix::Zero(nx, nu * L);
  Vector d = Vector::Zero(nx);
  for (Index k = 0; k < L; ++k) {
    const int s = mode_seq[static_cast<size_t>(k)];
    if (s < 0 || s >= sys.mode_count()) throw Error(ErrorCode::InvalidArgument, "mode out of range");
    const AffineMode& am = sys.mode(s);
    m.O.middleRows(k * ny, ny) = am.C * Phi;
    m.T.middleRows(k * ny, ny) = am.C * Gam;
    m.T.block(k * ny, k * nu, ny, nu) += am.D;
    m.c.segment(k * ny, ny) = am.C * d + am.g;
    Phi = am.A * Phi;
    Gam = am.A * Gam;
    Gam.middleCols(k * nu, nu) += am.B;
    d = am.A * d + am.f;
  }
  return m;
}

Matrix behavior_basis(const PwaStateSpace& sys, std::span<const int> mode_seq) {
  const Index L = static_cast<Index>(mode_seq.size());
  const Index nx = sys.nx(), nu = sys.nu(), ny = sys.ny();
  const MultistepMap m = multistep_map(sys, mode_seq);
  Matrix B = Matrix::Zero((ny + nu + 1) * L, nx + nu * L + 1);
  B.topLeftCorner(ny * L, nx) = m.O;
  B.block(0, nx, ny * L, nu * L) = m.T;
  B.block(0, nx + nu * L, ny * L, 1) = m.c;
  B.block(ny * L, nx, nu * L, nu * L).setIdentity();
  B.block((ny + nu) * L, nx + nu * L, L, 1).setOnes();
  return B;
}

bool mode_sequence_realized(const PwaStateSpace& sys, const Trajectory& traj) {
  if (traj.x.size() < traj.u.size()) return false;
  for (size_t t = 0; t < traj.u.size(); ++t) {
    if (active_mode_ss(sys, traj.x[t], traj.u[t]) != traj.s[t]) return false;
  }
  return true;
}

PwaStateSpace make_example_system() {
  auto mode = [](double a, double b) {
    AffineMode m;
    m.A = Matrix::Constant(1, 1, a);
    m.B = Matrix::Constant(1, 1, b);
    m.C = Matrix::Identity(1, 1);
    m.D = Matrix::Zero(1, 1);
    m.f = Vector::Zero(1);
    m.g = Vector::Zero(1);
    return m;
  };
  Matrix neg(1, 3), pos(1, 3);
  neg << 1.0, 0.0, 0.0;   // x < 0
  pos << -1.0, 0.0, 0.0;  // -x <= 0
  return PwaStateSpace({mode(-0.3, 1.4), mode(0.9, 0.15)},
                       {Polyhedron(neg, {true}), Polyhedron(pos, {false})});
}

PwarxModel make_example_pwarx(int lag) {
  if (lag < 1) throw Error(ErrorCode::InvalidArgument, "lag must be at least 1");
  auto mode = [](double a1, double b1) {
    ArxCoefficients m;
    m.a = {Matrix::Constant(1, 1, a1)};
    m.b = {Matrix::Zero(1, 1), Matrix::Constant(1, 1, b1)};
    m.c = Vector::Zero(1);
    return m;
  };
  const Index dim = 2 * lag + 1;
  const Index y_last = lag - 1;  // position of y_{t-1} in the regressor
  Matrix neg = Matrix::Zero(1, dim + 1), pos = Matrix::Zero(1, dim + 1);
  neg(0, y_last) = 1.0;
  pos(0, y_last) = -1.0;
  return PwarxModel(1, 1, lag, {mode(0.3, 1.4), mode(-0.9, 0.15)},
                    {Polyhedron(neg, {true}), Polyhedron(pos, {false})});
}

}  // namespace pwadeepc
