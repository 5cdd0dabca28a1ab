#include "pwadeepc/data_pipeline.hpp"

#include "pwadeepc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pwadeepc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  long lo = 1, hi = 0;  // empty when lo > hi
};

// Range-minimum over a fixed array, returning the leftmost argmin.
class SparseMin {
 public:
  explicit SparseMin(const std::vector<double>& v) : v_(v) {
    const size_t n = v.size();
    size_t levels = 1;
    while ((size_t{1} << levels) <= n) ++levels;
    table_.assign(levels, std::vector<int>(n));
    for (size_t i = 0; i < n; ++i) table_[0][i] = static_cast<int>(i);
    for (size_t l = 1; l < levels; ++l) {
      const size_t half = size_t{1} << (l - 1);
      for (size_t i = 0; i + (size_t{1} << l) <= n; ++i) {
        const int a = table_[l - 1][i], b = table_[l - 1][i + half];
        table_[l][i] = v_[static_cast<size_t>(b)] < v_[static_cast<size_t>(a)] ? b : a;
      }
    }
  }

  [[nodiscard]] int argmin(long lo, long hi) const {
    const size_t len = static_cast<size_t>(hi - lo + 1);
    size_t l = 0;
    while ((size_t{1} << (l + 1)) <= len) ++l;
    const int a = table_[l][static_cast<size_t>(lo)];
    const int b = table_[l][static_cast<size_t>(hi) + 1 - (size_t{1} << l)];
    return v_[static_cast<size_t>(b)] < v_[static_cast<size_t>(a)] ? b : a;
  }

 private:
  const std::vector<double>& v_;
  std::vector<std::vector<int>> table_;
};

struct ScalarMode {
  double a, b, f;
  Polyhedron region;
};

class GridDp {
 public:
  GridDp(const PwaStateSpace& sys, const OracleSettings& s, int x_points)
      : s_(s), n_(x_points), h_((s.x_max - s.x_min) / (x_points - 1)) {
    const auto& m0 = sys.mode(0);
    c_ = m0.C(0, 0);
    g_ = m0.g(0);
    for (int i = 0; i < sys.mode_count(); ++i) {
      const auto& m = sys.mode(i);
      modes_.push_back({m.A(0, 0), m.B(0, 0), m.f(0), sys.partition()[static_cast<size_t>(i)]});
    }
    reach_.assign(modes_.size(), std::vector<Interval>(static_cast<size_t>(n_)));
    for (size_t m = 0; m < modes_.size(); ++m)
      for (long j = 0; j < n_; ++j) reach_[m][static_cast<size_t>(j)] = reachable(m, grid(j));
  }

  [[nodiscard]] double grid(long j) const { return s_.x_min + static_cast<double>(j) * h_; }
  [[nodiscard]] double step() const { return h_; }

  // Successor grid indices reachable from x in mode m with an admissible input.
  [[nodiscard]] Interval reachable(size_t m, double x) const {
    const ScalarMode& md = modes_[m];
    double ulo = s_.u_min, uhi = s_.u_max;
    const Matrix& P = md.region.coefficients;
    for (Index r = 0; r < P.rows(); ++r) {
      const double ax = P(r, 0), au = P(r, 1), a0 = P(r, 2);
      const double rest = ax * x + a0;
      if (au > 0.0) {
        uhi = std::min(uhi, -rest / au);
      } else if (au < 0.0) {
        ulo = std::max(ulo, -rest / au);
      } else if (md.region.is_strict(r) ? !(rest < 0.0) : !(rest <= 0.0)) {
        return {};
      }
    }
    if (ulo > uhi) return {};
    double xa = md.a * x + md.f + md.b * ulo, xb = md.a * x + md.f + md.b * uhi;
    if (xa > xb) std::swap(xa, xb);
    Interval iv{static_cast<long>(std::ceil((xa - s_.x_min) / h_ - 1e-9)),
                static_cast<long>(std::floor((xb - s_.x_min) / h_ + 1e-9))};
    iv.lo = std::max(iv.lo, 0L);
    iv.hi = std::min(iv.hi, n_ - 1);
    return iv;
  }

  struct Decision {
    double value = kInf;
    long target = -1;
    size_t mode = 0;
  };

  // Optimal first move from x given reference samples r[1..H] (r[0] unused).
  [[nodiscard]] Decision solve(double x, const std::vector<double>& r) const {
    const int H = s_.horizon;
    std::vector<double> next(static_cast<size_t>(n_)), cur(static_cast<size_t>(n_));
    for (long j = 0; j < n_; ++j) {
      const double e = c_ * grid(j) + g_ - r[static_cast<size_t>(H)];
      next[static_cast<size_t>(j)] = e * e;
    }
    for (int k = H - 1; k >= 1; --k) {
      SparseMin rmq(next);
      for (long j = 0; j < n_; ++j) {
        double best = kInf;
        for (size_t m = 0; m < modes_.size(); ++m) {
          const Interval& iv = reach_[m][static_cast<size_t>(j)];
          if (iv.lo > iv.hi) continue;
          best = std::min(best, next[static_cast<size_t>(rmq.argmin(iv.lo, iv.hi))]);
        }
        const double e = c_ * grid(j) + g_ - r[static_cast<size_t>(k)];
        cur[static_cast<size_t>(j)] = e * e + best;
      }
      std::swap(cur, next);
    }
    SparseMin rmq(next);
    Decision d;
    for (size_t m = 0; m < modes_.size(); ++m) {
      const Interval iv = reachable(m, x);
      if (iv.lo > iv.hi) continue;
      const long j = rmq.argmin(iv.lo, iv.hi);
      if (next[static_cast<size_t>(j)] < d.value) d = {next[static_cast<size_t>(j)], j, m};
    }
    return d;
  }

  [[nodiscard]] double input_for(const Decision& d, double x) const {
    const ScalarMode& md = modes_[d.mode];
    const double u = (grid(d.target) - md.a * x - md.f) / md.b;
    return std::clamp(u, s_.u_min, s_.u_max);
  }

 private:
  OracleSettings s_;
  long n_;
  double h_;
  double c_ = 1.0, g_ = 0.0;
  std::vector<ScalarMode> modes_;
  std::vector<std::vector<Interval>> reach_;
};

void check_scalar_plant(const PwaStateSpace& sys) {
  if (sys.nx() != 1 || sys.nu() != 1 || sys.ny() != 1) {
    throw Error(ErrorCode::InvalidArgument, "oracle requires a scalar plant");
  }
  const auto& m0 = sys.mode(0);
  for (const auto& m : sys.modes()) {
    if (m.D(0, 0) != 0.0 || m.C(0, 0) != m0.C(0, 0) || m.g(0) != m0.g(0)) {
      throw Error(ErrorCode::InvalidArgument, "oracle requires D = 0 and a mode-independent output map");
    }
    if (m.B(0, 0) == 0.0) throw Error(ErrorCode::InvalidArgument, "oracle requires B != 0");
  }
}

}  // namespace

Dataset oracle_mpc_collect(const PwaStateSpace& sys, const std::vector<double>& reference,
                           size_t n, const OracleSettings& settings, const Vector& x0,
                           OracleStats* stats) {
  check_scalar_plant(sys);
  if (settings.horizon < 1 || settings.x_points < 3) {
    throw Error(ErrorCode::InvalidArgument, "oracle horizon and grid must be positive");
  }
  if (reference.size() < n + static_cast<size_t>(settings.horizon)) {
    throw Error(ErrorCode::TooShort, "reference shorter than N + horizon");
  }
  GridDp dp(sys, settings, settings.x_points);
  std::optional<GridDp> fine;
  if (settings.check_refinement && !settings.refinement_steps.empty()) {
    fine.emplace(sys, settings, 2 * settings.x_points - 1);
  }
  OracleStats st;
  st.x_points = settings.x_points;
  st.grid_step = dp.step();

  Dataset ds;
  Vector x = x0;
  std::vector<double> r(static_cast<size_t>(settings.horizon) + 1);
  for (size_t t = 0; t < n; ++t) {
    for (int k = 0; k <= settings.horizon; ++k) r[static_cast<size_t>(k)] = reference[t + static_cast<size_t>(k)];
    const auto d = dp.solve(x(0), r);
    if (d.target < 0) throw Error(ErrorCode::Infeasible, "oracle found no admissible move at t=" + std::to_string(t));
    if (fine && std::find(settings.refinement_steps.begin(), settings.refinement_steps.end(), t) !=
                    settings.refinement_steps.end()) {
      const auto df = fine->solve(x(0), r);
      // Near-exact tracking leaves only quantization residue in V; scale by the reference energy then.
      double energy = 0.0;
      for (int k = 1; k <= settings.horizon; ++k) energy += r[static_cast<size_t>(k)] * r[static_cast<size_t>(k)];
      const double rel = std::abs(d.value - df.value) / std::max({std::abs(d.value), energy, 1e-6});
      st.max_relative_refinement_change = std::max(st.max_relative_refinement_change, rel);
      ++st.refinement_checks;
      if (rel > settings.refinement_tol) {
        throw Error(ErrorCode::GridTooCoarse,
                    "DP value changed by " + std::to_string(rel * 100) + "% on refinement at t=" + std::to_string(t));
      }
    }
    Vector u = Vector::Constant(1, dp.input_for(d, x(0)));
    const StepResult sr = step_ss(sys, x, u);
    st.max_grid_landing_error = std::max(st.max_grid_landing_error, std::abs(sr.x_next(0) - dp.grid(d.target)));
    ds.u.push_back(u);
    ds.y.push_back(sr.y);
    ds.sigma.push_back(sr.mode);
    x = sr.x_next;
  }
  ds.s_true = ds.sigma;
  if (stats) *stats = st;
  return ds;
}

}  // namespace pwadeepc
