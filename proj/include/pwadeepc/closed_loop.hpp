#pragma once

#include "pwadeepc/deepc_solver.hpp"

#include <string>
#include <vector>

namespace pwadeepc {

/// Output and input references over T + L samples.
struct ReferenceCase {
  int id = 1;
  std::vector<Vector> u_ref, y_ref;
};

/// Input holding a scalar plant at output y in the mode whose region contains it.
double equilibrium_input(const PwaStateSpace& sys, double y);

/**
 * Piecewise-constant reference switching once at `switch_at`.
 * Case 1 goes from -level to +level, case 2 the other way round.
 */
ReferenceCase make_reference_case(const PwaStateSpace& sys, int id, double level, int switch_at,
                                  size_t length);

struct ClosedLoopRun {
  Scheme scheme = Scheme::Elastic;
  std::vector<Vector> u, y;        // applied input and measured output, T samples
  std::vector<Vector> x;           // plant state, T + 1 samples
  std::vector<int> mode;           // active plant mode at each step
  std::vector<Vector> u_ref, y_ref;
  std::vector<Vector> z_ini;
  std::vector<DeepcSolution> solutions;
  std::vector<double> lambda_weights;  // per-mode lambda_i (CAP)
  bool failed = false;
  std::string failure;

  [[nodiscard]] size_t steps() const { return u.size(); }
};

/// Past window [u_{t-rho..t-1}; y_{t-rho..t-1}], zero before time 0.
Vector past_window(const std::vector<Vector>& u, const std::vector<Vector>& y, size_t t, int rho,
                   Index nu, Index ny);

/**
 * Receding-horizon DeePC on the plant. A solver error stops the loop and the
 * partial run is returned with `failed` set.
 */
ClosedLoopRun run_receding_horizon(const PwaStateSpace& sys, const MosaicBlocks& blocks,
                                   const DeepcConfig& cfg, Scheme scheme,
                                   const std::vector<Vector>& u_ref,
                                   const std::vector<Vector>& y_ref, int T, const Vector& x0);

double rmse(const std::vector<Vector>& seq, const std::vector<Vector>& ref);

/// Number of entries with |g| > zero_tol * max(1, ||g||_inf).
int support_size(const Vector& g, double zero_tol = 1e-6);

/// Modes visited by the plant from x under the planned inputs.
std::vector<int> planned_modes(const PwaStateSpace& sys, const Vector& x, const Vector& u_f, Index nu);

/**
 * BPI_t^i = ||G_i||_0 / (nu n_t^i + nx [+1]). n_t^i counts mode-i samples in
 * the past window and the planned continuation. Zero denominators give +inf.
 */
std::vector<std::vector<double>> bpi(const PwaStateSpace& sys, const ClosedLoopRun& run, int rho,
                                     int L, double zero_tol = 1e-6);

struct MetricsReport {
  double rmse_u = 0.0, rmse_y = 0.0;
  std::vector<std::vector<double>> bpi;
  int infinite_bpi = 0;
};

MetricsReport compute_metrics(const PwaStateSpace& sys, const ClosedLoopRun& run, int rho, int L);

/// Per-step row of the misclassification cost ledger.
struct BoundRow {
  int t = 0;
  double lhs = 0.0, rhs = 0.0, slack = 0.0;
  double eta_g = 0.0, eta_ini = 0.0, eta_u = 0.0;
  double eps_hat = 0.0, delta_m = 0.0, phi_bar = 0.0;
  bool holds = false;
};

struct BoundLedger {
  Scheme scheme = Scheme::Elastic;
  std::vector<BoundRow> rows;
  bool all_hold = true;
  double min_slack = 0.0;
};

/**
 * Compare the attained regularized costs of a run on exactly clustered data
 * with one on estimated clusters. Bound parameters eta are the realized norms.
 */
BoundLedger misclassification_bound_check(const PwaStateSpace& sys, const ClosedLoopRun& exact,
                                          const ClosedLoopRun& miss, const MosaicBlocks& blocks_exact,
                                          const MosaicBlocks& blocks_miss, const DeepcConfig& cfg,
                                          Scheme scheme, double tol = 1e-6);

/// Realized tracking cost of u_f applied to the plant from x over L steps.
double realized_tracking_cost(const PwaStateSpace& sys, const Vector& x, const Vector& u_f,
                              const Vector& u_ref, const Vector& y_ref, const Matrix& Qbar,
                              const Matrix& Rbar);

Json run_to_json(const ClosedLoopRun& run, const MetricsReport& metrics, int rho);
std::string run_to_csv(const ClosedLoopRun& run, const MetricsReport& metrics);
Json ledger_to_json(const BoundLedger& ledger);

}  // namespace pwadeepc
