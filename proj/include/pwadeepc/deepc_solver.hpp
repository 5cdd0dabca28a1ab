#pragma once

#include "pwadeepc/behavior_matrices.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pwadeepc {

enum class Scheme { Elastic, Cap };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct ElasticSettings {
  int max_active_set_iter = 5000;
  double tol = 1e-10;          // relative optimality tolerance of the active-set method
  int admm_max_iter = 50000;   // fallback splitting
  double admm_tol = 1e-9;
};

struct CapSettings {
  double rho_scale = 1.0;  // penalty = rho_scale * mean diagonal of the quadratic term
  double relaxation = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 50000;
  bool polish = true;
  int newton_max_iter = 100;
};

struct DeepcConfig {
  int L = 19;
  int rho = 25;
  Matrix Q = Matrix::Identity(1, 1);
  Matrix R = Matrix::Identity(1, 1);
  double lambda1 = 10.0;
  double lambda2 = 1e-9;
  double lambda = 10.0;
  bool affine = true;  // sum-to-one rows 1'G_i = 1
  std::optional<Vector> u_min, u_max, y_min, y_max;
  ElasticSettings elastic;
  CapSettings cap;
};

/**
 * @brief Selector-only DeePC problem
 *   min ||U_F g - u_ref||^2_R + ||Y_F g - y_ref||^2_Q + r(g)
 *   s.t. sum_i Zt_i G_i = zt_ini, sum_i Gamma_i G_i <= gamma.
 */
struct DeepcProblem {
  int S = 0, L = 0, rho = 0;
  Index nu = 0, ny = 0;
  bool affine = true;
  std::vector<Matrix> Zt;  // [Z_P^i; I_i]
  std::vector<Matrix> UF, YF;
  std::vector<Matrix> Gamma;
  Vector gamma;
  Vector z_ini, zt_ini;
  Vector u_ref, y_ref;
  Matrix Qbar, Rbar;
  std::vector<Index> offsets;  // first column of each group, plus the total

  // Stacked forms over all groups.
  Matrix A;       // equality rows
  Matrix Gam;     // inequality rows
  Matrix M;       // [U_F; Y_F]
  Matrix Wt;      // blkdiag(2 Rbar, 2 Qbar): quadratic part is 0.5 g' M' Wt M g
  Vector q;       // linear term
  double c0 = 0;  // constant term

  [[nodiscard]] Index n() const { return offsets.back(); }
  [[nodiscard]] Index group_size(int i) const { return offsets[static_cast<size_t>(i) + 1] - offsets[static_cast<size_t>(i)]; }
  [[nodiscard]] Matrix WF(int i) const;
  /// lambda_i = lambda * sqrt(group size).
  [[nodiscard]] Vector group_weights(double lambda) const;
  [[nodiscard]] std::vector<Vector> split(const Vector& g) const;
  [[nodiscard]] double tracking_cost(const Vector& g) const;
  /// Gradient of the tracking cost: H g + q.
  [[nodiscard]] Vector tracking_gradient(const Vector& g) const;
  /// c_{!=i}: gradient contribution to group i of all other groups and the references.
  [[nodiscard]] Vector c_not(int i, const Vector& g) const;
};

DeepcProblem build_problem(const MosaicBlocks& blocks, const Vector& z_ini, const Vector& u_ref,
                           const Vector& y_ref, const DeepcConfig& cfg);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_equality = 0.0;
  double primal_inequality = 0.0;
  double complementarity = 0.0;
  double dual_feasibility = 0.0;
  double zero_group = 0.0;  // CAP: max(0, ||c + Z'a|| - lambda_i) over zero groups

  [[nodiscard]] double max() const;
};

struct DeepcSolution {
  std::vector<Vector> G;
  Vector g;
  Vector u_f;
  Vector y_pred;
  Vector alpha;  // equality multipliers (one per row of A)
  Vector mu;     // inequality multipliers (one per row of Gam)
  std::vector<int> active_inequalities;
  KktResiduals kkt;
  int iterations = 0;
  double tracking = 0.0;
  double regularizer = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::string method;
};

double elastic_regularizer(const Vector& g, double lambda1, double lambda2);
double cap_regularizer(const DeepcProblem& p, const Vector& g, double lambda);

/// Elastic-net DeePC by a primal active-set method on the sign pattern.
DeepcSolution solve_elastic(const DeepcProblem& p, double lambda1, double lambda2,
                            const ElasticSettings& s = {}, const DeepcSolution* warm = nullptr);

/// Group-lasso DeePC by operator splitting with an exact group active-set polish.
DeepcSolution solve_cap(const DeepcProblem& p, double lambda, const CapSettings& s = {},
                        const DeepcSolution* warm = nullptr);

KktResiduals kkt_residual_elastic(const DeepcProblem& p, const DeepcSolution& sol, double lambda1,
                                  double lambda2);
KktResiduals kkt_residual_cap(const DeepcProblem& p, const DeepcSolution& sol, double lambda);

/**
 * Smallest lambda at which group `iota` stays at zero, evaluated at `sol`.
 * Throws InvalidArgument for S = 1 and SingularWbar when the reduced system is singular.
 */
double shrink_threshold(const DeepcProblem& p, const DeepcSolution& sol, double lambda, int iota);

/// Affine law G = F zt_ini + e valid on {zt : E [zt; 1] <= 0}.
struct ExplicitRegion {
  Matrix F;
  Vector e;
  Matrix E;
  std::vector<Matrix> F_group;  // row blocks of F per mode
  std::vector<Vector> e_group;
};

/// `signs` holds -1/0/+1 per entry of g; `active` lists active inequality rows.
ExplicitRegion explicit_elastic_coefficients(const DeepcProblem& p, double lambda1, double lambda2,
                                             const std::vector<int>& active,
                                             const std::vector<int>& signs);

std::vector<int> sign_pattern(const Vector& g, double tol = 0.0);

Json problem_to_json(const DeepcProblem& p);
Json solution_to_json(const DeepcSolution& s);

}  // namespace pwadeepc
