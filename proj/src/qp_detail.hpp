#pragma once

#include "pwadeepc/deepc_solver.hpp"

#include <functional>
#include <vector>

namespace pwadeepc::detail {

/// Linearly independent subset of equality rows; throws Infeasible if the dropped rows disagree.
struct EqualityRows {
  std::vector<Index> rows;
  Matrix A;
  Vector b;
};

EqualityRows independent_rows(const Matrix& A, const Vector& b, double tol = 1e-10);

/// Solves (D + U C U') x = r with D diagonal and positive.
class DiagLowRank {
 public:
  DiagLowRank(const Vector& d, Matrix U, const Matrix& C);
  /// Same operator given the capacitance K = C^{-1} + U'D^{-1}U directly.
  static DiagLowRank from_capacitance(const Vector& d, Matrix U, const Matrix& K);
  [[nodiscard]] Matrix solve(const Matrix& r) const;
  [[nodiscard]] bool ok() const { return ok_; }

 private:
  Vector dinv_;
  Matrix U_, CUt_, DinvU_;
  Eigen::PartialPivLU<Matrix> inner_;
  bool ok_ = true;

  DiagLowRank() = default;
};

/// Equality-constrained solve with the Schur complement of a DiagLowRank operator.
class EqualitySolver {
 public:
  EqualitySolver(const DiagLowRank& P, const Matrix& C);
  /// Minimizer of 0.5 x'Px - r'x subject to C x = d, with multipliers nu (P x + C' nu = r).
  Vector solve(const Vector& r, const Vector& d, Vector* nu = nullptr) const;

 private:
  const DiagLowRank* P_;
  Matrix C_, X_;
  Eigen::PartialPivLU<Matrix> schur_;
};

struct AdmmOptions {
  double rho_scale = 1.0;
  double relaxation = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 50000;
};

struct AdmmResult {
  Vector z;     // sparse iterate
  Vector w;     // slack of the inequality rows
  Vector y2;    // scaled inequality dual
  double rho = 1.0;
  int iterations = 0;
  bool converged = false;
};

/// prox(v, t) returns argmin_z r(z) + 1/(2t) ||z - v||^2.
using Prox = std::function<Vector(const Vector&, double)>;

AdmmResult admm(const DeepcProblem& p, const EqualityRows& eq, const Prox& prox,
                const AdmmOptions& opt, const Vector* z0 = nullptr);

/// Fill y_pred, u_f, G, cost split and objective.
void finish(const DeepcProblem& p, DeepcSolution& sol, double regularizer);

}  // namespace pwadeepc::detail
