#pragma once

#include "pwadeepc/linalg.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pwadeepc {

/**
 * @brief Polyhedron in homogeneous form {z : P [z; 1] <= 0}.
 *
 * Rows flagged in `strict` use a strict inequality (< 0); this lets a partition
 * such as {x < 0} / {x >= 0} assign shared facets unambiguously. When `strict`
 * is empty every row is non-strict.
 */
struct Polyhedron {
  Matrix coefficients;
  std::vector<bool> strict;

  Polyhedron() = default;
  explicit Polyhedron(Matrix coeffs, std::vector<bool> strict_rows = {});

  [[nodiscard]] Index dim() const { return coefficients.cols() - 1; }
  [[nodiscard]] Index rows() const { return coefficients.rows(); }
  [[nodiscard]] bool is_strict(Index row) const;
  [[nodiscard]] bool contains(const Eigen::Ref<const Vector>& z) const;
};

/// Local affine dynamics x+ = A x + B u + f, y = C x + D u + g.
struct AffineMode {
  Matrix A, B, C, D;
  Vector f, g;
};

/**
 * @brief Piecewise affine state-space system with a polyhedral partition of (x, u).
 *
 * Mode indices are 0-based in the API; CSV/JSON outputs write them 1-based
 * (mode 1 of the example system is index 0).
 */
class PwaStateSpace {
 public:
  PwaStateSpace(std::vector<AffineMode> modes, std::vector<Polyhedron> partition);

  [[nodiscard]] Index nx() const { return nx_; }
  [[nodiscard]] Index nu() const { return nu_; }
  [[nodiscard]] Index ny() const { return ny_; }
  [[nodiscard]] int mode_count() const { return static_cast<int>(modes_.size()); }
  [[nodiscard]] const AffineMode& mode(int i) const { return modes_.at(static_cast<size_t>(i)); }
  [[nodiscard]] const std::vector<AffineMode>& modes() const { return modes_; }
  [[nodiscard]] const std::vector<Polyhedron>& partition() const { return partition_; }
  [[nodiscard]] bool is_piecewise_linear() const;

 private:
  std::vector<AffineMode> modes_;
  std::vector<Polyhedron> partition_;
  Index nx_ = 0, nu_ = 0, ny_ = 0;
};

/// Boundary policy for points lying in several polyhedra.
enum class TieRule { LowestIndex };

/// Every polyhedron index containing z, in increasing order.
std::vector<int> containing_regions(std::span<const Polyhedron> partition,
                                    const Eigen::Ref<const Vector>& z);

/// First region containing z. Throws NoRegion if the partition misses z.
int first_region(std::span<const Polyhedron> partition, const Eigen::Ref<const Vector>& z,
                 TieRule tie_rule = TieRule::LowestIndex);

int active_mode_ss(const PwaStateSpace& sys, const Vector& x, const Vector& u,
                   TieRule tie_rule = TieRule::LowestIndex);

struct StepResult {
  Vector x_next;
  Vector y;
  int mode = 0;
};

StepResult step_ss(const PwaStateSpace& sys, const Vector& x, const Vector& u);

struct Trajectory {
  std::vector<Vector> u;
  std::vector<Vector> y;
  std::vector<int> s;
  std::vector<Vector> x;  // empty when states are unknown

  [[nodiscard]] size_t size() const { return u.size(); }
};

/// Iterate step_ss over u_seq from x0. NoRegion errors carry the offending time index.
Trajectory simulate_ss(const PwaStateSpace& sys, const Vector& x0, std::span<const Vector> u_seq);

/// Coefficients of one ARX mode: y_t + sum_j a[j-1] y_{t-j} = sum_j b[j] u_{t-j} + c.
struct ArxCoefficients {
  std::vector<Matrix> a;  // a_1 .. a_na, each ny x ny
  std::vector<Matrix> b;  // b_0 .. b_nb, each ny x nu
  Vector c;
};

/**
 * @brief PWARX input/output model with a regressor-space partition.
 *
 * The regressor at time t is [y_{t-lag}; ...; y_{t-1}; u_{t-lag}; ...; u_t]
 * (oldest first), of dimension ny*lag + nu*(lag+1).
 */
class PwarxModel {
 public:
  PwarxModel(Index ny, Index nu, int lag, std::vector<ArxCoefficients> modes,
             std::vector<Polyhedron> partition);

  [[nodiscard]] Index ny() const { return ny_; }
  [[nodiscard]] Index nu() const { return nu_; }
  [[nodiscard]] int lag() const { return lag_; }
  [[nodiscard]] int na() const { return na_; }
  [[nodiscard]] int nb() const { return nb_; }
  [[nodiscard]] int mode_count() const { return static_cast<int>(modes_.size()); }
  [[nodiscard]] Index regressor_dim() const { return ny_ * lag_ + nu_ * (lag_ + 1); }
  [[nodiscard]] const ArxCoefficients& mode(int i) const { return modes_.at(static_cast<size_t>(i)); }
  [[nodiscard]] const std::vector<Polyhedron>& partition() const { return partition_; }

 private:
  Index ny_, nu_;
  int lag_, na_ = 0, nb_ = 0;
  std::vector<ArxCoefficients> modes_;
  std::vector<Polyhedron> partition_;
};

/// Stack y_hist (lag entries) and u_hist (lag+1 entries), oldest first.
Vector make_regressor(std::span<const Vector> y_hist, std::span<const Vector> u_hist);

int pwarx_active_mode(const PwarxModel& model, std::span<const Vector> y_hist,
                      std::span<const Vector> u_hist, TieRule tie_rule = TieRule::LowestIndex);

struct PwarxPrediction {
  Vector y;
  int mode = 0;
};

/// One-step PWARX output; y_hist and u_past hold the last `lag` samples, oldest first.
PwarxPrediction pwarx_predict(const PwarxModel& model, std::span<const Vector> y_hist,
                              std::span<const Vector> u_past, const Vector& u_t);

/**
 * @brief Simulate the PWARX model over u_seq.
 *
 * Samples before the first one are taken from `y_init`/`u_init` (most recent
 * last) and zero beyond them, matching zero-padding of negative times.
 */
Trajectory simulate_pwarx(const PwarxModel& model, std::span<const Vector> u_seq,
                          std::span<const Vector> y_init = {}, std::span<const Vector> u_init = {});

/// PWARX mode labels of an observed i/o sequence, zero-padding negative times.
std::vector<int> pwarx_labels(const PwarxModel& model, std::span<const Vector> u,
                              std::span<const Vector> y);

/**
 * @brief Multi-step map y = O x0 + T u + c along a fixed mode sequence.
 */
struct MultistepMap {
  Matrix O;  // (ny L) x nx
  Matrix T;  // (ny L) x (nu L), block lower triangular
  Vector c;  // (ny L)
};

MultistepMap multistep_map(const PwaStateSpace& sys, std::span<const int> mode_seq);

/**
 * @brief Basis of the length-L behavior for a mode sequence.
 *
 * Rows are [y_0..y_{L-1}; u_0..u_{L-1}; 1_L], columns [x0; u_0..u_{L-1}; 1].
 */
Matrix behavior_basis(const PwaStateSpace& sys, std::span<const int> mode_seq);

/// True when every recorded mode matches the partition at the recorded (x, u).
bool mode_sequence_realized(const PwaStateSpace& sys, const Trajectory& traj);

/// Example system: x+ = -0.3x + 1.4u (x < 0), 0.9x + 0.15u (x >= 0), y = x.
PwaStateSpace make_example_system();

/// Equivalent PWARX realization of the example system (na = nb = 1) with lag >= 1.
PwarxModel make_example_pwarx(int lag = 1);

}  // namespace pwadeepc
