#pragma once

#include "pwadeepc/data_pipeline.hpp"
#include "pwadeepc/system_io.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pwadeepc {

/// Block Hankel matrix: block row r of column c is seq[c + r]. Throws TooShort.
Matrix hankel(std::span<const Vector> seq, Index depth);

/// Hankel-like matrix whose columns are the depth-`depth` windows starting at `starts`.
Matrix windowed_hankel(std::span<const Vector> seq, std::span<const size_t> starts, Index depth);

/// Past/future slices of one mode's depth-(rho+L) Hankels.
struct ModeBlocks {
  int mode = 0;
  Matrix UP, YP, UF, YF;
  std::vector<size_t> column_source;  // parent-dataset index of each window's first sample

  [[nodiscard]] Index cols() const { return UF.cols(); }
  /// Z_P = [U_P; Y_P].
  [[nodiscard]] Matrix ZP() const;
};

struct MosaicBlocks {
  int L = 0;
  int rho = 0;
  Index nu = 0, ny = 0;
  std::vector<ModeBlocks> modes;

  [[nodiscard]] int mode_count() const { return static_cast<int>(modes.size()); }
  [[nodiscard]] Index total_cols() const;
  /// First column of each mode inside the Mosaic, plus the total at the end.
  [[nodiscard]] std::vector<Index> col_offsets() const;
  [[nodiscard]] Matrix ZP() const;
  [[nodiscard]] Matrix UF() const;
  [[nodiscard]] Matrix YF() const;
  /// S x total_cols block indicator rows.
  [[nodiscard]] Matrix indicator() const;
};

/// Depth-(L+rho) blocks of one mode; throws InsufficientData when no window fits.
ModeBlocks local_blocks(const LocalDataset& local, int L, int rho);

MosaicBlocks build_mosaic_blocks(const std::vector<LocalDataset>& locals, int L, int rho);

/// Assembled Mosaic with rows [U_P; Y_P; U_F; Y_F; I].
Matrix mosaic(const MosaicBlocks& blocks);

/// Dense CSV of a matrix (no header, full precision).
std::string matrix_to_csv(const Matrix& m);

/// Block boundaries, dims and labels of a Mosaic.
Json mosaic_sidecar(const MosaicBlocks& blocks);

/// Per-mode step masks over a horizon: mask[i] has (nu+ny)L entries, 1 where mode i is active.
struct SelectionMasks {
  std::vector<int> mode_seq;
  std::vector<Vector> mask;  // stacked [1(s=i) (x) 1_nu; 1(s=i) (x) 1_ny]
};

SelectionMasks selection_masks(std::span<const int> mode_seq, int mode_count, Index nu, Index ny);

/// Depth-L Hankels of every mode, for the restricted representation.
struct TrajectoryBlocks {
  int L = 0;
  Index nu = 0, ny = 0;
  std::vector<Matrix> Hu, Hy;
  std::vector<std::vector<size_t>> column_source;

  [[nodiscard]] int mode_count() const { return static_cast<int>(Hu.size()); }
};

TrajectoryBlocks trajectory_blocks(const std::vector<LocalDataset>& locals, int L);

struct RestrictedResidual {
  double residual = 0.0;               // || sum_i S~^i (.) H_i G_i - [u; y] ||_2
  std::vector<double> sum_violation;   // |1'G_i - 1| per mode
};

/// Linear system [masked Mosaic; indicator rows] g = [u; y; 1_S] for a mode sequence.
void restricted_system(const TrajectoryBlocks& blocks, std::span<const int> mode_seq, Matrix& A);

RestrictedResidual restricted_residual(const TrajectoryBlocks& blocks, const std::vector<Vector>& G,
                                       std::span<const int> mode_seq, const Vector& u,
                                       const Vector& y);

struct TrajectoryCheck {
  bool feasible = false;
  bool mode_consistent = false;
  double residual = 0.0;
  double max_sum_violation = 0.0;
  std::vector<Vector> G;
  std::vector<int> reconstructed_modes;
};

/**
 * Solve the restricted representation for one trajectory and re-evaluate its modes.
 *
 * u, y hold the L samples of the trajectory; u_past, y_past the `lag` samples
 * preceding it. The modes of the reconstructed window are recomputed from the
 * PWARX regressors and compared with mode_seq.
 */
TrajectoryCheck check_trajectory(const TrajectoryBlocks& blocks, const PwarxModel& model,
                                 const std::vector<Vector>& u_past,
                                 const std::vector<Vector>& y_past, const std::vector<Vector>& u,
                                 const std::vector<Vector>& y, std::span<const int> mode_seq,
                                 double tol);

struct FundamentalLemmaReport {
  int trials = 0;
  int feasible = 0;
  int mode_consistent = 0;
  double success_rate = 0.0;
  double max_residual = 0.0;
  double max_sum_violation = 0.0;
};

struct TrialSettings {
  double x0_range = 5.0;
  double u_range = 4.0;
  double tol = 1e-6;
};

/// Random length-L trajectories of the plant, each checked with check_trajectory.
FundamentalLemmaReport verify_fundamental_lemma(const PwaStateSpace& sys, const PwarxModel& model,
                                                const TrajectoryBlocks& blocks, int trials,
                                                std::uint64_t seed, const TrialSettings& ts = {});

/// Phi = Y_F [Z_P; U_F; I]^+ with the indicator columns summed into one.
struct SubspacePredictor {
  Matrix Phi;  // (ny L) x ((nu+ny) rho + nu L + 1)
  Index rank = 0;
  bool full_row_rank = false;
};

SubspacePredictor subspace_predictor(const MosaicBlocks& blocks);

/**
 * True map y_f = V z_ini + T u_f + C along a mode sequence of length rho + L.
 *
 * The state at the start of the past window is recovered from the past samples
 * through the pseudo-inverse of the past observability matrix.
 */
Matrix true_multistep_map(const PwaStateSpace& sys, std::span<const int> mode_seq, int rho, int L);

}  // namespace pwadeepc
