#pragma once

#include "pwadeepc/pwa_system.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pwadeepc {

/// Input/output record with optional mode labels. Label -1 means "not available".
struct Dataset {
  std::vector<Vector> u;
  std::vector<Vector> y;
  std::vector<int> s_true;  // ground-truth labels used for partitioning and scoring
  std::vector<int> sigma;   // state-space modes, when collected from a state-space plant
  std::vector<int> s_hat;   // estimated labels; -1 for the discarded prefix

  [[nodiscard]] size_t size() const { return u.size(); }
  [[nodiscard]] Index nu() const { return u.empty() ? 0 : u.front().size(); }
  [[nodiscard]] Index ny() const { return y.empty() ? 0 : y.front().size(); }
};

/// Replace s_true with PWARX regressor labels (zero-padded before t = 0).
void label_with_pwarx(Dataset& ds, const PwarxModel& model);

/// Samples of one mode in time order, split into runs of consecutive source indices.
struct LocalDataset {
  int mode = 0;
  std::vector<Vector> u;
  std::vector<Vector> y;
  std::vector<size_t> source;          // index of each sample in the parent dataset
  std::vector<size_t> segment_starts;  // offsets into u/y where a segment begins; starts with 0

  [[nodiscard]] size_t size() const { return u.size(); }
  /// Half-open [begin, end) offsets of each segment.
  [[nodiscard]] std::vector<std::pair<size_t, size_t>> segments() const;
  /// Offsets at which a window of `depth` samples fits inside one segment.
  [[nodiscard]] std::vector<size_t> window_starts(size_t depth) const;
};

/**
 * How windows may be taken from a mode's samples.
 *
 * SegmentAware breaks the samples wherever the source index jumps, so every
 * Hankel column is a run of consecutive samples. Concatenated joins all samples
 * of a mode into a single sequence.
 */
enum class WindowPolicy { Concatenated, SegmentAware };

const char* to_string(WindowPolicy p);
WindowPolicy window_policy_from_string(const std::string& s);

/**
 * Split a dataset by labels (entries < 0 are skipped) into `mode_count` subsets.
 * Throws InsufficientData when `min_window` > 0 and some mode admits no window of that depth.
 */
std::vector<LocalDataset> partition_dataset(const Dataset& ds, const std::vector<int>& labels,
                                            int mode_count, WindowPolicy policy,
                                            size_t min_window = 0);

/// Triangular wave starting at 0 and rising, peak amplitude*(1-decay)^k in period k.
std::vector<double> triangular_reference(double amplitude, int period, double decay_per_period,
                                         size_t n);

struct OracleSettings {
  int horizon = 20;
  double x_min = -15.0, x_max = 15.0;
  int x_points = 3001;
  double u_min = -12.0, u_max = 12.0;
  bool check_refinement = true;
  double refinement_tol = 0.01;
  std::vector<size_t> refinement_steps = {0};  // time steps at which the 2x check runs
};

struct OracleStats {
  int x_points = 0;
  double grid_step = 0.0;
  double max_relative_refinement_change = 0.0;
  double max_grid_landing_error = 0.0;
  size_t refinement_checks = 0;
};

/**
 * Closed-loop data from an output-tracking MPC that knows the plant.
 *
 * Scalar plants only (nx = nu = ny = 1, D = 0). At every step the horizon cost
 * sum_{k=1..H} (y_{t+k} - r_{t+k})^2 is minimized by dynamic programming over
 * a uniform state grid; successor states are restricted to grid points, so the
 * continuous input reaching the chosen point is applied exactly.
 * `reference` must hold at least n + horizon samples.
 */
Dataset oracle_mpc_collect(const PwaStateSpace& sys, const std::vector<double>& reference,
                           size_t n, const OracleSettings& settings, const Vector& x0,
                           OracleStats* stats = nullptr);

struct KMeansOptions {
  int restarts = 50;
  int max_iter = 500;
  double tol = 1e-9;
  int empty_retries = 10;
};

struct ClusterModel {
  Matrix centroids;          // S x regressor_dim
  std::vector<int> assign;   // cluster of regressor tau, tau = rho .. N-1
  std::uint64_t seed = 0;
  int restarts = 0;
  int rho = 0;
  double inertia = 0.0;
};

struct ClusterResult {
  ClusterModel model;
  std::vector<int> s_hat;  // length N; -1 for the first rho samples
};

/// Regressor [y_{t-rho..t-1}; u_{t-rho..t}] of sample t (requires t >= rho).
Vector regressor_at(const Dataset& ds, size_t t, int rho);

/// Plain k-means over the rows of `points`; best of `restarts` k-means++ runs.
ClusterModel kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& opt);

/// Cluster the regressors of samples rho .. N-1.
ClusterResult kmeans_modes(const Dataset& ds, int mode_count, int rho, std::uint64_t seed,
                           const KMeansOptions& opt = {});

/// perm[cluster] = mode, maximizing agreement over entries where both labels are >= 0.
std::vector<int> match_clusters_to_modes(const std::vector<int>& s_hat,
                                         const std::vector<int>& s_true, int mode_count);

std::vector<int> apply_permutation(const std::vector<int>& labels, const std::vector<int>& perm);

/// Fraction of disagreeing labels over entries where both are >= 0.
double misclassification_rate(const std::vector<int>& s_hat, const std::vector<int>& s_true);

/// Confusion counts: rows = true mode, cols = estimated label.
Matrix confusion_matrix(const std::vector<int>& s_hat, const std::vector<int>& s_true,
                        int mode_count);

struct PersistenceReport {
  bool exciting = false;
  Index rank = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Full-row-rank test of the depth-`order` input Hankel built from windows of `local`.
PersistenceReport persistence_check(const LocalDataset& local, int order);

/// Same test on a contiguous sequence.
PersistenceReport persistence_check(const std::vector<Vector>& u, int order);

struct AicEntry {
  int lag = 0;
  double sse = 0.0;
  double aic = 0.0;
  int params = 0;
};

/// Single-ARX lag selection by N ln(SSE/N) + 2p; all lags share the same fitting window.
int aic_lag_select(const Dataset& ds, int max_lag, std::vector<AicEntry>* table = nullptr);

/// CSV with header t,u,y,s_true[,s_hat] (scalar u and y).
std::string dataset_to_csv(const Dataset& ds, bool with_s_hat);
Dataset dataset_from_csv(const std::string& text);

}  // namespace pwadeepc
