#pragma once

#include "pwadeepc/closed_loop.hpp"
#include "pwadeepc/data_pipeline.hpp"
#include "pwadeepc/deepc_solver.hpp"
#include "pwadeepc/error.hpp"
#include "pwadeepc/system_io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pwadeepc {

struct DataSection {
  size_t N = 1000;
  double amplitude = 10.0;
  int period = 40;
  double decay = 0.01;
  int horizon = 20;
  std::uint64_t seed = 1;
  double x0 = 0.0;
  int x_points = 3001;
  bool check_refinement = true;
  int pe_order = 0;  // 0: nx + L + 1
};

struct ClusteringSection {
  int S = 2;
  int rho = 25;
  std::uint64_t seed = 7;
  int restarts = 50;
  std::string mode = "kmeans";  // exact | kmeans
  WindowPolicy policy = WindowPolicy::Concatenated;
};

struct RunSection {
  int T = 50;
  std::vector<int> cases = {1, 2};
  double level = 4.0;
  int switch_at = 25;
  double x0 = 0.0;
  bool parallel = true;
};

struct VerifySection {
  int lemma_L = 5;
  int lemma_trials = 100;
  std::vector<int> rank_horizons = {3, 5, 8};
  int rank_per_horizon = 7;
  int oracle_instances = 10;
  int threshold_instances = 5;
  std::uint64_t seed = 11;
};

struct ExperimentConfig {
  std::string system = "builtin:eq75";
  PwaStateSpace sys = make_example_system();
  PwarxModel model = make_example_pwarx(1);
  DataSection data;
  ClusteringSection clustering;
  DeepcConfig control;
  RunSection run;
  VerifySection verify;
  std::string out = "out";
};

/// Defaults are the builtin plant with the tuning used in the reference experiment.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

/// Replace every seed with `seed` (data, clustering, verification).
void override_seed(ExperimentConfig& c, std::uint64_t seed);

/// FNV-1a 64 of the canonical config dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Exit codes of the command line tool.
enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kDataFailed = 2, kSolverFailed = 3 };

int exit_code_for(const Error& e);

int cmd_collect(const ExperimentConfig& c);
int cmd_cluster(const ExperimentConfig& c);
int cmd_run(const ExperimentConfig& c);
int cmd_verify(const ExperimentConfig& c);

/// Atomic write: temporary file then rename.
void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

/// One entry of the scheme x clustering x case matrix.
struct MatrixRun {
  int case_id = 1;
  Scheme scheme = Scheme::Elastic;
  std::string clustering;  // "exact" or the estimated label source
  ClosedLoopRun run;
  MetricsReport metrics;
};

struct RunMatrix {
  std::vector<MatrixRun> runs;
  std::vector<BoundLedger> ledgers;  // per (case, scheme)
  std::vector<std::pair<int, Scheme>> ledger_keys;
  MosaicBlocks exact, estimated;
  double misclassification = 0.0;
};

/// Everything `run` computes, without touching the file system.
RunMatrix run_matrix(const ExperimentConfig& c, const Dataset& ds);

/// Dataset produced by the oracle controller described in the data section.
Dataset collect_dataset(const ExperimentConfig& c, OracleStats* stats = nullptr);

/// s_hat from K-means, permuted onto the true modes.
ClusterResult cluster_dataset(const ExperimentConfig& c, const Dataset& ds);

}  // namespace pwadeepc
