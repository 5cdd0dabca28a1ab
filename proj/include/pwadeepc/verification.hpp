#pragma once

#include "pwadeepc/deepc_solver.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pwadeepc {

/// Exact elastic-net optimum by enumerating every sign pattern (tiny instances only).
struct OracleResult {
  Vector g;
  double objective = 0.0;
  long candidates = 0;
};

OracleResult elastic_enumeration_oracle(const DeepcProblem& p, double lambda1, double lambda2);

/// Group-lasso optimum by a log-barrier interior-point method on the second-order cone form.
OracleResult cap_barrier_oracle(const DeepcProblem& p, double lambda);

/// Objective recomputed from the per-mode blocks.
double elastic_objective(const DeepcProblem& p, const Vector& g, double lambda1, double lambda2);
double cap_objective(const DeepcProblem& p, const Vector& g, double lambda);

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  Json data;
  double seconds = 0.0;  // wall time, not serialized
};

/// Random length-L trajectories of the plant represented through mode-wise data windows.
SuiteResult fundamental_lemma_suite(const PwaStateSpace& sys, const PwarxModel& model,
                                    const Dataset& ds, int L, int trials, std::uint64_t seed,
                                    double tol = 1e-6);

/// Rank of the behavior basis along random realized mode sequences.
SuiteResult rank_suite(const PwaStateSpace& sys, const std::vector<int>& horizons, int per_horizon,
                       std::uint64_t seed);

/// Small random DeePC instance built from plant data with `cols` windows per mode.
DeepcProblem random_instance(const PwaStateSpace& sys, const PwarxModel& model, int L, int rho,
                             int cols, bool affine, std::uint64_t seed);

SuiteResult solver_oracle_suite(const PwaStateSpace& sys, const PwarxModel& model, int instances,
                                std::uint64_t seed, double rel_tol = 1e-4, double kkt_tol = 1e-5);

SuiteResult shrink_threshold_suite(const PwaStateSpace& sys, const PwarxModel& model,
                                   int instances, std::uint64_t seed, double band = 0.02,
                                   double zero_norm = 1e-8);

Json suite_to_json(const SuiteResult& s);

}  // namespace pwadeepc
