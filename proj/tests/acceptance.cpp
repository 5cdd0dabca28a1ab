#include "pwadeepc/experiment.hpp"
#include "pwadeepc/verification.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

using namespace pwadeepc;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << what << ": " << detail << std::endl;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// runs collect, cluster and run into dir; returns wall time of `run`
double pipeline(ExperimentConfig c, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  c.out = dir.string();
  if (cmd_collect(c) != kOk) throw std::runtime_error("collect failed");
  if (cmd_cluster(c) != kOk) throw std::runtime_error("cluster failed");
  const auto t0 = std::chrono::steady_clock::now();
  if (cmd_run(c) != kOk) throw std::runtime_error("run failed");
  return seconds_since(t0);
}

}  // namespace

int main(int argc, char** argv) {
  ExperimentConfig c = argc > 1 ? load_config(argv[1]) : ExperimentConfig{};
  const fs::path root = fs::temp_directory_path() / "pwadeepc_acceptance";
  const fs::path a = root / "a", b = root / "b";

  double run_secs = 0.0;
  try {
    run_secs = pipeline(c, a);
  } catch (const std::exception& e) {
    std::cout << "FAIL pipeline: " << e.what() << std::endl;
    return 1;
  }
  c.out = a.string();
  const Dataset ds = dataset_from_csv(read_file((a / "dataset.csv").string()));

  const auto lemma = fundamental_lemma_suite(c.sys, c.model, ds, c.verify.lemma_L, c.verify.lemma_trials, c.verify.seed);
  report(1, lemma.pass, "fundamental lemma, 100 trajectories", lemma.detail + ", " + fmt(lemma.seconds) + " s");

  const auto rank = rank_suite(c.sys, c.verify.rank_horizons, c.verify.rank_per_horizon, c.verify.seed + 1);
  report(2, rank.pass, "behavior basis rank nx + nu L + 1", rank.detail);

  const auto oracle = solver_oracle_suite(c.sys, c.model, c.verify.oracle_instances, c.verify.seed + 2);
  report(3, oracle.pass, "solvers vs oracles (rel 1e-4, KKT 1e-5)", oracle.detail);

  const auto thr = shrink_threshold_suite(c.sys, c.model, c.verify.threshold_instances, c.verify.seed + 3);
  report(4, thr.pass, "group shrink threshold +-2%", thr.detail);

  const Json summary = read_json_file((a / "summary.json").string());
  std::map<std::string, double> val;  // "scheme/clustering/case/metric"
  for (const auto& r : summary["runs"]) {
    const std::string k = r["scheme"].get<std::string>() + "/" + r["clustering"].get<std::string>() + "/" +
                          std::to_string(r["case"].get<int>());
    val[k + "/u"] = r["rmse_u"].get<double>();
    val[k + "/y"] = r["rmse_y"].get<double>();
  }
  const std::string est = c.clustering.mode;
  bool ya = true, ub = true, dc = true;
  std::ostringstream trend;
  for (int cs : c.run.cases) {
    const std::string n = std::to_string(cs);
    const double cy = val["cap/exact/" + n + "/y"], ey = val["elastic/exact/" + n + "/y"];
    const double cu = val["cap/exact/" + n + "/u"], eu = val["elastic/exact/" + n + "/u"];
    const double dcap = val["cap/" + est + "/" + n + "/u"] - cu;
    const double del = val["elastic/" + est + "/" + n + "/u"] - eu;
    ya = ya && cy < ey;
    ub = ub && eu < cu;
    dc = dc && dcap > del;
    trend << " case" << n << ": y cap " << fmt(cy) << " vs elastic " << fmt(ey) << ", u elastic " << fmt(eu)
          << " vs cap " << fmt(cu) << ", du cap " << fmt(dcap) << " vs elastic " << fmt(del) << ";";
  }
  const bool fast = run_secs < 600.0;
  report(5, ya && ub && dc && fast, "closed-loop trends",
         std::string("(a) ") + (ya ? "ok" : "miss") + " (b) " + (ub ? "ok" : "miss") + " (c) " +
             (dc ? "ok" : "miss") + ", matrix " + fmt(run_secs) + " s;" + trend.str());

  const double rate = summary["misclassification_rate"].get<double>();
  report(6, rate >= 0.09 && rate <= 0.19, "K-means misclassification in [0.09, 0.19]", "rate " + fmt(rate));

  bool ledger_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  size_t rows = 0;
  for (int cs : c.run.cases)
    for (const char* s : {"elastic", "cap"}) {
      const Json l = read_json_file((a / ("ledger_case" + std::to_string(cs) + "_" + s + ".json")).string());
      for (const auto& r : l["rows"]) {
        const double gap = r["rhs"].get<double>() - r["lhs"].get<double>();
        worst = std::min(worst, gap);
        ledger_ok = ledger_ok && gap >= -1e-6;
        ++rows;
      }
    }
  ledger_ok = ledger_ok && rows > 0;
  report(7, ledger_ok, "cost ledger RHS - LHS >= -1e-6", std::to_string(rows) + " rows, min gap " + fmt(worst));

  bool same = true;
  size_t files = 0;
  std::string diff;
  try {
    pipeline(c, b);
    for (const auto& e : fs::directory_iterator(a)) {
      ++files;
      const fs::path other = b / e.path().filename();
      if (!fs::exists(other) || read_file(e.path().string()) != read_file(other.string())) {
        same = false;
        diff = e.path().filename().string();
      }
    }
    for (const auto& e : fs::directory_iterator(b))
      if (!fs::exists(a / e.path().filename())) same = false;
  } catch (const std::exception& e) {
    same = false;
    diff = e.what();
  }
  report(8, same && files > 0, "byte-identical outputs for a repeated run",
         std::to_string(files) + " files" + (diff.empty() ? "" : ", differs: " + diff));

  fs::remove_all(root);
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all criteria met")
            << std::endl;
  return failures ? 1 : 0;
}
