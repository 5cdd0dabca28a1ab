#include "pwadeepc/experiment.hpp"

#include "pwadeepc/error.hpp"
#include "pwadeepc/verification.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

namespace pwadeepc {

namespace fs = std::filesystem;

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::optional<Vector> optional_vector(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const Json& v = j.at(key);
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  return vector_from_json(v);
}

Json optional_to_json(const std::optional<Vector>& v) {
  return v ? vector_to_json(*v) : Json(nullptr);
}

Matrix weight_from_json(const Json& j, const char* key, Index dim) {
  if (!j.contains(key)) return Matrix::Identity(dim, dim);
  const Json& v = j.at(key);
  if (v.is_number()) return v.get<double>() * Matrix::Identity(dim, dim);
  return matrix_from_json(v);
}

std::string path_in(const ExperimentConfig& c, const std::string& name) {
  return (fs::path(c.out) / name).string();
}

Json provenance(const ExperimentConfig& c) {
  return {{"config_hash", config_hash(c)},
          {"seeds",
           {{"data", c.data.seed}, {"clustering", c.clustering.seed}, {"verify", c.verify.seed}}}};
}

std::string csv_banner(const ExperimentConfig& c) {
  return "# config_hash=" + config_hash(c) + " data_seed=" + std::to_string(c.data.seed) +
         " clustering_seed=" + std::to_string(c.clustering.seed) + "\n";
}

Json with_provenance(const ExperimentConfig& c, Json body) {
  Json j = provenance(c);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  return j;
}

Dataset load_dataset(const ExperimentConfig& c, const std::string& name) {
  const std::string path = path_in(c, name);
  if (!fs::exists(path)) throw Error(ErrorCode::Io, path + " not found");
  Dataset ds = dataset_from_csv(read_file(path));
  if (ds.s_true.size() != ds.size()) throw Error(ErrorCode::Io, path + ": missing labels");
  return ds;
}

std::string run_name(const MatrixRun& r) {
  return "run_case" + std::to_string(r.case_id) + "_" + to_string(r.scheme) + "_" + r.clustering;
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  if (j.contains("system")) {
    const Json& s = j.at("system");
    if (s.is_string() && s.get<std::string>() == "builtin:eq75") {
      c.system = "builtin:eq75";
    } else {
      const Json def = s.is_string() ? read_json_file(s.get<std::string>()) : s;
      c.system = s.is_string() ? s.get<std::string>() : "inline";
      c.sys = system_from_json(def.at("state_space"));
      c.model = pwarx_from_json(def.at("pwarx"));
    }
  }
  if (j.contains("data")) {
    const Json& d = j.at("data");
    c.data.N = get_or<size_t>(d, "N", c.data.N);
    c.data.amplitude = get_or(d, "amplitude", c.data.amplitude);
    c.data.period = get_or(d, "period", c.data.period);
    c.data.decay = get_or(d, "decay", c.data.decay);
    c.data.horizon = get_or(d, "horizon", c.data.horizon);
    c.data.seed = get_or<std::uint64_t>(d, "seed", c.data.seed);
    c.data.x0 = get_or(d, "x0", c.data.x0);
    c.data.x_points = get_or(d, "x_points", c.data.x_points);
    c.data.check_refinement = get_or(d, "check_refinement", c.data.check_refinement);
    c.data.pe_order = get_or(d, "pe_order", c.data.pe_order);
  }
  if (j.contains("clustering")) {
    const Json& k = j.at("clustering");
    c.clustering.S = get_or(k, "S", c.clustering.S);
    c.clustering.rho = get_or(k, "rho", c.clustering.rho);
    c.clustering.seed = get_or<std::uint64_t>(k, "seed", c.clustering.seed);
    c.clustering.restarts = get_or(k, "restarts", c.clustering.restarts);
    c.clustering.mode = get_or<std::string>(k, "mode", c.clustering.mode);
    if (k.contains("window_policy")) c.clustering.policy = window_policy_from_string(k.at("window_policy").get<std::string>());
    if (c.clustering.mode != "exact" && c.clustering.mode != "kmeans")
      throw Error(ErrorCode::InvalidArgument, "clustering.mode must be exact or kmeans");
  }
  if (j.contains("control")) {
    const Json& k = j.at("control");
    DeepcConfig& d = c.control;
    d.L = get_or(k, "L", d.L);
    d.rho = get_or(k, "rho", d.rho);
    d.Q = weight_from_json(k, "Q", c.sys.ny());
    d.R = weight_from_json(k, "R", c.sys.nu());
    d.lambda1 = get_or(k, "lambda1", d.lambda1);
    d.lambda2 = get_or(k, "lambda2", d.lambda2);
    d.lambda = get_or(k, "lambda", d.lambda);
    d.affine = get_or(k, "affine", d.affine);
    d.u_min = optional_vector(k, "u_min");
    d.u_max = optional_vector(k, "u_max");
    d.y_min = optional_vector(k, "y_min");
    d.y_max = optional_vector(k, "y_max");
  }
  if (j.contains("run")) {
    const Json& r = j.at("run");
    c.run.T = get_or(r, "T", c.run.T);
    c.run.cases = get_or(r, "cases", c.run.cases);
    c.run.level = get_or(r, "level", c.run.level);
    c.run.switch_at = get_or(r, "switch_at", c.run.switch_at);
    c.run.x0 = get_or(r, "x0", c.run.x0);
    c.run.parallel = get_or(r, "parallel", c.run.parallel);
  }
  if (j.contains("verify")) {
    const Json& v = j.at("verify");
    c.verify.lemma_L = get_or(v, "lemma_L", c.verify.lemma_L);
    c.verify.lemma_trials = get_or(v, "lemma_trials", c.verify.lemma_trials);
    c.verify.rank_horizons = get_or(v, "rank_horizons", c.verify.rank_horizons);
    c.verify.rank_per_horizon = get_or(v, "rank_per_horizon", c.verify.rank_per_horizon);
    c.verify.oracle_instances = get_or(v, "oracle_instances", c.verify.oracle_instances);
    c.verify.threshold_instances = get_or(v, "threshold_instances", c.verify.threshold_instances);
    c.verify.seed = get_or<std::uint64_t>(v, "seed", c.verify.seed);
  }
  c.out = get_or<std::string>(j, "out", c.out);
  if (c.data.N == 0 || c.data.period <= 0 || c.data.horizon <= 0 || c.data.x_points < 2)
    throw Error(ErrorCode::InvalidArgument, "data section out of range");
  if (c.clustering.S < 1 || c.clustering.rho < 1 || c.clustering.restarts < 1)
    throw Error(ErrorCode::InvalidArgument, "clustering section out of range");
  if (c.control.L < 1 || c.control.rho < 1 || c.run.T < 1)
    throw Error(ErrorCode::InvalidArgument, "horizons must be positive");
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["system"] = c.system;
  if (c.system != "builtin:eq75") j["system_definition"] = {{"state_space", system_to_json(c.sys)}, {"pwarx", pwarx_to_json(c.model)}};
  j["data"] = {{"N", c.data.N}, {"amplitude", c.data.amplitude}, {"period", c.data.period},
               {"decay", c.data.decay}, {"horizon", c.data.horizon}, {"seed", c.data.seed},
               {"x0", c.data.x0}, {"x_points", c.data.x_points},
               {"check_refinement", c.data.check_refinement}, {"pe_order", c.data.pe_order}};
  j["clustering"] = {{"S", c.clustering.S}, {"rho", c.clustering.rho}, {"seed", c.clustering.seed},
                     {"restarts", c.clustering.restarts}, {"mode", c.clustering.mode},
                     {"window_policy", to_string(c.clustering.policy)}};
  const DeepcConfig& d = c.control;
  j["control"] = {{"L", d.L}, {"rho", d.rho}, {"Q", matrix_to_json(d.Q)}, {"R", matrix_to_json(d.R)},
                  {"lambda1", d.lambda1}, {"lambda2", d.lambda2}, {"lambda", d.lambda},
                  {"affine", d.affine}, {"u_min", optional_to_json(d.u_min)},
                  {"u_max", optional_to_json(d.u_max)}, {"y_min", optional_to_json(d.y_min)},
                  {"y_max", optional_to_json(d.y_max)}};
  j["run"] = {{"T", c.run.T}, {"cases", c.run.cases}, {"level", c.run.level},
              {"switch_at", c.run.switch_at}, {"x0", c.run.x0}};
  j["verify"] = {{"lemma_L", c.verify.lemma_L}, {"lemma_trials", c.verify.lemma_trials},
                 {"rank_horizons", c.verify.rank_horizons},
                 {"rank_per_horizon", c.verify.rank_per_horizon},
                 {"oracle_instances", c.verify.oracle_instances},
                 {"threshold_instances", c.verify.threshold_instances}, {"seed", c.verify.seed}};
  return j;
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

void override_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.data.seed = seed;
  c.clustering.seed = seed;
  c.verify.seed = seed;
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string text = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Infeasible:
    case ErrorCode::MaxIter:
    case ErrorCode::RankDeficient:
    case ErrorCode::SingularWbar:
    case ErrorCode::MissingSolution:
      return kSolverFailed;
    default:
      return kDataFailed;
  }
}

void write_file(const std::string& path, const std::string& text) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset collect_dataset(const ExperimentConfig& c, OracleStats* stats) {
  const auto ref = triangular_reference(c.data.amplitude, c.data.period, c.data.decay,
                                        c.data.N + static_cast<size_t>(c.data.horizon) + 1);
  OracleSettings os;
  os.horizon = c.data.horizon;
  os.x_points = c.data.x_points;
  os.check_refinement = c.data.check_refinement;
  Dataset ds = oracle_mpc_collect(c.sys, ref, c.data.N, os, Vector::Constant(c.sys.nx(), c.data.x0), stats);
  label_with_pwarx(ds, c.model);
  return ds;
}

ClusterResult cluster_dataset(const ExperimentConfig& c, const Dataset& ds) {
  KMeansOptions ko;
  ko.restarts = c.clustering.restarts;
  ClusterResult cr = kmeans_modes(ds, c.clustering.S, c.clustering.rho, c.clustering.seed, ko);
  const auto perm = match_clusters_to_modes(cr.s_hat, ds.s_true, c.clustering.S);
  cr.s_hat = apply_permutation(cr.s_hat, perm);
  Matrix centroids(cr.model.centroids.rows(), cr.model.centroids.cols());
  for (int k = 0; k < c.clustering.S; ++k) centroids.row(perm[static_cast<size_t>(k)]) = cr.model.centroids.row(k);
  cr.model.centroids = centroids;
  std::vector<int> assign;
  for (int a : cr.model.assign) assign.push_back(perm[static_cast<size_t>(a)]);
  cr.model.assign = assign;
  return cr;
}

int cmd_collect(const ExperimentConfig& c) {
  OracleStats st;
  const Dataset ds = collect_dataset(c, &st);
  const int order = c.data.pe_order > 0 ? c.data.pe_order
                                        : static_cast<int>(c.sys.nx()) + c.control.L + 1;
  const auto locals = partition_dataset(ds, ds.s_true, c.clustering.S, c.clustering.policy);
  Json pe = Json::array();
  bool ok = true;
  for (const auto& local : locals) {
    PersistenceReport r{};
    if (local.size() >= static_cast<size_t>(order)) r = persistence_check(local, order);
    ok = ok && r.exciting;
    pe.push_back({{"mode", local.mode + 1}, {"samples", local.size()}, {"order", order},
                  {"rank", r.rank}, {"rows", r.rows}, {"cols", r.cols}, {"exciting", r.exciting}});
  }
  Json body;
  body["samples"] = ds.size();
  body["oracle"] = {{"horizon", c.data.horizon}, {"x_points", st.x_points}, {"grid_step", st.grid_step},
                    {"max_relative_refinement_change", st.max_relative_refinement_change},
                    {"refinement_checks", st.refinement_checks},
                    {"max_grid_landing_error", st.max_grid_landing_error}};
  body["persistence"] = pe;
  body["window_policy"] = to_string(c.clustering.policy);
  write_file(path_in(c, "dataset.csv"), csv_banner(c) + dataset_to_csv(ds, false));
  write_file(path_in(c, "collect.json"), dump_json(with_provenance(c, body)));
  if (!ok) {
    std::cerr << "persistence of excitation failed at order " << order << "\n";
    return kDataFailed;
  }
  return kOk;
}

int cmd_cluster(const ExperimentConfig& c) {
  Dataset ds = load_dataset(c, "dataset.csv");
  const ClusterResult cr = cluster_dataset(c, ds);
  const double kmeans_rate = misclassification_rate(cr.s_hat, ds.s_true);
  ds.s_hat = c.clustering.mode == "exact" ? ds.s_true : cr.s_hat;

  const int L = c.control.L, rho = c.control.rho;
  const auto exact = build_mosaic_blocks(
      partition_dataset(ds, ds.s_true, c.clustering.S, c.clustering.policy), L, rho);
  const auto estimated = build_mosaic_blocks(
      partition_dataset(ds, ds.s_hat, c.clustering.S, c.clustering.policy), L, rho);

  Json body;
  body["mode"] = c.clustering.mode;
  body["S"] = c.clustering.S;
  body["rho"] = c.clustering.rho;
  body["restarts"] = c.clustering.restarts;
  body["kmeans"] = {{"misclassification_rate", kmeans_rate},
                    {"confusion", matrix_to_json(confusion_matrix(cr.s_hat, ds.s_true, c.clustering.S))},
                    {"centroids", matrix_to_json(cr.model.centroids)},
                    {"inertia", cr.model.inertia}, {"seed", cr.model.seed}};
  body["misclassification_rate"] = misclassification_rate(ds.s_hat, ds.s_true);
  body["confusion"] = matrix_to_json(confusion_matrix(ds.s_hat, ds.s_true, c.clustering.S));
  write_file(path_in(c, "labels.csv"), csv_banner(c) + dataset_to_csv(ds, true));
  write_file(path_in(c, "cluster.json"), dump_json(with_provenance(c, body)));
  write_file(path_in(c, "mosaic_exact.csv"), csv_banner(c) + matrix_to_csv(mosaic(exact)));
  write_file(path_in(c, "mosaic_exact.json"), dump_json(with_provenance(c, mosaic_sidecar(exact))));
  write_file(path_in(c, "mosaic_estimated.csv"), csv_banner(c) + matrix_to_csv(mosaic(estimated)));
  write_file(path_in(c, "mosaic_estimated.json"), dump_json(with_provenance(c, mosaic_sidecar(estimated))));
  return kOk;
}

RunMatrix run_matrix(const ExperimentConfig& c, const Dataset& ds) {
  if (ds.s_hat.size() != ds.size()) throw Error(ErrorCode::Io, "dataset has no estimated labels");
  const int L = c.control.L, rho = c.control.rho, S = c.clustering.S;
  RunMatrix m;
  m.exact = build_mosaic_blocks(partition_dataset(ds, ds.s_true, S, c.clustering.policy), L, rho);
  m.estimated = build_mosaic_blocks(partition_dataset(ds, ds.s_hat, S, c.clustering.policy), L, rho);
  m.misclassification = misclassification_rate(ds.s_hat, ds.s_true);
  const std::string est_name = c.clustering.mode;

  const Vector x0 = Vector::Constant(c.sys.nx(), c.run.x0);
  const size_t length = static_cast<size_t>(c.run.T + L);
  std::vector<std::string> clusterings = {"exact"};
  if (est_name != "exact") clusterings.push_back(est_name);
  for (int id : c.run.cases)
    for (const std::string& cl : clusterings)
      for (Scheme sc : {Scheme::Elastic, Scheme::Cap}) {
        MatrixRun r;
        r.case_id = id;
        r.scheme = sc;
        r.clustering = cl;
        m.runs.push_back(r);
      }

  auto execute = [&](MatrixRun& r) {
    const ReferenceCase ref = make_reference_case(c.sys, r.case_id, c.run.level, c.run.switch_at, length);
    const MosaicBlocks& b = r.clustering == "exact" ? m.exact : m.estimated;
    r.run = run_receding_horizon(c.sys, b, c.control, r.scheme, ref.u_ref, ref.y_ref, c.run.T, x0);
    r.metrics = compute_metrics(c.sys, r.run, rho, L);
  };
  if (c.run.parallel) {
    std::vector<std::future<void>> jobs;
    for (auto& r : m.runs) jobs.push_back(std::async(std::launch::async, [&execute, &r] { execute(r); }));
    for (auto& j : jobs) j.get();
  } else {
    for (auto& r : m.runs) execute(r);
  }

  for (int id : c.run.cases)
    for (Scheme sc : {Scheme::Elastic, Scheme::Cap}) {
      const MatrixRun* ex = nullptr;
      const MatrixRun* es = nullptr;
      for (const auto& r : m.runs) {
        if (r.case_id != id || r.scheme != sc) continue;
        if (r.clustering == "exact" && !ex) ex = &r;
        else es = &r;
      }
      if (!es) es = ex;
      if (!ex || ex->run.failed || es->run.failed) continue;
      m.ledgers.push_back(misclassification_bound_check(c.sys, ex->run, es->run, m.exact, m.estimated,
                                                        c.control, sc));
      m.ledger_keys.emplace_back(id, sc);
    }
  return m;
}

int cmd_run(const ExperimentConfig& c) {
  const Dataset ds = load_dataset(c, "labels.csv");
  const RunMatrix m = run_matrix(c, ds);
  bool failed = false;
  for (const auto& r : m.runs) {
    Json body = run_to_json(r.run, r.metrics, c.control.rho);
    body["case"] = r.case_id;
    body["clustering"] = r.clustering;
    write_file(path_in(c, run_name(r) + ".json"), dump_json(with_provenance(c, body)));
    write_file(path_in(c, run_name(r) + ".csv"), csv_banner(c) + run_to_csv(r.run, r.metrics));
    if (r.run.failed) {
      failed = true;
      std::cerr << run_name(r) << ": " << r.run.failure << "\n";
    }
  }
  for (size_t k = 0; k < m.ledgers.size(); ++k) {
    const auto [id, sc] = m.ledger_keys[k];
    Json body = ledger_to_json(m.ledgers[k]);
    body["case"] = id;
    write_file(path_in(c, "ledger_case" + std::to_string(id) + "_" + to_string(sc) + ".json"),
               dump_json(with_provenance(c, body)));
  }

  // Table layout: one row per scheme and metric, one column per case and clustering.
  std::vector<std::pair<int, std::string>> columns;
  for (const auto& r : m.runs)
    if (std::find(columns.begin(), columns.end(), std::make_pair(r.case_id, r.clustering)) == columns.end())
      columns.emplace_back(r.case_id, r.clustering);
  std::string table = csv_banner(c) + "scheme,metric";
  for (const auto& [id, cl] : columns) table += ",case" + std::to_string(id) + "_" + cl;
  table += "\n";
  Json rmse = Json::array();
  for (Scheme sc : {Scheme::Elastic, Scheme::Cap})
    for (const char* metric : {"rmse_u", "rmse_y"}) {
      table += std::string(to_string(sc)) + "," + metric;
      for (const auto& [id, cl] : columns) {
        for (const auto& r : m.runs) {
          if (r.case_id != id || r.clustering != cl || r.scheme != sc) continue;
          const double v = std::string(metric) == "rmse_u" ? r.metrics.rmse_u : r.metrics.rmse_y;
          std::ostringstream os;
          os.precision(17);
          os << v;
          table += "," + os.str();
        }
      }
      table += "\n";
    }
  for (const auto& r : m.runs)
    rmse.push_back({{"case", r.case_id}, {"scheme", to_string(r.scheme)}, {"clustering", r.clustering},
                    {"rmse_u", r.metrics.rmse_u}, {"rmse_y", r.metrics.rmse_y},
                    {"failed", r.run.failed}, {"infinite_bpi", r.metrics.infinite_bpi}});
  write_file(path_in(c, "rmse_table.csv"), table);

  Json ledgers = Json::array();
  for (size_t k = 0; k < m.ledgers.size(); ++k)
    ledgers.push_back({{"case", m.ledger_keys[k].first}, {"scheme", to_string(m.ledger_keys[k].second)},
                       {"all_hold", m.ledgers[k].all_hold}, {"min_slack", m.ledgers[k].min_slack}});
  Json body;
  body["misclassification_rate"] = m.misclassification;
  body["runs"] = rmse;
  body["ledgers"] = ledgers;
  body["failed"] = failed;
  write_file(path_in(c, "summary.json"), dump_json(with_provenance(c, body)));
  return failed ? kSolverFailed : kOk;
}

int cmd_verify(const ExperimentConfig& c) {
  Dataset ds;
  if (fs::exists(path_in(c, "dataset.csv"))) {
    ds = load_dataset(c, "dataset.csv");
  } else {
    ds = collect_dataset(c);
  }
  std::vector<SuiteResult> suites;
  suites.push_back(fundamental_lemma_suite(c.sys, c.model, ds, c.verify.lemma_L, c.verify.lemma_trials, c.verify.seed));
  suites.push_back(rank_suite(c.sys, c.verify.rank_horizons, c.verify.rank_per_horizon, c.verify.seed + 1));
  suites.push_back(solver_oracle_suite(c.sys, c.model, c.verify.oracle_instances, c.verify.seed + 2));
  suites.push_back(shrink_threshold_suite(c.sys, c.model, c.verify.threshold_instances, c.verify.seed + 3));
  bool pass = true;
  Json list = Json::array();
  for (const auto& s : suites) {
    pass = pass && s.pass;
    list.push_back(suite_to_json(s));
    std::cout << (s.pass ? "PASS " : "FAIL ") << s.name << ": " << s.detail << "\n";
  }
  write_file(path_in(c, "verify.json"), dump_json(with_provenance(c, {{"pass", pass}, {"suites", list}})));
  return pass ? kOk : kVerifyFailed;
}

}  // namespace pwadeepc
