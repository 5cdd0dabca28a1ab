#include "doctest.h"

#include "pwadeepc/experiment.hpp"

#include <filesystem>

using namespace pwadeepc;
namespace fs = std::filesystem;

TEST_CASE("config defaults and json round trip") {
  const ExperimentConfig c;
  CHECK(c.data.N == 1000);
  CHECK(c.clustering.rho == 25);
  CHECK(c.control.L == 19);
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(dump_json(config_to_json(back)) == dump_json(config_to_json(c)));
}

TEST_CASE("hash ignores the output directory but not seeds") {
  ExperimentConfig a, b;
  b.out = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  override_seed(b, 99);
  CHECK(config_hash(a) != config_hash(b));
  CHECK(b.data.seed == 99);
  CHECK(b.clustering.seed == 99);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(ErrorCode::Infeasible, "")) == kSolverFailed);
  CHECK(exit_code_for(Error(ErrorCode::MaxIter, "")) == kSolverFailed);
  CHECK(exit_code_for(Error(ErrorCode::EmptyCluster, "")) == kDataFailed);
  CHECK(exit_code_for(Error(ErrorCode::InsufficientData, "")) == kDataFailed);
}

TEST_CASE("atomic write replaces content") {
  const fs::path p = fs::temp_directory_path() / "pwadeepc_write_test.txt";
  write_file(p.string(), "first");
  write_file(p.string(), "second");
  CHECK(read_file(p.string()) == "second");
  fs::remove(p);
}

TEST_CASE("bad values are rejected") {
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"clustering": {"S": 0}})")), Error);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"clustering": {"mode": "gmm"}})")), Error);
}
