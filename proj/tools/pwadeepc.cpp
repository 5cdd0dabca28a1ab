#include "pwadeepc/error.hpp"
#include "pwadeepc/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace pwadeepc;
  CLI::App app{"Data-driven predictive control of piecewise affine systems"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  const char* names[] = {"collect", "cluster", "run", "verify"};
  const char* help[] = {"collect closed-loop data with the oracle controller",
                        "cluster the dataset and build the data matrices",
                        "run the closed-loop experiment matrix",
                        "run the verification suites"};
  for (int k = 0; k < 4; ++k) {
    auto* sub = app.add_subcommand(names[k], help[k]);
    sub->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "seed for data, clustering and verification");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig c = load_config(config_path);
    if (!out.empty()) c.out = out;
    for (auto* sub : app.get_subcommands()) {
      if (sub->count("--seed")) override_seed(c, seed);
      const std::string name = sub->get_name();
      if (name == "collect") return cmd_collect(c);
      if (name == "cluster") return cmd_cluster(c);
      if (name == "run") return cmd_run(c);
      if (name == "verify") return cmd_verify(c);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataFailed;
  }
  return kOk;
}
