#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "conestable/harness.hpp"
#include "conestable/parallel.hpp"

/// Exit codes: 0 all gates pass, 1 a gate failed, 2 the experiment raised an
/// error (see error.json), 3 invalid invocation or configuration.
int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiments for stable processes in cones"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  for (const auto& name : conestable::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--threads", threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  }
  CLI11_PARSE(app, argc, argv);
  const std::string experiment = app.get_subcommands().front()->get_name();

  conestable::ExperimentConfig config;
  try {
    std::ifstream in(config_path);
    config = conestable::ExperimentConfig::from_json(experiment, nlohmann::json::parse(in), seed);
  } catch (const std::exception& e) {
    std::cerr << "conestable: invalid configuration: " << e.what() << "\n";
    return 3;
  }
  conestable::set_worker_threads(threads);
  const auto outcome = conestable::run_experiment(config, out_dir);
  if (outcome.error) {
    std::cerr << "conestable: " << experiment << " failed: " << outcome.message << "\n";
    return 2;
  }
  std::cout << experiment << ": " << outcome.gates - outcome.failed.size() << "/" << outcome.gates
            << " gates passed\n";
  for (const auto& f : outcome.failed) std::cout << "  FAIL " << f << "\n";
  return outcome.ok ? 0 : 1;
}
