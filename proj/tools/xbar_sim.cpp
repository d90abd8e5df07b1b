#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "xbarsim/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Memristive crossbar in-memory computing simulator", "xbar-sim"};
  xbarsim::RunOptions options;
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  int jobs = 0;

  app.add_option("subcommand", options.subcommand,
                 "program | infer | sweep | train | report | validate")
      ->required()
      ->check(CLI::IsMember({"program", "infer", "sweep", "train", "report", "validate"}));
  app.add_option("--config", config, "experiment config (JSON)")->required();
  app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--jobs", jobs, "worker threads (default: XBARSIM_JOBS or 1)")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  options.config_path = config;
  options.out_dir = out;
  if (*seed_opt) options.seed = seed;
  options.jobs = 1;
  if (jobs > 0) {
    options.jobs = jobs;
  } else if (const char* env = std::getenv("XBARSIM_JOBS")) {
    try {
      options.jobs = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      std::cerr << "error: XBARSIM_JOBS must be a positive integer\n";
      return 2;
    }
  }
  return xbarsim::run(options, std::cout, std::cerr);
}
