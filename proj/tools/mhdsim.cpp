// mhdsim: batch front end.
//   mhdsim <simulate|ws-test|limit-study|check-thermo|check-ops> --config FILE --out DIR
//          [--seed N] [--steps N] [--threads N]
// Exit: 0 pass, 1 gate failure, 2 step failure, 3 configuration error, 4 IO or usage error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mhd/app.hpp"
#include "mhd/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Regularized compressible MHD solver and verification experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int steps = 0, threads = 0;
  for (const char* name : {"simulate", "ws-test", "limit-study", "check-thermo", "check-ops"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "INI configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (created if missing)")->required();
    sub->add_option("--seed", seed, "overrides control.seed");
    sub->add_option("--steps", steps, "overrides control.steps")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", threads, "worker threads (default: OpenMP default)")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mhd::kExitIoError;
  }

  CLI::App* sub = app.get_subcommands().front();
  mhd::Overrides overrides = mhd::environment_overrides();
  if (sub->count("--seed")) overrides["control.seed"] = std::to_string(seed);
  if (sub->count("--steps")) overrides["control.steps"] = std::to_string(steps);
  if (threads > 0) mhd::set_worker_count(threads);

  mhd::RunConfig config;
  try {
    config = mhd::parse_config(config_path, overrides);
  } catch (const mhd::ConfigValidationError& e) {
    for (const std::string& v : e.violations()) std::cerr << "config: " << v << '\n';
    return mhd::kExitConfigError;
  } catch (const mhd::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return mhd::kExitIoError;
  }
  for (const std::string& w : config.warnings) std::cerr << "warning: " << w << '\n';

  const int status = mhd::run_command(sub->get_name(), config, out_dir, std::cerr);
  std::cout << sub->get_name() << ": " << (status == 0 ? "PASS" : "FAIL") << " (exit " << status << ")\n";
  return status;
}
