#pragma once

// Subcommand pipelines behind the mhdsim executable. Each writes its outputs
// into an existing directory and returns the process exit status.

#include <iosfwd>
#include <string>

#include "mhd/config.hpp"

namespace mhd {

enum ExitStatus : int {
  kExitPass = 0,
  kExitGateFailure = 1,
  kExitStepFailure = 2,
  kExitConfigError = 3,
  kExitIoError = 4,
};

/// Initial state of a simulate run, ghosts applied.
FieldState initial_state(const RunConfig& c);

/// Time stepping with diagnostics.csv, steps.csv, checkpoints/ and report.json.
/// Gates: cell entropy production >= 0 and h max|div B| <= 1e-12 max|B| after
/// every step.
int run_simulate(const RunConfig& c, const std::string& out_dir);
/// Weak-strong experiment at the configured resolutions; report.json, e_rel.csv.
/// The reference is exact for the unregularized system, so eps = delta = 0.
int run_ws_test(const RunConfig& c, const std::string& out_dir);
int run_limit_study(const RunConfig& c, const std::string& out_dir);
/// Gibbs relation, structural hypotheses and a pointwise entropy-production sweep.
int run_check_thermo(const RunConfig& c, const std::string& out_dir);
/// Summation-by-parts identities and OpenMP-versus-serial kernel agreement.
int run_check_ops(const RunConfig& c, const std::string& out_dir);

/// Dispatches a subcommand. Step failures become failure.json in out_dir plus
/// one JSON line on `err`; configuration and IO errors are reported on `err`.
int run_command(const std::string& subcommand, const RunConfig& c, const std::string& out_dir, std::ostream& err);

}  // namespace mhd
