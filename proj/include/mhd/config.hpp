#pragma once

// Run configuration: INI sections [grid] [gas] [transport] [regularization]
// [boundary] [initial] [control] [output] [experiment]. Keys and defaults are
// listed in README.md. Environment variables MHD__<SECTION>__<KEY> override
// file values (names are case-insensitive).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mhd/errors.hpp"
#include "mhd/grid.hpp"
#include "mhd/solver.hpp"
#include "mhd/verification.hpp"

namespace mhd {

enum class InitialProfile { Uniform, Random, Reference, Checkpoint };

struct InitialConfig {
  InitialProfile profile = InitialProfile::Uniform;
  double rho = 1.0;
  double theta = 1.0;
  Vec3 u{};
  Vec3 B{};            // added to the random or uniform field
  double amplitude = 0.1;  // random perturbations
  std::string checkpoint;
};

struct ExperimentConfig {
  ReferenceParams reference;  // extents and magnetic BC follow [grid] and [boundary]
  std::vector<int> resolutions{16, 32};
  double t_end = 0.25;
  int limit_resolution = 16;
  std::vector<double> schedule{1e-2, 1e-3, 1e-4};  // eps = delta per entry
};

struct OutputConfig {
  int diagnostics_every = 1;
  int checkpoint_every = 0;  // 0: final state only
};

struct RunConfig {
  BoxGrid grid;
  PhysicsModel model;
  double theta_b = 1.0;
  Vec3 B_B{};
  Mat3 B_B_gradient{};  // B_B(x) = B_B + gradient x
  Vec3 gravity{};
  MagneticBC magnetic_bc = MagneticBC::TangentialDirichlet;
  ThermalBC thermal_bc = ThermalBC::Dirichlet;
  InitialConfig initial;
  StepControl control;
  int steps = 100;
  double t_end = 0.0;  // > 0 stops at t_end as well
  std::uint64_t seed = 1;
  OutputConfig output;
  ExperimentConfig experiment;

  std::vector<std::string> warnings;
  /// Effective values (after overrides) keyed by section then key.
  std::map<std::string, std::map<std::string, std::string>> effective;

  BoundarySpec boundary() const;
};

/// All violations of one configuration; what() joins them with newlines.
class ConfigValidationError : public ConfigError {
 public:
  explicit ConfigValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

using Overrides = std::map<std::string, std::string>;  // "section.key" -> value

/// MHD__SECTION__KEY variables of the process environment.
Overrides environment_overrides();

/// Throws IoError if the file cannot be read and ConfigValidationError
/// listing every violation.
RunConfig parse_config(const std::string& path, const Overrides& overrides = environment_overrides());
RunConfig parse_config_text(const std::string& text, const Overrides& overrides = {});

}  // namespace mhd
