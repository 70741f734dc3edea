#pragma once

// Manufactured reference solutions and the convergence experiments built on
// them.
//
// Families (unit mode numbers shown; k_a = m_a pi / L_a in general):
//   Equilibrium     r, Theta uniform, U = 0, H = (0, 0, B0)
//   CellularFlow    r, Theta uniform, U = curl(0, 0, psi), psi = (A / pi) sin(k_x x) sin(k_y y),
//                   H = (0, 0, B0); steady
//   ResistiveDecay  r, Theta uniform, U = 0,
//                   H = (0, 0, B0 + A exp(-zeta k^2 t) sin(k_x x) sin(k_y y))
// Every family has Theta = theta_B and H x n = B_B x n on the walls, so
// references and solver runs share boundary data exactly.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhd/diagnostics.hpp"
#include "mhd/solver.hpp"

namespace mhd {

enum class ReferenceFamily { Equilibrium, CellularFlow, ResistiveDecay };

std::string to_string(ReferenceFamily f);
/// Accepts "A"/"equilibrium", "B"/"cellular_flow", "C"/"resistive_decay".
ReferenceFamily parse_family(const std::string& name);

struct ReferenceParams {
  ReferenceFamily family = ReferenceFamily::CellularFlow;
  double amplitude = 0.1;
  std::array<int, 2> modes{1, 1};  // along x and y
  double r0 = 1.0;
  double Theta0 = 1.0;
  double B0 = 0.5;  // background field along z
  std::array<double, 3> extents{1.0, 1.0, 1.0};
  MagneticBC magnetic_bc = MagneticBC::TangentialDirichlet;
};

/// Volume sources making the reference an exact solution of the
/// unregularized system. f_induction is zero for every built-in family; the
/// solver has no induction source, so experiments reject a nonzero one.
struct ForcingSet {
  ScalarFn mass;
  VectorFn momentum;
  VectorFn induction;
  ScalarFn energy;  // internal-energy equation
  bool induction_zero = true;

  SourceTerms solver_sources() const { return {mass, momentum, energy}; }
};

struct ReferenceSolution {
  ReferenceParams params;
  ScalarFn r;
  ScalarFn Theta;
  VectorFn U;
  VectorFn H;
  /// U = curl(0, 0, stream); used to sample a discretely solenoidal velocity.
  ScalarFn stream;
  BoundarySpec boundary;
};

/// Throws ConfigError for non-positive r0 or Theta0, negative or non-finite
/// amplitude, mode numbers < 1 or invalid extents.
std::pair<ReferenceSolution, ForcingSet> make_reference(const ReferenceParams& p, const PhysicsModel& m);

/// Grid matching the reference box. Throws ConfigError for fewer than the
/// minimum cells per axis.
BoxGrid reference_grid(const ReferenceParams& p, Index3 n);

/// Comparison fields at time t: cells pointwise, H pointwise on faces, U as
/// the discrete curl of the sampled stream function. Ghosts applied.
ReferenceFields sample_reference(const ReferenceSolution& ref, const BoxGrid& g, double t);
/// Initial state with exactly the sampled reference fields.
FieldState sample_state(const ReferenceSolution& ref, const BoxGrid& g, double t);

/// Smooth state with random low-mode perturbations of every field; u vanishes
/// near the walls and B = curl of a random potential (solenoidal). Deterministic
/// in the seed.
FieldState random_state(const BoxGrid& g, std::uint64_t seed, double amplitude);

// Weak-strong experiment.

struct RelativeEnergySample {
  double t = 0.0;
  double e_rel = 0.0;
};

struct WeakStrongRow {
  int n = 0;
  double h = 0.0;
  int steps = 0;
  double e_rel_initial = 0.0;
  double e_rel_max = 0.0;
  double e_rel_final = 0.0;
  double initial_energy = 0.0;
  double ballistic_cumulative = 0.0;
  double ballistic_positive = 0.0;
  double entropy_production = 0.0;
  double sigma_min = 0.0;  // smallest cell entropy production seen
  std::vector<RelativeEnergySample> series;
};

struct WeakStrongReport {
  ReferenceParams params;
  double t_end = 0.0;
  std::vector<WeakStrongRow> rows;
  /// Least-squares slope of log max E_rel against log h; NaN for fewer than
  /// two positive values.
  double fitted_order = 0.0;
  bool pass = false;
  std::string verdict;
};

/// Runs the forced solver from the sampled reference on each n^3 grid up to
/// t_end and records E_rel(t) after every step. PASS: max E_rel <= 1e-12 at
/// every resolution for the equilibrium family, fitted order >= 1 otherwise.
/// Solver failures are rethrown as StepFailure naming the resolution.
WeakStrongReport weak_strong_experiment(const ReferenceParams& p, const PhysicsModel& m,
                                        const StepControl& control, std::span<const int> resolutions,
                                        double t_end);

void write_weak_strong_report(const std::string& json_path, const std::string& csv_path,
                              const WeakStrongReport& report);

// Regularization limit study.

struct LimitEntry {
  double eps = 0.0;
  double delta = 0.0;
  double entropy_negative = 0.0;     // max(0, -entropy inequality residual)
  double ballistic_positive = 0.0;   // largest positive cumulative ballistic residual
  double distance = 0.0;             // relative energy of the final state to the eps = delta = 0 run
  double entropy_residual = 0.0;
  double ballistic_cumulative = 0.0;
  double sigma_min = 0.0;  // smallest cell entropy production over accepted steps
};

struct LimitReport {
  ReferenceParams params;
  int n = 0;
  int steps = 0;
  double dt = 0.0;
  LimitEntry baseline;  // eps = delta = 0
  std::vector<LimitEntry> entries;
  bool pass = false;
  std::string verdict;
};

/// Runs the reference problem once per (eps, delta) entry plus an eps = delta = 0
/// baseline, all with the same fixed step. Residuals are measured against the
/// limit system (eps = delta = 0). PASS iff each of the three series is
/// non-increasing up to a noise floor of 10% of its largest magnitude, with
/// round-off (1e-12 of the initial energy) as the smallest floor.
/// Throws ConfigError unless the schedule is strictly decreasing and positive.
LimitReport regularization_limit_study(const ReferenceParams& p, const PhysicsModel& m,
                                       const StepControl& control, int n,
                                       std::span<const std::pair<double, double>> schedule, double t_end);

void write_limit_report(const std::string& json_path, const LimitReport& report);

/// True if v[i+1] <= v[i] + floor for all i, floor = max(0.1 max |v|, atol).
bool decreasing_within_noise(std::span<const double> v, double atol = 0.0);

// Linear waves on 1D-equivalent periodic grids (n x 4 x 4).

struct WaveResult {
  double measured_speed = 0.0;
  double predicted_speed = 0.0;
  int crossings = 0;
  double relative_error() const;
};

/// Standing sound wave of the adiabatic density perturbation at wavenumber
/// 2 pi; predicted speed from the linearized equation of state.
WaveResult acoustic_wave_experiment(const GasModel& gas, int n, double amplitude = 1e-4);
/// Standing transverse Alfven wave along B = (B0, 0, 0), rho = theta = 1,
/// mu = zeta = 1e-4.
WaveResult alfven_wave_experiment(const GasModel& gas, int n, double B0 = 1.0, double amplitude = 1e-4);

// Conservation runs.

struct DriftResult {
  int n = 0;
  int steps = 0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  double relative_drift() const;
};

/// Random smooth data with theta = theta_B = 1, B_B = 0, g = 0, eps = delta = 0,
/// insulated walls and zero tangential EMF: no energy crosses the boundary.
DriftResult energy_drift_experiment(int n, int steps, std::uint64_t seed);

struct SolenoidalResult {
  int steps = 0;
  double div_max = 0.0;  // max over cells of h |div B|
  double B_max = 0.0;
  double relative() const { return B_max > 0.0 ? div_max / B_max : div_max; }
};

/// Full solver from random_state plus a uniform background field (also the
/// wall data) on an n^3 walled box.
SolenoidalResult solenoidality_experiment(int n, int steps, std::uint64_t seed);

}  // namespace mhd
