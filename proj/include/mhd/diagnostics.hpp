#pragma once

// Energy and entropy functionals of a discrete state, and residuals of the
// integral balances that define weak solutions.
//
// Quadrature: cell-centred quantities use the midpoint rule over cells; face
// quantities (kinetic and magnetic energy, fluxes) use the trapezoid face
// weights of the staggered grid, matching the quantities the solver
// conserves. Time integrals over a sampled history use the trapezoid rule.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhd/grid.hpp"
#include "mhd/solver.hpp"

namespace mhd {

struct EnergyParts {
  double kinetic = 0.0;
  double internal = 0.0;
  double magnetic = 0.0;
  double total() const { return kinetic + internal + magnetic; }
};

EnergyParts energy_parts(const FieldState& s, const GasModel& gas);
double total_energy(const FieldState& s, const GasModel& gas);
double total_entropy(const FieldState& s, const GasModel& gas);

/// Harmonic extension of the boundary temperature into the cells (ghosts
/// filled). Constant boundary data short-circuits to a constant field.
Array3 harmonic_extension(const BoxGrid& g, const BoundarySpec& bc, double t);

/// B_B sampled on all faces including ghosts.
FaceField background_faces(const BoxGrid& g, const BoundarySpec& bc, double t);

/// Total energy minus theta_tilde rho s minus B_B . B. Throws DomainError
/// if theta_tilde is not positive on the cells.
double ballistic_energy(const FieldState& s, const GasModel& gas, const Array3& theta_tilde,
                        const FaceField& B_B);

/// Solver-consistent dissipation weighted by a positive or nonnegative cell
/// field w (ghosts filled): sum of (w / theta)(viscous + ohmic heating) over
/// cells and w kappa |grad theta|^2 / theta^2 over faces.
double weighted_dissipation(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m,
                            const Array3& w);

/// Outward heat flux and Poynting flux through the walls.
double boundary_heat_flux(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m);
double boundary_poynting_flux(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m);

struct EnergyReport {
  double t = 0.0;
  double total_energy = 0.0;
  double ballistic_energy = 0.0;
  double entropy_total = 0.0;
  double entropy_production_integral = 0.0;  // over the last interval
  double ballistic_residual = 0.0;           // LHS - RHS over the last interval
  double divB_max = 0.0;
  double boundary_heat_flux = 0.0;
  double boundary_poynting_flux = 0.0;
};

/// Column names of diagnostics.csv, in order.
const std::vector<std::string>& energy_report_columns();
/// Writes the header and rows with 17 significant digits.
void write_energy_reports(const std::string& path, std::span<const EnergyReport> rows);

/// Streams states of one run and produces one EnergyReport per sample. The
/// first sample has zero interval quantities. States must be ordered in time
/// and share the grid.
class EnergyMonitor {
 public:
  EnergyMonitor(PhysicsModel model, BoundarySpec bc, SourceTerms src = {});

  EnergyReport observe(const FieldState& s);

  /// Ballistic residual summed over all intervals so far.
  double cumulative_ballistic_residual() const { return cumulative_; }
  /// Largest positive part of the cumulative residual seen so far.
  double max_positive_ballistic_residual() const { return max_positive_; }
  double initial_energy() const { return initial_energy_; }

 private:
  struct Snapshot {
    double t = 0.0;
    double energy = 0.0;
    FaceField B;
    FaceField B_B;
    Array3 theta_tilde;
    Array3 rho_s;
    double rate = 0.0;        // integrand of the ballistic balance at this time
    double production = 0.0;  // unweighted entropy production
  };
  Snapshot snapshot(const FieldState& s) const;

  PhysicsModel model_;
  BoundarySpec bc_;
  SourceTerms src_;
  std::optional<Snapshot> prev_;
  double cumulative_ = 0.0;
  double max_positive_ = 0.0;
  double initial_energy_ = 0.0;
};

/// Per-interval ballistic residuals of a uniformly sampled history.
std::vector<double> ballistic_balance_residual(std::span<const FieldState> history, const PhysicsModel& m,
                                               const BoundarySpec& bc, const SourceTerms& src = {});

// Test functions for the integral identities. Gradients are analytic:
// grad(i, j) = d value_i / d x_j.

struct ScalarTest {
  std::string name;
  ScalarFn value;
  ScalarFn dt;
  VectorFn grad;
};

using TensorFn = std::function<Mat3(double, const Vec3&)>;

struct VectorTest {
  std::string name;
  VectorFn value;
  VectorFn dt;
  TensorFn grad;
};

struct TestDictionary {
  std::vector<ScalarTest> scalar;     // continuity and its renormalized form
  std::vector<VectorTest> momentum;   // phi . n = 0 on walls
  std::vector<VectorTest> induction;  // phi x n = 0 (tangential BC) or phi . n = 0
};

/// Low-mode trigonometric functions satisfying the boundary constraints.
TestDictionary default_test_dictionary(const BoxGrid& g, MagneticBC mbc);

/// Throws ConfigError naming the violated constraint.
void check_test_dictionary(const BoxGrid& g, MagneticBC mbc, const TestDictionary& dict);

struct WeakResidual {
  std::string equation;  // continuity, renormalized, momentum, induction
  std::string test;
  double residual = 0.0;
  double scale = 0.0;  // sum of magnitudes of all contributions
};

/// Residuals (LHS - RHS, including volume sources) of the weak continuity,
/// renormalized continuity (b(rho) = rho / (1 + rho)), momentum and induction
/// identities over the history.
std::vector<WeakResidual> weak_form_residuals(std::span<const FieldState> history, const PhysicsModel& m,
                                              const BoundarySpec& bc, const TestDictionary& dict,
                                              const SourceTerms& src = {});

/// Value of (RHS - LHS) of the entropy inequality over the history for a
/// nonnegative test function vanishing near the walls. Nonnegative up to
/// scheme error. Throws ConfigError for a negative or non-vanishing test.
double entropy_inequality_residual(std::span<const FieldState> history, const PhysicsModel& m,
                                   const BoundarySpec& bc, const ScalarTest& phi, const SourceTerms& src = {});

/// Smooth nonnegative bump supported at least `margin` away from every wall.
ScalarTest bump_test(const BoxGrid& g, double margin);

// Relative energy.

/// Comparison fields sampled on the grid.
struct ReferenceFields {
  Array3 r;
  Array3 Theta;
  FaceField U;
  FaceField H;
};

/// Pointwise thermal part: rho e - Theta (rho s - r s_r) - (e_r - Theta s_r + p_r / r)(rho - r) - r e_r.
double relative_thermal_density(const GasModel& gas, double rho, double theta, double r, double Theta);

/// Cells for the thermal part, trapezoid faces for 1/2 rho_f |u - U|^2 and
/// 1/2 |B - H|^2. Throws DomainError for non-positive r or Theta.
double relative_energy(const FieldState& s, const ReferenceFields& ref, const GasModel& gas);

struct EssResSplit {
  std::vector<char> ess_mask;  // one entry per interior cell, x fastest
  double rho_lo = 0.0, rho_hi = 0.0, theta_lo = 0.0, theta_hi = 0.0;
  std::size_t essential_count() const;
};

/// Essential cells: rho in [inf r / 2, 2 sup r] and theta in [inf Theta / 2, 2 sup Theta].
EssResSplit ess_res_split(const FieldState& s, const ReferenceFields& ref);

struct CoercivityBox {
  double r_lo = 0.5, r_hi = 2.0;
  double Theta_lo = 0.5, Theta_hi = 2.0;
};

/// Brute-force minimum of thermal(rho, theta | r, Theta) / (|rho - r|^2 + |theta - Theta|^2)
/// over an n^4 lattice of the essential box, combined with the kinetic
/// (rho_lo / 2) and magnetic (1/2) constants.
double coercivity_constant(const GasModel& gas, const CoercivityBox& box, int n);

}  // namespace mhd
