#pragma once

// Time integration of the regularized compressible MHD system on the
// staggered grid.
//
// Evolved variables: rho (cells), momentum m = rho_f u (faces, rho_f the face
// average of rho), B (faces), internal energy E = rho (e + delta theta) (cells).
// theta is recovered from E after every stage. B is advanced only through
// the face curl of edge EMFs, so div B is preserved to round-off.

#include <string>

#include "mhd/grid.hpp"
#include "mhd/thermo.hpp"
#include "mhd/transport.hpp"

namespace mhd {

struct RegularizationParams {
  double eps = 1e-3;    // parabolic density regularization
  double delta = 1e-3;  // pressure / viscosity / heat-flux augmentation
  double Gamma = 8.0;   // artificial pressure exponent, > 2
  /// Density-gradient heating coefficient eps delta (Gamma rho^{Gamma-2} + 2)
  /// instead of the default eps delta (rho^{Gamma-2} + 2).
  bool gamma_weighted_heating = false;

  /// Throws ConfigError on eps < 0, delta < 0 or Gamma <= 2.
  void validate() const;
};

enum class DiffusionTreatment { Explicit, LaggedImplicit };
enum class Integrator { SspRk3, Heun };

struct StepControl {
  double cfl = 0.4;
  double dt_max = 1e-2;
  int max_halvings = 10;
  DiffusionTreatment diffusion = DiffusionTreatment::Explicit;
  Integrator integrator = Integrator::SspRk3;
  double cg_rtol = 1e-10;
  int cg_max_iterations = 5000;

  void validate() const;
};

struct PhysicsModel {
  GasModel gas;
  TransportModel transport;
  RegularizationParams reg;
};

/// Coefficients actually used by the regularized system.
double effective_viscosity(const PhysicsModel& m, double theta);      // mu + delta theta
double effective_conductivity(const PhysicsModel& m, double theta);   // kappa + delta (theta^Gamma + 1/theta)

/// Optional volume sources (manufactured solutions). Unset members are zero.
struct SourceTerms {
  ScalarFn mass;
  VectorFn momentum;
  ScalarFn energy;
};

/// Time derivatives of the evolved variables.
struct Rates {
  Array3 rho;
  FaceField m;
  FaceField B;
  Array3 E;
};

enum RatePart : unsigned { kTransportPart = 1u, kDiffusionPart = 2u, kAllParts = 3u };

/// All rates at time t for a state whose ghosts are already applied.
/// kDiffusionPart covers eps Lap(rho), div S_delta, zeta curl B in the EMF
/// and -div q_delta; everything else (including the dissipative heating) is
/// kTransportPart.
Rates compute_rates(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model,
                    const SourceTerms& src, double t, unsigned parts = kAllParts);

// Individual right-hand sides (ghosts applied, no sources).
Array3 rhs_continuity(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);
FaceField rhs_momentum(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);
/// Edge EMF (B x u + zeta curl B); zero on wall edges under NormalFluxZeroEMF.
EdgeField induction_emf(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);
/// -curl_ef(EMF).
FaceField rhs_induction(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);
Array3 rhs_internal_energy(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);

/// Per-cell dissipative heating S_delta : grad u and zeta |curl B|^2.
struct Dissipation {
  Array3 viscous;
  Array3 ohmic;
};
Dissipation dissipation(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& model);

/// Cell-centred entropy production density from the transport module.
Array3 entropy_production(const FieldState& s, const PhysicsModel& model);

struct StepReport {
  double t = 0.0;
  double dt = 0.0;
  double min_rho = 0.0;
  double min_theta = 0.0;
  double max_u = 0.0;
  double max_B = 0.0;
  double divB_max = 0.0;
  double sigma_min = 0.0;
  int halvings = 0;
  int cg_iterations = 0;
};

StepReport make_report(const FieldState& s, const PhysicsModel& model, double dt);

/// Largest stable step from advective (|u| + c_s + v_A) and, for explicit
/// diffusion, diffusive limits; capped by dt_max.
double stable_dt(const FieldState& s, const PhysicsModel& model, const StepControl& control);

class Solver {
 public:
  Solver(PhysicsModel model, StepControl control, BoundarySpec bc, SourceTerms sources = {});

  /// Advances by one accepted step. Throws PositivityFailure, SolverDivergence
  /// or CFLCollapse.
  StepReport step(FieldState& state) const;
  /// Same, with a fixed step size (still halved on positivity failure).
  StepReport step_with(FieldState& state, double dt) const;

  const PhysicsModel& model() const { return model_; }
  const StepControl& control() const { return control_; }
  const BoundarySpec& boundary() const { return bc_; }

 private:
  PhysicsModel model_;
  StepControl control_;
  BoundarySpec bc_;
  SourceTerms src_;
};

/// Conserved-variable helpers.
Array3 internal_energy_density(const FieldState& s, const PhysicsModel& model);
FaceField face_density(const FieldState& s);

}  // namespace mhd
