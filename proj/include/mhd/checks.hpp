#pragma once

// Pointwise sweeps of the constitutive relations and the discrete operators.

#include <cstdint>

#include "mhd/discrete_ops.hpp"
#include "mhd/thermo.hpp"
#include "mhd/transport.hpp"

namespace mhd {

struct GibbsCheck {
  int points = 0;
  double step = 0.0;           // relative difference step
  double worst = 0.0;          // max |residual| / (1 + |e|) at step
  double worst_half = 0.0;     // same at step / 2
  double order = 0.0;          // log2 of the summed residual ratio
  bool pass() const { return worst <= 1e-6 && order > 1.8; }
};

/// Gibbs residual at `points` random (rho, theta), log-uniform in [0.1, 10],
/// with central differences of step h = step * min(rho, theta) and h / 2.
GibbsCheck gibbs_check(const GasModel& gas, int points, std::uint64_t seed, double step = 2e-4);

struct StructureCheck {
  HypothesisReport report;
  double ratio_deviation = 0.0;  // max |reported ratio - 2/3 c1|; exact for the closed form
  /// Same ratio evaluated from P and P' in floating point, relative to the
  /// size of the cancelling terms (5/3 P + P' Z) / Z.
  double ratio_roundoff = 0.0;
  bool pass() const { return report.structural_ok() && ratio_deviation == 0.0 && ratio_roundoff <= 1e-13; }
};

/// Structural hypotheses on 200 log-spaced Z in [1e-4, 1e4].
StructureCheck structure_check(const GasModel& gas);

struct ProductionSweep {
  int samples = 0;
  double minimum = 0.0;
  int negative = 0;
};

/// Entropy production density at random theta (log-uniform in [e^-3, e^3]),
/// velocity gradients, temperature gradients and currents.
ProductionSweep production_sweep(const TransportModel& model, int samples, std::uint64_t seed);

struct OperatorCheck {
  SbpReport sbp;
  bool parallel_bitwise = false;  // OpenMP kernels equal the serial reference
  bool pass() const { return sbp.worst() <= 1e-12 && parallel_bitwise; }
};

/// Summation-by-parts and identity residuals on compactly supported random
/// fields, plus a bitwise comparison of the kernels at 1 and 4 workers.
OperatorCheck operator_check(const BoxGrid& g, int trials, std::uint64_t seed);

}  // namespace mhd
