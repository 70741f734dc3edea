#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

namespace mhd {

/// Structural function P(Z) given as a table, uniform in log Z.
///
/// P and P' come from a cubic B-spline in (log Z, log P); the molecular
/// entropy S(Z) is the antiderivative of
///   S'(Z) = -3/2 * (5/3 P(Z) - P'(Z) Z) / Z^2,
/// anchored so that S(1) = 0 (the gas adds its own s0). Interpolation error is
/// O(dlogz^4) for P, O(dlogz^3) for P'.
class TabulatedStructure {
 public:
  TabulatedStructure(double log_z0, double dlog_z, std::vector<double> p_values);

  /// Samples `p` on n log-spaced points in [z_min, z_max].
  template <class F>
  static TabulatedStructure sample(F&& p, double z_min, double z_max, int n);

  double z_min() const;
  double z_max() const;
  double P(double z) const;
  double dP(double z) const;
  double S(double z) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Equation-of-state parameters.
///
/// The default structural function is P(Z) = c1 Z + p_inf Z^{5/3}. When `table`
/// is set it replaces the closed form; p_inf is then only the expected
/// asymptotic value of P(Z)/Z^{5/3}.
struct GasModel {
  double c1 = 1.0;
  double p_inf = 1.0;
  double a = 1e-2;   // radiation constant
  double s0 = 0.0;   // additive entropy normalization
  std::shared_ptr<const TabulatedStructure> table;

  double P(double z) const;
  double dP(double z) const;
  /// Molecular entropy function including s0.
  double S(double z) const;
};

struct ThermoPoint {
  double rho = 0.0;
  double theta = 0.0;
  double p = 0.0;
  double e = 0.0;
  double s = 0.0;
  double dp_drho = 0.0;
  double dp_dtheta = 0.0;
  double de_drho = 0.0;
  double de_dtheta = 0.0;
  // molecular and radiation parts
  double p_M = 0.0, e_M = 0.0, s_M = 0.0;
  double p_R = 0.0, e_R = 0.0, s_R = 0.0;
};

/// Evaluates p, e, s and their first derivatives. Throws DomainError for
/// non-positive rho or theta.
ThermoPoint eos_eval(const GasModel& gas, double rho, double theta);

/// Gibbs relation residual (theta s_theta - e_theta, theta s_rho - e_rho + p/rho^2)
/// with central differences of step h applied to eos_eval outputs.
std::pair<double, double> gibbs_residual(const GasModel& gas, double rho, double theta,
                                         double h);

/// Adiabatic sound speed squared, dp/drho + theta (dp/dtheta)^2 / (rho^2 de/dtheta).
double adiabatic_sound_speed_sq(const ThermoPoint& tp);

/// Solves rho*(e(rho,theta) + delta*theta) = rho_e for theta > 0 by safeguarded
/// Newton iteration. Returns a non-positive value when no positive root exists.
double theta_from_energy(const GasModel& gas, double rho, double rho_e, double delta,
                         double theta_guess);

struct HypothesisRow {
  double z = 0.0;
  double P = 0.0;
  double dP = 0.0;
  double heat_capacity_ratio = 0.0;  // (5/3 P - P' Z) / Z
  double scaled_pressure = 0.0;      // P / Z^{5/3}
  bool heat_capacity_ok = false;     // P' > 0 and 0 < heat_capacity_ratio < inf
  bool monotone_ok = false;
  bool stability_ok = false;
};

struct HypothesisReport {
  std::vector<HypothesisRow> rows;
  bool p_zero_at_origin = false;
  double heat_capacity_ratio_max = 0.0;
  bool heat_capacity_all = false;
  bool monotone_all = false;
  double degenerate_limit_estimate = 0.0;
  bool degenerate_limit_ok = false;
  bool stability_all = false;
  double third_law_estimate = 0.0;
  bool third_law_ok = false;

  bool structural_ok() const {
    return p_zero_at_origin && heat_capacity_all && monotone_all && degenerate_limit_ok && stability_all;
  }
};

/// Samples the structural hypotheses on an ascending grid of Z > 0. The
/// stability signs are sampled at rho = Z theta^{3/2} for theta in {0.1, 1, 10}.
HypothesisReport hypothesis_report(const GasModel& gas, const std::vector<double>& z_grid);

std::vector<double> log_spaced(double lo, double hi, int n);

template <class F>
TabulatedStructure TabulatedStructure::sample(F&& p, double z_min, double z_max, int n) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n));
  const double l0 = std::log(z_min);
  const double dl = (std::log(z_max) - l0) / (n - 1);
  for (int i = 0; i < n; ++i) values.push_back(p(std::exp(l0 + dl * i)));
  return TabulatedStructure(l0, dl, std::move(values));
}

}  // namespace mhd
