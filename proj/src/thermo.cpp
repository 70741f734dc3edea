#include "mhd/thermo.hpp"

#include <algorithm>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "mhd/errors.hpp"

namespace mhd {

namespace {

constexpr double kFiveThirds = 5.0 / 3.0;

[[noreturn]] void domain_fail(const char* what, const char* field, double value) {
  std::ostringstream os;
  os << what << ": " << field << " must be positive (got " << value << ")";
  throw DomainError(os.str());
}

}  // namespace

// ---------------------------------------------------------------------------
// Tabulated structural function

struct TabulatedStructure::Impl {
  boost::math::interpolators::cardinal_cubic_b_spline<double> log_p;
  double w0 = 0.0;
  double dw = 0.0;
  int n = 0;
  std::vector<double> s_knots;  // S at knots, S(w=0) = 0

  double dS_dw(double w) const {
    // Z S'(Z) = -3/2 (P/Z) (5/3 - dlogP/dlogZ)
    const double z = std::exp(w);
    const double p = std::exp(log_p(w));
    return -1.5 * (p / z) * (kFiveThirds - log_p.prime(w));
  }

  double integrate(double wa, double wb) const {
    return boost::math::quadrature::gauss<double, 20>::integrate(
        [this](double w) { return dS_dw(w); }, wa, wb);
  }
};

TabulatedStructure::TabulatedStructure(double log_z0, double dlog_z,
                                       std::vector<double> p_values) {
  if (p_values.size() < 4) throw ConfigError("tabulated P needs at least 4 samples");
  if (!(dlog_z > 0.0)) throw ConfigError("tabulated P needs increasing Z");
  std::vector<double> logs;
  logs.reserve(p_values.size());
  for (double p : p_values) {
    if (!(p > 0.0)) throw ConfigError("tabulated P must be positive for Z > 0");
    logs.push_back(std::log(p));
  }
  auto impl = std::make_shared<Impl>();
  impl->log_p = boost::math::interpolators::cardinal_cubic_b_spline<double>(
      logs.begin(), logs.end(), log_z0, dlog_z);
  impl->w0 = log_z0;
  impl->dw = dlog_z;
  impl->n = static_cast<int>(p_values.size());
  impl->s_knots.resize(p_values.size());
  // Anchor at the knot closest to Z = 1, then integrate outward knot by knot.
  const double w_end = log_z0 + dlog_z * (impl->n - 1);
  const double w_anchor = std::clamp(0.0, log_z0, w_end);
  int anchor = static_cast<int>(std::lround((w_anchor - log_z0) / dlog_z));
  anchor = std::clamp(anchor, 0, impl->n - 1);
  impl->s_knots[static_cast<std::size_t>(anchor)] =
      impl->integrate(w_anchor, log_z0 + dlog_z * anchor);
  for (int i = anchor + 1; i < impl->n; ++i)
    impl->s_knots[static_cast<std::size_t>(i)] =
        impl->s_knots[static_cast<std::size_t>(i - 1)] +
        impl->integrate(log_z0 + dlog_z * (i - 1), log_z0 + dlog_z * i);
  for (int i = anchor - 1; i >= 0; --i)
    impl->s_knots[static_cast<std::size_t>(i)] =
        impl->s_knots[static_cast<std::size_t>(i + 1)] -
        impl->integrate(log_z0 + dlog_z * i, log_z0 + dlog_z * (i + 1));
  impl_ = std::move(impl);
}

double TabulatedStructure::z_min() const { return std::exp(impl_->w0); }
double TabulatedStructure::z_max() const { return std::exp(impl_->w0 + impl_->dw * (impl_->n - 1)); }

namespace {
double checked_log(const TabulatedStructure& t, double z) {
  // small slack for round-off at the table ends
  if (!(z >= t.z_min() * (1 - 1e-12) && z <= t.z_max() * (1 + 1e-12))) {
    std::ostringstream os;
    os << "tabulated P: Z = " << z << " outside table range [" << t.z_min() << ", " << t.z_max()
       << "]";
    throw DomainError(os.str());
  }
  return std::log(z);
}
}  // namespace

double TabulatedStructure::P(double z) const { return std::exp(impl_->log_p(checked_log(*this, z))); }

double TabulatedStructure::dP(double z) const {
  const double w = checked_log(*this, z);
  return std::exp(impl_->log_p(w)) / z * impl_->log_p.prime(w);
}

double TabulatedStructure::S(double z) const {
  const double w = checked_log(*this, z);
  int i = static_cast<int>(std::floor((w - impl_->w0) / impl_->dw));
  i = std::clamp(i, 0, impl_->n - 1);
  const double wi = impl_->w0 + impl_->dw * i;
  return impl_->s_knots[static_cast<std::size_t>(i)] + impl_->integrate(wi, w);
}

// ---------------------------------------------------------------------------
// Gas model

double GasModel::P(double z) const {
  if (z <= 0.0) return 0.0;
  if (table) return table->P(z);
  return c1 * z + p_inf * z * std::cbrt(z * z);
}

double GasModel::dP(double z) const {
  if (table) return table->dP(z);
  return c1 + kFiveThirds * p_inf * std::cbrt(z * z);
}

double GasModel::S(double z) const {
  if (table) return table->S(z) + s0;
  // (5/3) P - P' Z = (2/3) c1 Z, hence S'(Z) = -c1 / Z.
  return -c1 * std::log(z) + s0;
}

ThermoPoint eos_eval(const GasModel& gas, double rho, double theta) {
  if (!(rho > 0.0)) domain_fail("eos_eval", "rho", rho);
  if (!(theta > 0.0)) domain_fail("eos_eval", "theta", theta);

  ThermoPoint tp;
  tp.rho = rho;
  tp.theta = theta;

  double dpm_drho = 0.0;
  double dpm_dtheta = 0.0;
  if (gas.table) {
    const double t32 = theta * std::sqrt(theta);
    const double z = rho / t32;
    const double P = gas.table->P(z);
    const double dP = gas.table->dP(z);
    tp.p_M = theta * t32 * P;
    dpm_drho = theta * dP;
    dpm_dtheta = t32 * (2.5 * P - 1.5 * dP * z);
    tp.s_M = gas.S(z);
  } else {
    const double rho23 = std::cbrt(rho * rho);
    tp.p_M = gas.c1 * rho * theta + gas.p_inf * rho * rho23;
    dpm_drho = gas.c1 * theta + kFiveThirds * gas.p_inf * rho23;
    dpm_dtheta = gas.c1 * rho;
    tp.s_M = -gas.c1 * std::log(rho) + 1.5 * gas.c1 * std::log(theta) + gas.s0;
  }
  tp.e_M = 1.5 * tp.p_M / rho;

  const double t3 = theta * theta * theta;
  const double t4 = t3 * theta;
  tp.p_R = gas.a * t4 / 3.0;
  tp.e_R = gas.a * t4 / rho;
  tp.s_R = 4.0 * gas.a * t3 / (3.0 * rho);

  tp.p = tp.p_M + tp.p_R;
  tp.e = tp.e_M + tp.e_R;
  tp.s = tp.s_M + tp.s_R;

  tp.dp_drho = dpm_drho;
  tp.dp_dtheta = dpm_dtheta + 4.0 * gas.a * t3 / 3.0;
  tp.de_dtheta = 1.5 * dpm_dtheta / rho + 4.0 * gas.a * t3 / rho;
  tp.de_drho = 1.5 * (dpm_drho / rho - tp.p_M / (rho * rho)) - gas.a * t4 / (rho * rho);
  return tp;
}

std::pair<double, double> gibbs_residual(const GasModel& gas, double rho, double theta,
                                         double h) {
  if (!(rho > 0.0)) domain_fail("gibbs_residual", "rho", rho);
  if (!(theta > 0.0)) domain_fail("gibbs_residual", "theta", theta);
  if (!(h > 0.0) || h >= 0.5 * std::min(rho, theta)) {
    std::ostringstream os;
    os << "gibbs_residual: step h = " << h << " must satisfy 0 < h < min(rho, theta)/2";
    throw DomainError(os.str());
  }
  const ThermoPoint c = eos_eval(gas, rho, theta);
  const ThermoPoint tp = eos_eval(gas, rho, theta + h);
  const ThermoPoint tm = eos_eval(gas, rho, theta - h);
  const ThermoPoint rp = eos_eval(gas, rho + h, theta);
  const ThermoPoint rm = eos_eval(gas, rho - h, theta);
  const double s_theta = (tp.s - tm.s) / (2 * h);
  const double e_theta = (tp.e - tm.e) / (2 * h);
  const double s_rho = (rp.s - rm.s) / (2 * h);
  const double e_rho = (rp.e - rm.e) / (2 * h);
  return {theta * s_theta - e_theta, theta * s_rho - e_rho + c.p / (rho * rho)};
}

double adiabatic_sound_speed_sq(const ThermoPoint& tp) {
  return tp.dp_drho + tp.theta * tp.dp_dtheta * tp.dp_dtheta / (tp.rho * tp.rho * tp.de_dtheta);
}

double theta_from_energy(const GasModel& gas, double rho, double rho_e, double delta,
                         double theta_guess) {
  auto f = [&](double th, double& df) {
    const ThermoPoint tp = eos_eval(gas, rho, th);
    df = rho * (tp.de_dtheta + delta);
    return rho * (tp.e + delta * th) - rho_e;
  };
  double df = 0.0;
  // e(rho, theta) is increasing in theta; a root exists iff f(0+) < 0.
  const double tiny = 1e-12;
  if (f(tiny, df) >= 0.0) return -1.0;

  double lo = tiny;
  double hi = theta_guess > tiny ? theta_guess : 1.0;
  double fhi = f(hi, df);
  while (fhi < 0.0) {
    lo = hi;
    hi *= 2.0;
    fhi = f(hi, df);
    if (hi > 1e150) return -1.0;
  }
  double th = theta_guess > lo && theta_guess < hi ? theta_guess : hi;
  for (int it = 0; it < 200; ++it) {
    const double fv = f(th, df);
    if (fv > 0.0)
      hi = th;
    else
      lo = th;
    double next = th - fv / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - th) <= 1e-15 * th) return next;
    th = next;
    if (hi - lo <= 1e-15 * hi) return th;
  }
  return th;
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  std::vector<double> z;
  if (n <= 0) return z;
  if (n == 1) return {lo};
  const double l0 = std::log(lo), l1 = std::log(hi);
  for (int i = 0; i < n; ++i) z.push_back(std::exp(l0 + (l1 - l0) * i / (n - 1)));
  return z;
}

HypothesisReport hypothesis_report(const GasModel& gas, const std::vector<double>& z_grid) {
  HypothesisReport rep;
  rep.p_zero_at_origin = gas.P(0.0) == 0.0;
  rep.heat_capacity_all = true;
  rep.monotone_all = true;
  rep.stability_all = true;
  const double thetas[] = {0.1, 1.0, 10.0};
  double prev_ratio = std::numeric_limits<double>::infinity();
  for (double z : z_grid) {
    HypothesisRow row;
    row.z = z;
    row.P = gas.P(z);
    row.dP = gas.dP(z);
    // The closed form cancels the p_inf terms analytically.
    row.heat_capacity_ratio = gas.table ? (kFiveThirds * row.P - row.dP * z) / z : 2.0 / 3.0 * gas.c1;
    row.scaled_pressure = row.P / std::pow(z, kFiveThirds);
    row.heat_capacity_ok = row.dP > 0.0 && row.heat_capacity_ratio > 0.0 && std::isfinite(row.heat_capacity_ratio);
    row.monotone_ok = row.scaled_pressure < prev_ratio;
    prev_ratio = row.scaled_pressure;
    row.stability_ok = true;
    for (double th : thetas) {
      const double rho = z * th * std::sqrt(th);
      const ThermoPoint tp = eos_eval(gas, rho, th);
      row.stability_ok = row.stability_ok && tp.dp_drho > 0.0 && tp.de_dtheta > 0.0;
    }
    rep.heat_capacity_ratio_max = std::max(rep.heat_capacity_ratio_max, row.heat_capacity_ratio);
    rep.heat_capacity_all = rep.heat_capacity_all && row.heat_capacity_ok;
    rep.monotone_all = rep.monotone_all && row.monotone_ok;
    rep.stability_all = rep.stability_all && row.stability_ok;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) {
    const HypothesisRow& last = rep.rows.back();
    rep.degenerate_limit_estimate = last.scaled_pressure;
    rep.degenerate_limit_ok = gas.p_inf > 0.0 && last.scaled_pressure >= gas.p_inf * (1 - 1e-12) &&
                std::abs(last.scaled_pressure - gas.p_inf) <= 1e-2 * gas.p_inf;

    // lim S(Z) = 0 as Z -> infinity. The closed-form family has S = -c1 log Z + s0,
    // which diverges for every admissible c1 > 0.
    const double z_hi = last.z;
    rep.third_law_estimate = gas.S(z_hi);
    if (gas.table) {
      const double s_prev = gas.S(std::max(z_grid.front(), z_hi / 10.0));
      rep.third_law_ok = std::abs(rep.third_law_estimate) <= 1e-3 &&
                         std::abs(rep.third_law_estimate) <= std::abs(s_prev);
    } else {
      rep.third_law_ok = !(gas.c1 > 0.0) && gas.s0 == 0.0;
    }
  }
  return rep;
}

}  // namespace mhd
