#include "mhd/transport.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mhd/errors.hpp"

namespace mhd {

namespace {
void check_theta(double theta) {
  if (!(theta > 0.0)) {
    std::ostringstream os;
    os << "transport: theta must be positive (got " << theta << ")";
    throw DomainError(os.str());
  }
}
}  // namespace

double viscosity(const TransportModel& m, double theta) {
  check_theta(theta);
  return m.mu0 * (1.0 + std::pow(theta, m.alpha));
}

double bulk_viscosity(const TransportModel& m, double theta) {
  check_theta(theta);
  return m.eta0 * (1.0 + std::pow(theta, m.alpha));
}

double conductivity(const TransportModel& m, double theta) {
  check_theta(theta);
  return m.kappa0 * (1.0 + std::pow(theta, m.beta));
}

double magnetic_diffusivity(const TransportModel& m, double theta) {
  check_theta(theta);
  return m.zeta0 * (1.0 + theta);
}

TransportCoefficients coefficients(const TransportModel& m, double theta) {
  check_theta(theta);
  const double ta = std::pow(theta, m.alpha);
  return {m.mu0 * (1.0 + ta), m.eta0 * (1.0 + ta), m.kappa0 * (1.0 + std::pow(theta, m.beta)),
          m.zeta0 * (1.0 + theta)};
}

Mat3 viscous_stress(const TransportModel& m, double theta, const Mat3& g) {
  const double mu = viscosity(m, theta);
  const double eta = bulk_viscosity(m, theta);
  const double tr = g.trace();
  Mat3 s;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s.m[i][j] = mu * (g.m[i][j] + g.m[j][i]);
  for (int i = 0; i < 3; ++i) s.m[i][i] += (eta - 2.0 / 3.0 * mu) * tr;
  return s;
}

Vec3 heat_flux(const TransportModel& m, double theta, const Vec3& grad_theta) {
  return -conductivity(m, theta) * grad_theta;
}

double entropy_production_density(const TransportModel& m, double theta, const Mat3& grad_u,
                                  const Vec3& grad_theta, const Vec3& curl_b) {
  const Mat3 s = viscous_stress(m, theta, grad_u);
  const double viscous = contract(s, grad_u);
  const double thermal = conductivity(m, theta) * dot(grad_theta, grad_theta) / theta;
  const double ohmic = magnetic_diffusivity(m, theta) * dot(curl_b, curl_b);
  const double sigma = (viscous + thermal + ohmic) / theta;
  // S:G is a sum of squares mathematically; allow only accumulated round-off.
  const double scale = (std::abs(viscous) + thermal + ohmic) / theta;
  if (sigma < -64.0 * std::numeric_limits<double>::epsilon() * scale) {
    std::ostringstream os;
    os << "entropy_production_density: negative production " << sigma;
    throw NumericalError(os.str(), sigma);
  }
  return sigma;
}

}  // namespace mhd
