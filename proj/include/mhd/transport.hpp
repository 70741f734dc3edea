#pragma once

#include "mhd/vec3.hpp"

namespace mhd {

/// Temperature-dependent transport coefficients
///   mu(theta)    = mu0    (1 + theta^alpha)
///   eta(theta)   = eta0   (1 + theta^alpha)
///   kappa(theta) = kappa0 (1 + theta^beta)
///   zeta(theta)  = zeta0  (1 + theta)
struct TransportModel {
  double mu0 = 1e-2;
  double eta0 = 1e-2;
  double kappa0 = 1e-2;
  double zeta0 = 1e-2;
  double alpha = 0.5;
  double beta = 3.0;
};

struct TransportCoefficients {
  double mu = 0.0;
  double eta = 0.0;
  double kappa = 0.0;
  double zeta = 0.0;
};

TransportCoefficients coefficients(const TransportModel& model, double theta);

double viscosity(const TransportModel& model, double theta);
double bulk_viscosity(const TransportModel& model, double theta);
double conductivity(const TransportModel& model, double theta);
double magnetic_diffusivity(const TransportModel& model, double theta);

/// Newtonian stress mu (G + G^T - 2/3 tr G I) + eta tr G I, with G = grad u.
Mat3 viscous_stress(const TransportModel& model, double theta, const Mat3& grad_u);

/// Fourier heat flux -kappa(theta) grad theta.
Vec3 heat_flux(const TransportModel& model, double theta, const Vec3& grad_theta);

/// Entropy production rate
///   (1/theta) (S:G - q . grad theta / theta + zeta |curl B|^2).
/// Throws NumericalError if the result is negative beyond round-off.
double entropy_production_density(const TransportModel& model, double theta,
                                  const Mat3& grad_u, const Vec3& grad_theta,
                                  const Vec3& curl_b);

}  // namespace mhd
