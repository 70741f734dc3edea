#include "mhd/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "mhd/parallel.hpp"

namespace mhd {

GibbsCheck gibbs_check(const GasModel& gas, int points, std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_uni(std::log(0.1), std::log(10.0));
  GibbsCheck c;
  c.points = points;
  c.step = step;
  double sum = 0.0, sum_half = 0.0;
  for (int n = 0; n < points; ++n) {
    const double rho = std::exp(log_uni(rng)), theta = std::exp(log_uni(rng));
    const double h = step * std::min(rho, theta);
    const double scale = 1.0 + std::abs(eos_eval(gas, rho, theta).e);
    const auto a = gibbs_residual(gas, rho, theta, h);
    const auto b = gibbs_residual(gas, rho, theta, 0.5 * h);
    const double ra = std::hypot(a.first, a.second) / scale, rb = std::hypot(b.first, b.second) / scale;
    c.worst = std::max(c.worst, ra);
    c.worst_half = std::max(c.worst_half, rb);
    sum += ra;
    sum_half += rb;
  }
  c.order = sum_half > 0.0 ? std::log2(sum / sum_half) : 0.0;
  return c;
}

StructureCheck structure_check(const GasModel& gas) {
  StructureCheck c;
  c.report = hypothesis_report(gas, log_spaced(1e-4, 1e4, 200));
  const double target = 2.0 / 3.0 * gas.c1;
  for (const HypothesisRow& row : c.report.rows) {
    c.ratio_deviation = std::max(c.ratio_deviation, std::abs(row.heat_capacity_ratio - target));
    const double numeric = (5.0 / 3.0 * row.P - row.dP * row.z) / row.z;
    const double size = (5.0 / 3.0 * row.P + row.dP * row.z) / row.z;
    c.ratio_roundoff = std::max(c.ratio_roundoff, std::abs(numeric - target) / size);
  }
  return c;
}

ProductionSweep production_sweep(const TransportModel& model, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> log_theta(-3.0, 3.0);
  ProductionSweep r;
  r.samples = samples;
  r.minimum = std::numeric_limits<double>::infinity();
  for (int n = 0; n < samples; ++n) {
    const double theta = std::exp(log_theta(rng));
    Mat3 grad_u;
    for (auto& row : grad_u.m)
      for (double& v : row) v = normal(rng);
    const Vec3 grad_theta{normal(rng), normal(rng), normal(rng)};
    const Vec3 current{normal(rng), normal(rng), normal(rng)};
    const double s = entropy_production_density(model, theta, grad_u, grad_theta, current);
    r.minimum = std::min(r.minimum, s);
    if (s < 0.0) ++r.negative;
  }
  return r;
}

namespace {

bool same_bits(const Array3& a, const Array3& b) {
  const auto x = a.values(), y = b.values();
  return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), [](double p, double q) {
           return std::memcmp(&p, &q, sizeof p) == 0;
         });
}

bool same_bits(const FaceField& a, const FaceField& b) {
  return same_bits(a[0], b[0]) && same_bits(a[1], b[1]) && same_bits(a[2], b[2]);
}

}  // namespace

OperatorCheck operator_check(const BoxGrid& g, int trials, std::uint64_t seed) {
  OperatorCheck c;
  c.sbp = sbp_report(g, trials, seed);

  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  FaceField v = make_faces(g);
  EdgeField w = make_edges(g);
  Array3 phi = make_array(g, kCellStagger);
  for (int d = 0; d < 3; ++d) {
    for (double& x : v[d].values()) x = uni(rng);
    for (double& x : w[d].values()) x = uni(rng);
  }
  for (double& x : phi.values()) x = uni(rng);

  const int saved = worker_count();
  bool ok = true;
  for (int workers : {1, 4}) {
    set_worker_count(workers);
    ok = ok && same_bits(divergence(g, v), reference::divergence(g, v));
    ok = ok && same_bits(laplacian(g, phi), reference::laplacian(g, phi));
    ok = ok && same_bits(gradient(g, phi), reference::gradient(g, phi));
    ok = ok && same_bits(curl_face_to_edge(g, v), reference::curl_face_to_edge(g, v));
    ok = ok && same_bits(curl_edge_to_face(g, w), reference::curl_edge_to_face(g, w));
  }
  set_worker_count(saved);
  c.parallel_bitwise = ok;
  return c;
}

}  // namespace mhd
