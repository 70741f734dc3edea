#pragma once

// Fixtures shared by the test suites.

#include <cmath>
#include <numbers>
#include <random>

#include "mhd/discrete_ops.hpp"
#include "mhd/parallel.hpp"
#include "mhd/solver.hpp"

namespace mhd::testing {

constexpr double kPi = std::numbers::pi;

inline BoxGrid make_grid(Index3 n, std::array<bool, 3> periodic = {false, false, false}) {
  BoxGrid g;
  g.n = n;
  g.periodic = periodic;
  return g;
}

inline PhysicsModel quiet_model(double eps = 0.0, double delta = 0.0) {
  PhysicsModel m;
  m.reg.eps = eps;
  m.reg.delta = delta;
  return m;
}

// Serial visit for assertions and reductions in test code.
template <class F>
void visit(const Box& b, F&& f) {
  for (int k = b.lo[2]; k < b.hi[2]; ++k)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) f(i, j, k);
}

inline double max_abs_interior(const BoxGrid& g, const Array3& a) { return max_abs(g.cells(), a); }

inline double cell_total(const BoxGrid& g, const Array3& a) {
  return sum_over(g.cells(), [&](int i, int j, int k) { return a(i, j, k); }) * g.cell_volume();
}

/// Smooth perturbation vanishing in the two cells next to every wall.
inline FieldState smooth_state(const BoxGrid& g, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double c[8];
  for (double& v : c) v = uni(rng);
  FieldState s(g);
  auto bump = [&](const Vec3& x) {
    double b = 1.0;
    for (int d = 0; d < 3; ++d)
      if (g.wall(d)) b *= std::pow(std::sin(kPi * x[d] / g.extents[static_cast<std::size_t>(d)]), 4);
    return b;
  };
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const Vec3 x = g.position(kCellStagger, i, j, k);
        const double w = std::sin(2 * kPi * x.x + c[0]) * std::cos(2 * kPi * x.y + c[1]) * std::sin(2 * kPi * x.z + c[2]);
        s.rho(i, j, k) = 1.0 + amp * bump(x) * w;
        s.theta(i, j, k) = 1.0 + amp * bump(x) * c[3] * w;
      }
  for (int d = 0; d < 3; ++d) {
    const Box b = g.computed(face_stagger(d));
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) {
          const Vec3 x = g.position(face_stagger(d), i, j, k);
          s.u[d](i, j, k) = amp * bump(x) * std::cos(2 * kPi * (x.x + x.y - x.z) + c[4 + d]);
        }
  }
  // Divergence-free B from the curl of a smooth edge potential.
  EdgeField a = make_edges(g);
  for (int e = 0; e < 3; ++e) {
    const Box b = g.computed(edge_stagger(e));
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) {
          const Vec3 x = g.position(edge_stagger(e), i, j, k);
          a[e](i, j, k) = amp * bump(x) * std::sin(2 * kPi * (x.x - x.y + x.z) + c[7] + e) / (2 * kPi);
        }
    fill_ghosts(g, a[e], edge_stagger(e), {Reflect::Even, Reflect::Even, Reflect::Even});
  }
  s.B = curl_edge_to_face(g, a);
  return s;
}

inline BoundarySpec still_boundary(MagneticBC mbc = MagneticBC::TangentialDirichlet) {
  return BoundarySpec::uniform(1.0, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, mbc);
}

}  // namespace mhd::testing
