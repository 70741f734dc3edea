#include "mhd/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mhd/discrete_ops.hpp"
#include "mhd/errors.hpp"
#include "mhd/linear_solver.hpp"
#include "mhd/parallel.hpp"

namespace mhd {

namespace {

constexpr std::size_t z(int d) { return static_cast<std::size_t>(d); }

inline Index3 sh(Index3 p, int d, int by) {
  p[z(d)] += by;
  return p;
}
inline double at(const Array3& a, const Index3& p) { return a(p[0], p[1], p[2]); }
inline double& at(Array3& a, const Index3& p) { return a(p[0], p[1], p[2]); }

double van_leer(double a, double b) { return a * b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

/// Limited upwind value at the interface between qL and qR.
double upwind(double qLL, double qL, double qR, double qRR, double vel) {
  if (vel >= 0.0) return qL + 0.5 * van_leer(qL - qLL, qR - qL);
  return qR - 0.5 * van_leer(qR - qL, qRR - qR);
}

/// Faces whose velocity evolves: wall-normal boundary nodes stay at zero.
Box evolving_faces(const BoxGrid& g, int d) {
  Box b = g.computed(face_stagger(d));
  if (g.wall(d)) {
    b.lo[z(d)] = 1;
    b.hi[z(d)] = g.n[z(d)];
  }
  return b;
}

bool on_wall_edge(const BoxGrid& g, int e, const Index3& q) {
  for (int a = 0; a < 3; ++a)
    if (a != e && g.wall(a) && (q[z(a)] == 0 || q[z(a)] == g.n[z(a)])) return true;
  return false;
}

void wrap(const BoxGrid& g, Array3& a, const Stagger& s) {
  fill_ghosts(g, a, s, {Reflect::Even, Reflect::Even, Reflect::Even});
}

/// Mean of theta over the four cells around an edge.
double edge_theta(const Array3& theta, int e, const Index3& q) {
  const int a = (e + 1) % 3, b = (e + 2) % 3;
  return 0.25 * (at(theta, q) + at(theta, sh(q, a, -1)) + at(theta, sh(q, b, -1)) +
                 at(theta, sh(sh(q, a, -1), b, -1)));
}

double delta_pressure(const RegularizationParams& r, double rho) {
  return r.delta * (rho * rho + std::pow(rho, r.Gamma));
}

// Velocity-gradient pieces shared by the momentum and energy equations.
struct Stresses {
  std::array<Array3, 3> normal;  // tau_dd at cells (ghosts wrapped)
  EdgeField shear;               // tau_ab at edges e = 3 - a - b
  EdgeField strain;              // du_a/dx_b + du_b/dx_a at edges
};

Stresses compute_stresses(const FieldState& s, const PhysicsModel& m) {
  const BoxGrid& g = s.grid;
  Stresses st{{make_array(g, kCellStagger), make_array(g, kCellStagger), make_array(g, kCellStagger)},
              make_edges(g), make_edges(g)};
  const double ih[3] = {1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)};
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const Index3 p{i, j, k};
    double dd[3];
    for (int d = 0; d < 3; ++d) dd[d] = (at(s.u[d], sh(p, d, 1)) - at(s.u[d], p)) * ih[d];
    const double div = dd[0] + dd[1] + dd[2];
    const double th = s.theta(i, j, k);
    const double mu = effective_viscosity(m, th);
    const double eta = bulk_viscosity(m.transport, th);
    for (int d = 0; d < 3; ++d) at(st.normal[z(d)], p) = 2.0 * mu * dd[d] + (eta - 2.0 / 3.0 * mu) * div;
  });
  for (int d = 0; d < 3; ++d) wrap(g, st.normal[z(d)], kCellStagger);
  for (int e = 0; e < 3; ++e) {
    const int a = (e + 1) % 3, b = (e + 2) % 3;
    for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      const Index3 q{i, j, k};
      const double rate = (at(s.u[b], q) - at(s.u[b], sh(q, a, -1))) * ih[a] +
                          (at(s.u[a], q) - at(s.u[a], sh(q, b, -1))) * ih[b];
      at(st.strain[e], q) = rate;
      at(st.shear[e], q) = effective_viscosity(m, edge_theta(s.theta, e, q)) * rate;
    });
    wrap(g, st.shear[e], edge_stagger(e));
    wrap(g, st.strain[e], edge_stagger(e));
  }
  return st;
}

/// Edge resistivity zeta(theta_edge) times the activity mask.
EdgeField edge_resistivity(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  const BoxGrid& g = s.grid;
  EdgeField z_e = make_edges(g);
  for (int e = 0; e < 3; ++e)
    for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      const Index3 q{i, j, k};
      const bool active = bc.magnetic_bc == MagneticBC::TangentialDirichlet || !on_wall_edge(g, e, q);
      at(z_e[e], q) = active ? magnetic_diffusivity(m.transport, edge_theta(s.theta, e, q)) : 0.0;
    });
  return z_e;
}

Array3 cell_sum_of_edges(const BoxGrid& g, const EdgeField& v) {
  Array3 out = make_array(g, kCellStagger);
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const Index3 p{i, j, k};
    double acc = 0.0;
    for (int e = 0; e < 3; ++e) {
      const int a = (e + 1) % 3, b = (e + 2) % 3;
      acc += at(v[e], p) + at(v[e], sh(p, a, 1)) + at(v[e], sh(p, b, 1)) + at(v[e], sh(sh(p, a, 1), b, 1));
    }
    out(i, j, k) = 0.25 * acc;
  });
  return out;
}

}  // namespace

double effective_viscosity(const PhysicsModel& m, double theta) {
  return viscosity(m.transport, theta) + m.reg.delta * theta;
}

double effective_conductivity(const PhysicsModel& m, double theta) {
  return conductivity(m.transport, theta) + m.reg.delta * (std::pow(theta, m.reg.Gamma) + 1.0 / theta);
}

void RegularizationParams::validate() const {
  std::ostringstream os;
  if (!(eps >= 0.0)) os << "regularization.eps: must be >= 0; ";
  if (!(delta >= 0.0)) os << "regularization.delta: must be >= 0; ";
  if (!(Gamma > 2.0)) os << "regularization.Gamma: must be > 2; ";
  if (!os.str().empty()) throw ConfigError(os.str());
}

void StepControl::validate() const {
  std::ostringstream os;
  if (!(cfl > 0.0 && cfl <= 1.0)) os << "control.cfl: must lie in (0, 1]; ";
  if (!(dt_max > 0.0)) os << "control.dt_max: must be positive; ";
  if (max_halvings < 0) os << "control.max_halvings: must be >= 0; ";
  if (!(cg_rtol > 0.0)) os << "control.cg_rtol: must be positive; ";
  if (!os.str().empty()) throw ConfigError(os.str());
}

Array3 internal_energy_density(const FieldState& s, const PhysicsModel& m) {
  Array3 E = make_array(s.grid, kCellStagger);
  for_each_index(s.grid.cells(), [&](int i, int j, int k) {
    const double r = s.rho(i, j, k), th = s.theta(i, j, k);
    E(i, j, k) = r * (eos_eval(m.gas, r, th).e + m.reg.delta * th);
  });
  return E;
}

FaceField face_density(const FieldState& s) {
  FaceField f = make_faces(s.grid);
  for (int d = 0; d < 3; ++d)
    for_each_index(s.grid.computed(face_stagger(d)),
                   [&](int i, int j, int k) { f[d](i, j, k) = cell_to_face(s.rho, d, i, j, k); });
  return f;
}

Dissipation dissipation(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  const BoxGrid& g = s.grid;
  const Stresses st = compute_stresses(s, m);
  EdgeField shear_work = make_edges(g), joule = make_edges(g);
  const EdgeField J = curl_face_to_edge(g, s.B);
  const EdgeField zeta = edge_resistivity(s, bc, m);
  for (int e = 0; e < 3; ++e)
    for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      shear_work[e](i, j, k) = st.shear[e](i, j, k) * st.strain[e](i, j, k);
      joule[e](i, j, k) = zeta[e](i, j, k) * J[e](i, j, k) * J[e](i, j, k);
    });
  Dissipation out{cell_sum_of_edges(g, shear_work), cell_sum_of_edges(g, joule)};
  const double ih[3] = {1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)};
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const Index3 p{i, j, k};
    double acc = 0.0;
    for (int d = 0; d < 3; ++d)
      acc += at(st.normal[z(d)], p) * (at(s.u[d], sh(p, d, 1)) - at(s.u[d], p)) * ih[d];
    out.viscous(i, j, k) += acc;
  });
  return out;
}

Rates compute_rates(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m,
                    const SourceTerms& src, double t, unsigned parts) {
  const BoxGrid& g = s.grid;
  const RegularizationParams& reg = m.reg;
  const bool transport = (parts & kTransportPart) != 0;
  const bool diffusion = (parts & kDiffusionPart) != 0;
  const double ih[3] = {1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)};

  Rates r{make_array(g, kCellStagger), make_faces(g), make_faces(g), make_array(g, kCellStagger)};

  // Cell thermodynamics.
  Array3 p = make_array(g, kCellStagger), p_delta = p, E_delta = p;
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const double rho = s.rho(i, j, k), th = s.theta(i, j, k);
    const ThermoPoint tp = eos_eval(m.gas, rho, th);
    p(i, j, k) = tp.p;
    p_delta(i, j, k) = tp.p + delta_pressure(reg, rho);
    E_delta(i, j, k) = rho * (tp.e + reg.delta * th);
  });
  wrap(g, p_delta, kCellStagger);
  wrap(g, E_delta, kCellStagger);

  // Upwinded mass flux on faces.
  FaceField F = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) {
      const Index3 q{i, j, k};
      const double vel = at(s.u[d], q);
      at(F[d], q) = vel * upwind(at(s.rho, sh(q, d, -2)), at(s.rho, sh(q, d, -1)), at(s.rho, q),
                                 at(s.rho, sh(q, d, 1)), vel);
    });
    wrap(g, F[d], face_stagger(d));
  }

  // Continuity.
  {
    const Array3 divF = divergence(g, F);
    Array3 lap;
    if (diffusion && reg.eps > 0.0) lap = laplacian(g, s.rho);
    for_each_index(g.cells(), [&](int i, int j, int k) {
      double v = 0.0;
      if (transport) {
        v -= divF(i, j, k);
        if (src.mass) v += src.mass(t, g.position(kCellStagger, i, j, k));
      }
      if (diffusion && reg.eps > 0.0) v += reg.eps * lap(i, j, k);
      r.rho(i, j, k) = v;
    });
  }

  const Stresses st = compute_stresses(s, m);
  const EdgeField J = curl_face_to_edge(g, s.B);
  const EdgeField zeta = edge_resistivity(s, bc, m);
  FaceField grad_rho;
  if (transport && reg.eps > 0.0) {
    grad_rho = gradient(g, s.rho);
    for (int d = 0; d < 3; ++d) wrap(g, grad_rho[d], face_stagger(d));
  }

  // Momentum.
  for (int d = 0; d < 3; ++d) {
    const Stagger fs = face_stagger(d);
    const Array3& ud = s.u[d];
    for_each_index(evolving_faces(g, d), [&](int i, int j, int k) {
      const Index3 P{i, j, k};
      double acc = 0.0;
      if (transport) {
        // Convection through the dual cell: along d at cell centres.
        auto flux_d = [&](const Index3& c) {
          const double Fbar = 0.5 * (at(F[d], c) + at(F[d], sh(c, d, 1)));
          return Fbar * upwind(at(ud, sh(c, d, -1)), at(ud, c), at(ud, sh(c, d, 1)), at(ud, sh(c, d, 2)), Fbar);
        };
        acc -= (flux_d(P) - flux_d(sh(P, d, -1))) * ih[d];
        for (int a = 0; a < 3; ++a) {
          if (a == d) continue;
          // Across edges Q = P and P + e_a.
          auto flux_a = [&](const Index3& Q) {
            const double Fbar = 0.5 * (at(F[a], sh(Q, d, -1)) + at(F[a], Q));
            return Fbar * upwind(at(ud, sh(Q, a, -2)), at(ud, sh(Q, a, -1)), at(ud, Q), at(ud, sh(Q, a, 1)), Fbar);
          };
          acc -= (flux_a(sh(P, a, 1)) - flux_a(P)) * ih[a];
        }
        acc -= (at(p_delta, P) - at(p_delta, sh(P, d, -1))) * ih[d];

        // Lorentz force: adjoint of the edge EMF B x u, so its power
        // balances the magnetic energy exchange exactly.
        for (int e = 0; e < 3; ++e) {
          if (e == d) continue;
          const int x = 3 - e - d;
          const double sign = e == (d + 1) % 3 ? 1.0 : -1.0;
          const Stagger es = edge_stagger(e);
          for (int off = 0; off < 2; ++off) {
            const Index3 Q = sh(P, x, off);
            const bool active = bc.magnetic_bc == MagneticBC::TangentialDirichlet || !on_wall_edge(g, e, Q);
            if (!active) continue;
            const double w = g.node_weight(es, Q[0], Q[1], Q[2]);
            acc += sign * 0.5 * w * at(J[e], Q) * transverse_at_edge(s.B, e, Q[0], Q[1], Q[2])[x];
          }
        }

        const Vec3 xf = g.position(fs, i, j, k);
        const double rho_f = 0.5 * (at(s.rho, P) + at(s.rho, sh(P, d, -1)));
        if (bc.g) acc += rho_f * bc.g(t, xf)[d];
        if (src.momentum) acc += src.momentum(t, xf)[d];

        if (reg.eps > 0.0) {
          double adv = at(grad_rho[d], P) * (at(ud, sh(P, d, 1)) - at(ud, sh(P, d, -1))) * 0.5 * ih[d];
          for (int a = 0; a < 3; ++a) {
            if (a == d) continue;
            const Array3& ga = grad_rho[a];
            const double gavg = 0.25 * (at(ga, P) + at(ga, sh(P, a, 1)) + at(ga, sh(P, d, -1)) +
                                        at(ga, sh(sh(P, a, 1), d, -1)));
            adv += gavg * (at(ud, sh(P, a, 1)) - at(ud, sh(P, a, -1))) * 0.5 * ih[a];
          }
          acc -= reg.eps * adv;
        }
      }
      if (diffusion) {
        acc += (at(st.normal[z(d)], P) - at(st.normal[z(d)], sh(P, d, -1))) * ih[d];
        for (int a = 0; a < 3; ++a) {
          if (a == d) continue;
          const int o = 3 - a - d;
          acc += (at(st.shear[o], sh(P, a, 1)) - at(st.shear[o], P)) * ih[a];
        }
      }
      at(r.m[d], P) = acc;
    });
  }

  // Induction through edge EMFs.
  {
    EdgeField emf = make_edges(g);
    for (int e = 0; e < 3; ++e)
      for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
        const Index3 q{i, j, k};
        const bool active = bc.magnetic_bc == MagneticBC::TangentialDirichlet || !on_wall_edge(g, e, q);
        if (!active) return;
        double v = 0.0;
        if (transport)
          v += cross_component(transverse_at_edge(s.B, e, i, j, k), transverse_at_edge(s.u, e, i, j, k), e);
        if (diffusion) v += at(zeta[e], q) * at(J[e], q);
        at(emf[e], q) = v;
      });
    const FaceField c = curl_edge_to_face(g, emf);
    for (int d = 0; d < 3; ++d) {
      Box b = g.computed(face_stagger(d));
      for_each_index(b, [&](int i, int j, int k) { r.B[d](i, j, k) = -c[d](i, j, k); });
    }
  }

  // Internal energy.
  {
    FaceField FE = make_faces(g), q = make_faces(g);
    for (int d = 0; d < 3; ++d)
      for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) {
        const Index3 P{i, j, k};
        if (transport) {
          const double vel = at(s.u[d], P);
          at(FE[d], P) = vel * upwind(at(E_delta, sh(P, d, -2)), at(E_delta, sh(P, d, -1)), at(E_delta, P),
                                      at(E_delta, sh(P, d, 1)), vel);
        }
        if (diffusion) {
          const double th_f = 0.5 * (at(s.theta, P) + at(s.theta, sh(P, d, -1)));
          at(q[d], P) = -effective_conductivity(m, th_f) * (at(s.theta, P) - at(s.theta, sh(P, d, -1))) * ih[d];
        }
      });
    const Array3 divFE = divergence(g, FE);
    const Array3 divq = divergence(g, q);
    Array3 heat_v, heat_o;
    if (transport) {
      EdgeField shear_work = make_edges(g), joule = make_edges(g);
      for (int e = 0; e < 3; ++e)
        for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
          shear_work[e](i, j, k) = st.shear[e](i, j, k) * st.strain[e](i, j, k);
          joule[e](i, j, k) = zeta[e](i, j, k) * J[e](i, j, k) * J[e](i, j, k);
        });
      heat_v = cell_sum_of_edges(g, shear_work);
      heat_o = cell_sum_of_edges(g, joule);
    }
    const double gamma_factor = reg.gamma_weighted_heating ? reg.Gamma : 1.0;
    for_each_index(g.cells(), [&](int i, int j, int k) {
      const Index3 P{i, j, k};
      double acc = 0.0;
      if (transport) {
        double du[3], divu = 0.0;
        for (int d = 0; d < 3; ++d) {
          du[d] = (at(s.u[d], sh(P, d, 1)) - at(s.u[d], P)) * ih[d];
          divu += du[d];
        }
        double visc = heat_v(i, j, k);
        for (int d = 0; d < 3; ++d) visc += at(st.normal[z(d)], P) * du[d];
        acc += -divFE(i, j, k) + visc + heat_o(i, j, k) - p(i, j, k) * divu;
        const double rho = s.rho(i, j, k), th = s.theta(i, j, k);
        if (reg.eps > 0.0 && reg.delta > 0.0) {
          double g2 = 0.0;
          for (int d = 0; d < 3; ++d) {
            const double a = at(grad_rho[d], P), b = at(grad_rho[d], sh(P, d, 1));
            g2 += 0.5 * (a * a + b * b);
          }
          acc += reg.eps * reg.delta * (gamma_factor * std::pow(rho, reg.Gamma - 2.0) + 2.0) * g2;
        }
        if (reg.delta > 0.0) acc += reg.delta / (th * th);
        if (reg.eps > 0.0) acc -= reg.eps * std::pow(th, 5);
        if (src.energy) acc += src.energy(t, g.position(kCellStagger, i, j, k));
      }
      if (diffusion) acc -= divq(i, j, k);
      r.E(i, j, k) = acc;
    });
  }
  return r;
}

Array3 rhs_continuity(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  return compute_rates(s, bc, m, {}, s.t).rho;
}
FaceField rhs_momentum(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  return compute_rates(s, bc, m, {}, s.t).m;
}
FaceField rhs_induction(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  return compute_rates(s, bc, m, {}, s.t).B;
}
Array3 rhs_internal_energy(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  return compute_rates(s, bc, m, {}, s.t).E;
}

EdgeField induction_emf(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  const BoxGrid& g = s.grid;
  const EdgeField J = curl_face_to_edge(g, s.B);
  const EdgeField zeta = edge_resistivity(s, bc, m);
  EdgeField emf = make_edges(g);
  for (int e = 0; e < 3; ++e)
    for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      const Index3 q{i, j, k};
      if (bc.magnetic_bc == MagneticBC::NormalFluxZeroEMF && on_wall_edge(g, e, q)) return;
      at(emf[e], q) = cross_component(transverse_at_edge(s.B, e, i, j, k), transverse_at_edge(s.u, e, i, j, k), e) +
                      at(zeta[e], q) * at(J[e], q);
    });
  return emf;
}

Array3 entropy_production(const FieldState& s, const PhysicsModel& m) {
  const BoxGrid& g = s.grid;
  const EdgeField J = curl_face_to_edge(g, s.B);
  Array3 out = make_array(g, kCellStagger);
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const Index3 P{i, j, k};
    Vec3 gt;
    for (int d = 0; d < 3; ++d) gt[d] = (at(s.theta, sh(P, d, 1)) - at(s.theta, sh(P, d, -1))) / (2.0 * g.h(d));
    out(i, j, k) = entropy_production_density(m.transport, s.theta(i, j, k), cell_velocity_gradient(g, s.u, i, j, k),
                                              gt, edges_to_cell(J, i, j, k));
  });
  return out;
}

StepReport make_report(const FieldState& s, const PhysicsModel& m, double dt) {
  const BoxGrid& g = s.grid;
  StepReport r;
  r.t = s.t;
  r.dt = dt;
  r.min_rho = min_over(g.cells(), [&](int i, int j, int k) { return s.rho(i, j, k); });
  r.min_theta = min_over(g.cells(), [&](int i, int j, int k) { return s.theta(i, j, k); });
  auto cell_norm = [&](const FaceField& f) {
    return max_over(g.cells(), [&](int i, int j, int k) {
      double s2 = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double v = face_to_cell(f, d, i, j, k);
        s2 += v * v;
      }
      return std::sqrt(s2);
    });
  };
  r.max_u = cell_norm(s.u);
  r.max_B = cell_norm(s.B);
  r.divB_max = max_abs_cells(g, divergence(g, s.B));
  const Array3 sigma = entropy_production(s, m);
  r.sigma_min = min_over(g.cells(), [&](int i, int j, int k) { return sigma(i, j, k); });
  return r;
}

double stable_dt(const FieldState& s, const PhysicsModel& m, const StepControl& c) {
  const BoxGrid& g = s.grid;
  const RegularizationParams& reg = m.reg;
  const double speed = max_over(g.cells(), [&](int i, int j, int k) {
    const double rho = s.rho(i, j, k), th = s.theta(i, j, k);
    const ThermoPoint tp = eos_eval(m.gas, rho, th);
    const double cs2 = adiabatic_sound_speed_sq(tp) +
                       reg.delta * (2.0 * rho + reg.Gamma * std::pow(rho, reg.Gamma - 1.0));
    double u2 = 0.0, b2 = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double uu = face_to_cell(s.u, d, i, j, k), bb = face_to_cell(s.B, d, i, j, k);
      u2 += uu * uu;
      b2 += bb * bb;
    }
    return std::sqrt(u2) + std::sqrt(cs2 + b2 / rho);
  });
  const double h = g.h_min();
  double dt = std::min(c.dt_max, c.cfl * h / speed);
  if (c.diffusion == DiffusionTreatment::Explicit) {
    const double nu = max_over(g.cells(), [&](int i, int j, int k) {
      const double rho = s.rho(i, j, k), th = s.theta(i, j, k);
      const ThermoPoint tp = eos_eval(m.gas, rho, th);
      const double visc = (4.0 / 3.0 * effective_viscosity(m, th) + bulk_viscosity(m.transport, th)) / rho;
      const double heat = effective_conductivity(m, th) / (rho * (tp.de_dtheta + reg.delta));
      return std::max({visc, heat, magnetic_diffusivity(m.transport, th), reg.eps});
    });
    if (nu > 0.0) dt = std::min(dt, std::min(c.cfl, 0.5) * h * h / (3.0 * nu));
  }
  return dt;
}

// ---------------------------------------------------------------------------
// Stepping

namespace {

struct Conserved {
  Array3 rho;
  FaceField m;
  FaceField B;
  Array3 E;
};

Conserved to_conserved(const FieldState& s, const PhysicsModel& model) {
  Conserved c{s.rho, make_faces(s.grid), s.B, internal_energy_density(s, model)};
  const FaceField rf = face_density(s);
  for (int d = 0; d < 3; ++d)
    for_each_index(s.grid.computed(face_stagger(d)),
                   [&](int i, int j, int k) { c.m[d](i, j, k) = rf[d](i, j, k) * s.u[d](i, j, k); });
  return c;
}

// out = a X + b Y + c L
void combine(Conserved& out, double a, const Conserved* X, double b, const Conserved& Y, double c,
             const Rates& L) {
  auto mix = [&](Array3& o, const Array3* x, const Array3& y, const Array3& l) {
    auto ov = o.values();
    const auto yv = y.values();
    const auto lv = l.values();
    const double* xv = x ? x->values().data() : nullptr;
    const auto n = static_cast<std::ptrdiff_t>(ov.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      ov[u] = (xv ? a * xv[u] : 0.0) + b * yv[u] + c * lv[u];
    }
  };
  mix(out.rho, X ? &X->rho : nullptr, Y.rho, L.rho);
  mix(out.E, X ? &X->E : nullptr, Y.E, L.E);
  for (int d = 0; d < 3; ++d) {
    mix(out.m[d], X ? &X->m[d] : nullptr, Y.m[d], L.m[d]);
    mix(out.B[d], X ? &X->B[d] : nullptr, Y.B[d], L.B[d]);
  }
}

void fail_positivity(const char* field, double value, const Index3& p) {
  std::ostringstream os;
  os << "non-positive " << field << " = " << value << " at cell (" << p[0] << ", " << p[1] << ", " << p[2] << ")";
  throw PositivityFailure(os.str());
}

/// Rebuilds primitive fields from conserved ones; `s` supplies the grid and
/// the temperature initial guess.
void from_conserved(FieldState& s, const Conserved& c, const PhysicsModel& model, const BoundarySpec& bc,
                    double t) {
  const BoxGrid& g = s.grid;
  const Array3 guess = s.theta;
  s.rho = c.rho;
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i)
        if (!(s.rho(i, j, k) > 0.0) || !std::isfinite(s.rho(i, j, k))) fail_positivity("rho", s.rho(i, j, k), {i, j, k});
  fill_cell_ghosts_even(g, s.rho);
  for (int d = 0; d < 3; ++d)
    for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) {
      s.u[d](i, j, k) = c.m[d](i, j, k) / cell_to_face(s.rho, d, i, j, k);
    });
  s.B = c.B;
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const double E = c.E(i, j, k);
    const double th = std::isfinite(E) ? theta_from_energy(model.gas, s.rho(i, j, k), E, model.reg.delta, guess(i, j, k))
                                       : -1.0;
    s.theta(i, j, k) = th;
  });
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i)
        if (!(s.theta(i, j, k) > 0.0)) fail_positivity("theta", s.theta(i, j, k), {i, j, k});
  s.t = t;
  apply_boundaries(s, bc, t);
}

void check_cg(const CgResult& r, const char* what) {
  if (!r.converged) {
    std::ostringstream os;
    os << what << ": conjugate gradient stalled at relative residual " << r.relative_residual << " after "
       << r.iterations << " iterations";
    throw SolverDivergence(os.str());
  }
}

/// Backward-Euler diffusion with coefficients frozen at `frozen`; modifies s
/// (primitive, ghosts applied at time t). Returns total CG iterations.
int implicit_diffusion(FieldState& s, const FieldState& frozen, const PhysicsModel& m, const BoundarySpec& bc,
                       const StepControl& ctl, double dt, double t) {
  const BoxGrid& g = s.grid;
  const double ih[3] = {1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)};
  int iterations = 0;
  // Density diffusion moves mass under fixed momentum and internal energy.
  const Array3 E_star = internal_energy_density(s, m);
  const FaceField m_star = [&] {
    FaceField f = face_density(s);
    for (int d = 0; d < 3; ++d)
      for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) { f[d](i, j, k) *= s.u[d](i, j, k); });
    return f;
  }();

  // Density: (I - dt eps Lap) rho = rho*.
  if (m.reg.eps > 0.0) {
    const DofMap dofs = DofMap::cells(g);
    const auto w = dofs.weights(g);
    std::vector<double> b(dofs.size()), x(dofs.size());
    const Array3* src[] = {&s.rho};
    dofs.gather(src, b);
    x = b;
    Array3 work = make_array(g, kCellStagger);
    const LinearOperator A = [&](std::span<const double> in, std::span<double> out) {
      Array3* dst[] = {&work};
      dofs.scatter(in, dst);
      fill_cell_ghosts_even(g, work);
      const Array3 l = laplacian(g, work);
      const Array3* ls[] = {&l};
      dofs.gather(ls, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] = in[n] - dt * m.reg.eps * out[n];
    };
    const CgResult r = conjugate_gradient(A, b, x, w, ctl.cg_rtol, ctl.cg_max_iterations);
    check_cg(r, "implicit density diffusion");
    iterations += r.iterations;
    Array3* dst[] = {&s.rho};
    dofs.scatter(x, dst);
    fill_cell_ghosts_even(g, s.rho);
    for_each_index(g.cells(), [&](int i, int j, int k) {
      s.theta(i, j, k) = theta_from_energy(m.gas, s.rho(i, j, k), E_star(i, j, k), m.reg.delta, s.theta(i, j, k));
    });
    for (int k = 0; k < g.n[2]; ++k)
      for (int j = 0; j < g.n[1]; ++j)
        for (int i = 0; i < g.n[0]; ++i)
          if (!(s.theta(i, j, k) > 0.0)) fail_positivity("theta", s.theta(i, j, k), {i, j, k});
    fill_theta_ghosts(g, s.theta, bc, t);
  }

  // Frozen coefficients.
  Array3 mu_c = make_array(g, kCellStagger), eta_c = mu_c;
  for_each_index(g.cells(), [&](int i, int j, int k) {
    const double th = frozen.theta(i, j, k);
    mu_c(i, j, k) = effective_viscosity(m, th);
    eta_c(i, j, k) = bulk_viscosity(m.transport, th);
  });
  wrap(g, mu_c, kCellStagger);
  wrap(g, eta_c, kCellStagger);
  EdgeField mu_e = make_edges(g);
  for (int e = 0; e < 3; ++e)
    for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      mu_e[e](i, j, k) = effective_viscosity(m, edge_theta(frozen.theta, e, {i, j, k}));
    });
  const EdgeField zeta = edge_resistivity(frozen, bc, m);

  // Velocity: (rho_f - dt div tau) u = rho_f u*.
  {
    std::vector<DofMap::Block> blocks;
    for (int d = 0; d < 3; ++d) {
      Box b = g.owned(face_stagger(d));
      if (g.wall(d)) {
        b.lo[z(d)] = 1;
        b.hi[z(d)] = g.n[z(d)];
      }
      blocks.push_back({b, face_stagger(d)});
    }
    const DofMap dofs(std::move(blocks));
    const auto w = dofs.weights(g);
    const FaceField rf = face_density(s);
    std::vector<double> mass(dofs.size()), x(dofs.size()), b(dofs.size());
    {
      const Array3* src[] = {&rf[0], &rf[1], &rf[2]};
      dofs.gather(src, mass);
      const Array3* ms[] = {&m_star[0], &m_star[1], &m_star[2]};
      dofs.gather(ms, b);
    }
    for (std::size_t n = 0; n < b.size(); ++n) x[n] = b[n] / mass[n];
    FaceField work = make_faces(g);
    const LinearOperator A = [&](std::span<const double> in, std::span<double> out) {
      Array3* dst[] = {&work[0], &work[1], &work[2]};
      dofs.scatter(in, dst);
      fill_velocity_ghosts(g, work);
      std::array<Array3, 3> tn{make_array(g, kCellStagger), make_array(g, kCellStagger), make_array(g, kCellStagger)};
      for_each_index(g.cells(), [&](int i, int j, int k) {
        const Index3 p{i, j, k};
        double dd[3];
        for (int d = 0; d < 3; ++d) dd[d] = (at(work[d], sh(p, d, 1)) - at(work[d], p)) * ih[d];
        const double div = dd[0] + dd[1] + dd[2];
        for (int d = 0; d < 3; ++d)
          at(tn[z(d)], p) = 2.0 * mu_c(i, j, k) * dd[d] + (eta_c(i, j, k) - 2.0 / 3.0 * mu_c(i, j, k)) * div;
      });
      for (int d = 0; d < 3; ++d) wrap(g, tn[z(d)], kCellStagger);
      EdgeField ts = make_edges(g);
      for (int e = 0; e < 3; ++e) {
        const int a = (e + 1) % 3, bb = (e + 2) % 3;
        for_each_index(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
          const Index3 q{i, j, k};
          at(ts[e], q) = mu_e[e](i, j, k) * ((at(work[bb], q) - at(work[bb], sh(q, a, -1))) * ih[a] +
                                             (at(work[a], q) - at(work[a], sh(q, bb, -1))) * ih[bb]);
        });
        wrap(g, ts[e], edge_stagger(e));
      }
      FaceField res = make_faces(g);
      for (int d = 0; d < 3; ++d)
        for_each_index(evolving_faces(g, d), [&](int i, int j, int k) {
          const Index3 P{i, j, k};
          double acc = (at(tn[z(d)], P) - at(tn[z(d)], sh(P, d, -1))) * ih[d];
          for (int a = 0; a < 3; ++a) {
            if (a == d) continue;
            const int o = 3 - a - d;
            acc += (at(ts[o], sh(P, a, 1)) - at(ts[o], P)) * ih[a];
          }
          at(res[d], P) = acc;
        });
      const Array3* rs[] = {&res[0], &res[1], &res[2]};
      dofs.gather(rs, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] = mass[n] * in[n] - dt * out[n];
    };
    const CgResult r = conjugate_gradient(A, b, x, w, ctl.cg_rtol, ctl.cg_max_iterations);
    check_cg(r, "implicit viscous solve");
    iterations += r.iterations;
    Array3* dst[] = {&s.u[0], &s.u[1], &s.u[2]};
    dofs.scatter(x, dst);
    fill_velocity_ghosts(g, s.u);
  }

  // Magnetic field: B + dt curl(zeta curl B) = B*, affine in B through the
  // boundary ghosts.
  {
    const DofMap dofs = DofMap::faces(g, bc.magnetic_bc == MagneticBC::NormalFluxZeroEMF);
    const auto w = dofs.weights(g);
    FaceField work = s.B;
    auto L = [&](std::span<const double> in, std::span<double> out) {
      Array3* dst[] = {&work[0], &work[1], &work[2]};
      dofs.scatter(in, dst);
      fill_magnetic_ghosts(g, work, bc, t);
      EdgeField e = curl_face_to_edge(g, work);
      for (int d = 0; d < 3; ++d)
        for_each_index(g.computed(edge_stagger(d)), [&](int i, int j, int k) { e[d](i, j, k) *= zeta[d](i, j, k); });
      const FaceField c = curl_edge_to_face(g, e);
      const Array3* cs[] = {&c[0], &c[1], &c[2]};
      dofs.gather(cs, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] = in[n] + dt * out[n];
    };
    std::vector<double> zero(dofs.size(), 0.0), L0(dofs.size()), b(dofs.size()), x(dofs.size());
    L(zero, L0);
    const Array3* bs[] = {&s.B[0], &s.B[1], &s.B[2]};
    dofs.gather(bs, x);
    for (std::size_t n = 0; n < b.size(); ++n) b[n] = x[n] - L0[n];
    std::vector<double> tmp(dofs.size());
    const LinearOperator A = [&](std::span<const double> in, std::span<double> out) {
      L(in, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] -= L0[n];
    };
    const CgResult r = conjugate_gradient(A, b, x, w, ctl.cg_rtol, ctl.cg_max_iterations);
    check_cg(r, "implicit resistive solve");
    iterations += r.iterations;
    Array3* dst[] = {&s.B[0], &s.B[1], &s.B[2]};
    dofs.scatter(x, dst);
    fill_magnetic_ghosts(g, s.B, bc, t);
  }

  // Temperature: c (theta - theta*) = dt div(kappa grad theta), then the
  // internal energy takes the conservative flux difference.
  {
    FaceField kappa = make_faces(g);
    for (int d = 0; d < 3; ++d)
      for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) {
        kappa[d](i, j, k) = effective_conductivity(m, cell_to_face(frozen.theta, d, i, j, k));
      });
    const DofMap dofs = DofMap::cells(g);
    const auto w = dofs.weights(g);
    std::vector<double> cap(dofs.size()), x(dofs.size()), b(dofs.size());
    Array3 capacity = make_array(g, kCellStagger);
    for_each_index(g.cells(), [&](int i, int j, int k) {
      const ThermoPoint tp = eos_eval(m.gas, s.rho(i, j, k), s.theta(i, j, k));
      capacity(i, j, k) = s.rho(i, j, k) * (tp.de_dtheta + m.reg.delta);
    });
    {
      const Array3* cs[] = {&capacity};
      dofs.gather(cs, cap);
      const Array3* ts[] = {&s.theta};
      dofs.gather(ts, x);
    }
    Array3 work = s.theta;
    auto flux_div = [&](Array3& th) {
      fill_theta_ghosts(g, th, bc, t);
      FaceField q = make_faces(g);
      for (int d = 0; d < 3; ++d)
        for_each_index(g.computed(face_stagger(d)), [&](int i, int j, int k) {
          const Index3 P{i, j, k};
          q[d](i, j, k) = kappa[d](i, j, k) * (at(th, P) - at(th, sh(P, d, -1))) * ih[d];
        });
      return divergence(g, q);
    };
    auto L = [&](std::span<const double> in, std::span<double> out) {
      Array3* dst[] = {&work};
      dofs.scatter(in, dst);
      const Array3 dv = flux_div(work);
      const Array3* ds[] = {&dv};
      dofs.gather(ds, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] = cap[n] * in[n] - dt * out[n];
    };
    std::vector<double> zero(dofs.size(), 0.0), L0(dofs.size());
    L(zero, L0);
    for (std::size_t n = 0; n < b.size(); ++n) b[n] = cap[n] * x[n] - L0[n];
    const LinearOperator A = [&](std::span<const double> in, std::span<double> out) {
      L(in, out);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] -= L0[n];
    };
    const CgResult r = conjugate_gradient(A, b, x, w, ctl.cg_rtol, ctl.cg_max_iterations);
    check_cg(r, "implicit heat solve");
    iterations += r.iterations;
    Array3* dst[] = {&work};
    dofs.scatter(x, dst);
    const Array3 dv = flux_div(work);
    for_each_index(g.cells(), [&](int i, int j, int k) {
      const double En = E_star(i, j, k) + dt * dv(i, j, k);
      s.theta(i, j, k) = theta_from_energy(m.gas, s.rho(i, j, k), En, m.reg.delta, std::max(work(i, j, k), 1e-12));
    });
    for (int k = 0; k < g.n[2]; ++k)
      for (int j = 0; j < g.n[1]; ++j)
        for (int i = 0; i < g.n[0]; ++i)
          if (!(s.theta(i, j, k) > 0.0)) fail_positivity("theta", s.theta(i, j, k), {i, j, k});
  }
  apply_boundaries(s, bc, t);
  return iterations;
}

}  // namespace

Solver::Solver(PhysicsModel model, StepControl control, BoundarySpec bc, SourceTerms sources)
    : model_(std::move(model)), control_(control), bc_(std::move(bc)), src_(std::move(sources)) {
  model_.reg.validate();
  control_.validate();
}

StepReport Solver::step(FieldState& state) const {
  apply_boundaries(state, bc_, state.t);
  return step_with(state, stable_dt(state, model_, control_));
}

StepReport Solver::step_with(FieldState& state, double dt) const {
  const double floor = 1e-14 * control_.dt_max;
  const bool lagged = control_.diffusion == DiffusionTreatment::LaggedImplicit;
  const unsigned parts = lagged ? kTransportPart : kAllParts;
  apply_boundaries(state, bc_, state.t);
  const double t0 = state.t;

  for (int halvings = 0;; ++halvings) {
    if (!(dt >= floor)) {
      std::ostringstream os;
      os << "time step " << dt << " fell below 1e-14 * dt_max";
      throw CFLCollapse(os.str());
    }
    try {
      const Conserved U0 = to_conserved(state, model_);
      Conserved U = U0;
      FieldState s = state;
      const Rates L0 = compute_rates(s, bc_, model_, src_, t0, parts);
      combine(U, 0.0, nullptr, 1.0, U0, dt, L0);
      from_conserved(s, U, model_, bc_, t0 + dt);
      const Rates L1 = compute_rates(s, bc_, model_, src_, t0 + dt, parts);
      if (control_.integrator == Integrator::Heun) {
        Conserved U1 = U;
        combine(U, 0.5, &U0, 0.5, U1, 0.5 * dt, L1);
        from_conserved(s, U, model_, bc_, t0 + dt);
      } else {
        Conserved U1 = U;
        combine(U, 0.75, &U0, 0.25, U1, 0.25 * dt, L1);
        from_conserved(s, U, model_, bc_, t0 + 0.5 * dt);
        const Rates L2 = compute_rates(s, bc_, model_, src_, t0 + 0.5 * dt, parts);
        Conserved U2 = U;
        combine(U, 1.0 / 3.0, &U0, 2.0 / 3.0, U2, 2.0 / 3.0 * dt, L2);
        from_conserved(s, U, model_, bc_, t0 + dt);
      }
      int cg = 0;
      if (lagged) cg = implicit_diffusion(s, state, model_, bc_, control_, dt, t0 + dt);
      s.t = t0 + dt;
      state = std::move(s);
      StepReport rep = make_report(state, model_, dt);
      rep.halvings = halvings;
      rep.cg_iterations = cg;
      return rep;
    } catch (const PositivityFailure&) {
      if (halvings >= control_.max_halvings) throw;
      dt *= 0.5;
    }
  }
}

}  // namespace mhd
