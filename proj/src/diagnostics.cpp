#include "mhd/diagnostics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
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

/// Sum of f over owned locations with trapezoid weights, times the cell volume.
template <class F>
double weighted_sum(const BoxGrid& g, const Stagger& s, F&& f) {
  return g.cell_volume() *
         sum_over(g.owned(s), [&](int i, int j, int k) { return g.node_weight(s, i, j, k) * f(i, j, k); });
}

template <class F>
double cell_sum(const BoxGrid& g, F&& f) {
  return g.cell_volume() * sum_over(g.cells(), f);
}

/// Copy with ghosts applied at the state's own time.
FieldState with_ghosts(const FieldState& s, const BoundarySpec& bc) {
  FieldState c = s;
  apply_boundaries(c, bc, s.t);
  return c;
}

Array3 entropy_density(const FieldState& s, const GasModel& gas) {
  Array3 out = make_array(s.grid, kCellStagger);
  for_each_index(s.grid.cells(), [&](int i, int j, int k) {
    const double r = s.rho(i, j, k);
    out(i, j, k) = r * eos_eval(gas, r, s.theta(i, j, k)).s;
  });
  return out;
}

/// Sample of a scalar function on every cell including ghosts.
Array3 sample_cells(const BoxGrid& g, const std::function<double(const Vec3&)>& f) {
  Array3 a = make_array(g, kCellStagger);
  const Box b = a.box();
  for (int k = b.lo[2]; k < b.hi[2]; ++k)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) a(i, j, k) = f(g.position(kCellStagger, i, j, k));
  return a;
}

struct HeatPairing {
  double production = 0.0;  // sum of w_f kappa |grad theta|^2 / (theta_L theta_R)
  double transport = 0.0;   // sum of q . grad w / theta
};

/// Pairs the discrete heat flux with grad(w / theta) over all owned faces,
/// split exactly into a production part (nonnegative for w >= 0) and a
/// transport part. Wall faces use ghost values, as in the flux divergence.
HeatPairing heat_pairing(const FieldState& s, const PhysicsModel& m, const Array3& w) {
  const BoxGrid& g = s.grid;
  HeatPairing r;
  for (int d = 0; d < 3; ++d) {
    const double ih = 1.0 / g.h(d);
    const Box b = g.owned(face_stagger(d));
    r.production += sum_over(b, [&](int i, int j, int k) {
      const Index3 P{i, j, k}, L = sh(P, d, -1);
      const double tR = at(s.theta, P), tL = at(s.theta, L);
      const double gt = (tR - tL) * ih;
      const double kappa = effective_conductivity(m, 0.5 * (tR + tL));
      return 0.5 * (at(w, P) + at(w, L)) * kappa * gt * gt / (tR * tL);
    });
    r.transport += sum_over(b, [&](int i, int j, int k) {
      const Index3 P{i, j, k}, L = sh(P, d, -1);
      const double tR = at(s.theta, P), tL = at(s.theta, L);
      const double q = -effective_conductivity(m, 0.5 * (tR + tL)) * (tR - tL) * ih;
      return q * (at(w, P) - at(w, L)) * ih * 0.5 * (1.0 / tR + 1.0 / tL);
    });
  }
  r.production *= g.cell_volume();
  r.transport *= g.cell_volume();
  return r;
}

/// Sum of (rho s)_f u . grad w over faces.
double entropy_advection(const FieldState& s, const Array3& rho_s, const Array3& w) {
  const BoxGrid& g = s.grid;
  double acc = 0.0;
  for (int d = 0; d < 3; ++d)
    acc += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
      const Index3 P{i, j, k}, L = sh(P, d, -1);
      return cell_to_face(rho_s, d, i, j, k) * at(s.u[d], P) * (at(w, P) - at(w, L)) / g.h(d);
    });
  return acc;
}

/// Cell heating terms weighted by w / theta.
double weighted_heating(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m, const Array3& w) {
  const Dissipation dis = dissipation(s, bc, m);
  return cell_sum(s.grid, [&](int i, int j, int k) {
    return w(i, j, k) / s.theta(i, j, k) * (dis.viscous(i, j, k) + dis.ohmic(i, j, k));
  });
}

/// Entropy source density from mass and energy sources.
double entropy_source(const GasModel& gas, const SourceTerms& src, double t, const Vec3& x, double rho,
                      double theta) {
  if (!src.mass && !src.energy) return 0.0;
  const ThermoPoint tp = eos_eval(gas, rho, theta);
  const double f_rho = src.mass ? src.mass(t, x) : 0.0;
  const double f_E = src.energy ? src.energy(t, x) : 0.0;
  const double chemical = tp.e + tp.p / rho - theta * tp.s;
  return (f_E - chemical * f_rho) / theta;
}

/// Volume power of the sources into the total energy.
double source_power(const FieldState& s, const SourceTerms& src) {
  const BoxGrid& g = s.grid;
  double acc = 0.0;
  if (src.momentum)
    for (int d = 0; d < 3; ++d)
      acc += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
        return s.u[d](i, j, k) * src.momentum(s.t, g.position(face_stagger(d), i, j, k))[d];
      });
  if (src.mass || src.energy)
    acc += cell_sum(g, [&](int i, int j, int k) {
      const Vec3 x = g.position(kCellStagger, i, j, k);
      const Vec3 uc = faces_to_cell(s.u, i, j, k);
      double v = 0.0;
      if (src.mass) v -= 0.5 * dot(uc, uc) * src.mass(s.t, x);
      if (src.energy) v += src.energy(s.t, x);
      return v;
    });
  return acc;
}

double weighted_entropy_source(const FieldState& s, const GasModel& gas, const SourceTerms& src,
                               const Array3& w) {
  if (!src.mass && !src.energy) return 0.0;
  const BoxGrid& g = s.grid;
  return cell_sum(g, [&](int i, int j, int k) {
    return w(i, j, k) *
           entropy_source(gas, src, s.t, g.position(kCellStagger, i, j, k), s.rho(i, j, k), s.theta(i, j, k));
  });
}

double gravity_work(const FieldState& s, const BoundarySpec& bc) {
  if (!bc.g) return 0.0;
  const BoxGrid& g = s.grid;
  double acc = 0.0;
  for (int d = 0; d < 3; ++d)
    acc += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
      return cell_to_face(s.rho, d, i, j, k) * s.u[d](i, j, k) * bc.g(s.t, g.position(face_stagger(d), i, j, k))[d];
    });
  return acc;
}

Array3 ones(const BoxGrid& g) { return make_array(g, kCellStagger, 1.0); }

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Functionals

EnergyParts energy_parts(const FieldState& s, const GasModel& gas) {
  const BoxGrid& g = s.grid;
  EnergyParts e;
  for (int d = 0; d < 3; ++d) {
    e.kinetic += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
      const double v = s.u[d](i, j, k);
      return 0.5 * cell_to_face(s.rho, d, i, j, k) * v * v;
    });
  }
  e.magnetic = 0.5 * face_inner(g, s.B, s.B);
  e.internal = cell_sum(g, [&](int i, int j, int k) {
    const double r = s.rho(i, j, k);
    return r * eos_eval(gas, r, s.theta(i, j, k)).e;
  });
  return e;
}

double total_energy(const FieldState& s, const GasModel& gas) { return energy_parts(s, gas).total(); }

double total_entropy(const FieldState& s, const GasModel& gas) {
  return cell_sum(s.grid, [&](int i, int j, int k) {
    const double r = s.rho(i, j, k);
    return r * eos_eval(gas, r, s.theta(i, j, k)).s;
  });
}

Array3 harmonic_extension(const BoxGrid& g, const BoundarySpec& bc, double t) {
  const Vec3 centre{0.5 * g.extents[0], 0.5 * g.extents[1], 0.5 * g.extents[2]};
  const bool any_wall = g.wall(0) || g.wall(1) || g.wall(2);
  if (bc.theta_b_constant || bc.thermal_bc == ThermalBC::Insulated || !any_wall) {
    const double v = bc.theta_b(t, centre);
    if (!(v > 0.0)) throw ConfigError("boundary.theta_b: must be positive");
    return make_array(g, kCellStagger, v);
  }
  // Lap(y) = 0 with ghosts 2 theta_B - y: split into the zero-interior lift
  // and a homogeneous solve.
  Array3 lift = make_array(g, kCellStagger);
  fill_theta_ghosts(g, lift, bc, t);
  const Array3 rhs_field = laplacian(g, lift);

  const DofMap dofs = DofMap::cells(g);
  const auto w = dofs.weights(g);
  std::vector<double> b(dofs.size()), x(dofs.size(), bc.theta_b(t, centre));
  const Array3* rs[] = {&rhs_field};
  dofs.gather(rs, b);
  Array3 work = make_array(g, kCellStagger);
  const LinearOperator A = [&](std::span<const double> in, std::span<double> out) {
    Array3* dst[] = {&work};
    dofs.scatter(in, dst);
    fill_ghosts(g, work, kCellStagger, {Reflect::Odd, Reflect::Odd, Reflect::Odd});
    const Array3 l = laplacian(g, work);
    const Array3* ls[] = {&l};
    dofs.gather(ls, out);
    for (double& v : out) v = -v;
  };
  const CgResult r = conjugate_gradient(A, b, x, w, 1e-12, 20000);
  if (!r.converged) throw NumericalError("harmonic extension: conjugate gradient stalled", r.relative_residual);
  Array3 out = make_array(g, kCellStagger);
  Array3* dst[] = {&out};
  dofs.scatter(x, dst);
  fill_theta_ghosts(g, out, bc, t);
  return out;
}

FaceField background_faces(const BoxGrid& g, const BoundarySpec& bc, double t) {
  FaceField f = make_faces(g);
  if (!bc.B_B) return f;
  for (int d = 0; d < 3; ++d) {
    const Stagger s = face_stagger(d);
    const Box b = f[d].box();
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) f[d](i, j, k) = bc.B_B(t, g.position(s, i, j, k))[d];
  }
  return f;
}

double ballistic_energy(const FieldState& s, const GasModel& gas, const Array3& theta_tilde, const FaceField& B_B) {
  const BoxGrid& g = s.grid;
  const double tmin = min_over(g.cells(), [&](int i, int j, int k) { return theta_tilde(i, j, k); });
  if (!(tmin > 0.0)) throw DomainError("ballistic energy: theta_tilde must be positive");
  const double weighted_entropy = cell_sum(g, [&](int i, int j, int k) {
    const double r = s.rho(i, j, k);
    return theta_tilde(i, j, k) * r * eos_eval(gas, r, s.theta(i, j, k)).s;
  });
  return total_energy(s, gas) - weighted_entropy - face_inner(g, B_B, s.B);
}

double weighted_dissipation(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m, const Array3& w) {
  const FieldState c = with_ghosts(s, bc);
  return weighted_heating(c, bc, m, w) + heat_pairing(c, m, w).production;
}

double boundary_heat_flux(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  const FieldState c = with_ghosts(s, bc);
  const BoxGrid& g = c.grid;
  double acc = 0.0;
  for (int d = 0; d < 3; ++d) {
    if (!g.wall(d)) continue;
    const double area = g.cell_volume() / g.h(d);
    for (int side = 0; side < 2; ++side) {
      Box b = g.owned(face_stagger(d));
      const int idx = side == 0 ? 0 : g.n[z(d)];
      b.lo[z(d)] = idx;
      b.hi[z(d)] = idx + 1;
      const double sign = side == 0 ? -1.0 : 1.0;
      acc += sign * area * sum_over(b, [&](int i, int j, int k) {
        const Index3 P{i, j, k}, L = sh(P, d, -1);
        const double tR = at(c.theta, P), tL = at(c.theta, L);
        return -effective_conductivity(m, 0.5 * (tR + tL)) * (tR - tL) / g.h(d);
      });
    }
  }
  return acc;
}

double boundary_poynting_flux(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m) {
  const FieldState c = with_ghosts(s, bc);
  const BoxGrid& g = c.grid;
  const EdgeField E = induction_emf(c, bc, m);
  double acc = 0.0;
  for (int d = 0; d < 3; ++d) {
    if (!g.wall(d)) continue;
    const int a = (d + 1) % 3, b = (d + 2) % 3;
    const double area = g.cell_volume() / g.h(d);
    for (int side = 0; side < 2; ++side) {
      Box box = g.owned(face_stagger(d));
      const int idx = side == 0 ? 0 : g.n[z(d)];
      box.lo[z(d)] = idx;
      box.hi[z(d)] = idx + 1;
      const double sign = side == 0 ? -1.0 : 1.0;
      // Tangential B at the wall: mean over the two cells across it and the
      // two faces bounding the wall face.
      auto tangential = [&](int comp, const Index3& P) {
        const Index3 L = sh(P, d, -1);
        return 0.25 * (at(c.B[comp], P) + at(c.B[comp], L) + at(c.B[comp], sh(P, comp, 1)) +
                       at(c.B[comp], sh(L, comp, 1)));
      };
      acc += sign * area * sum_over(box, [&](int i, int j, int k) {
        const Index3 P{i, j, k};
        const double Ea = 0.5 * (at(E[a], P) + at(E[a], sh(P, b, 1)));
        const double Eb = 0.5 * (at(E[b], P) + at(E[b], sh(P, a, 1)));
        return Ea * tangential(b, P) - Eb * tangential(a, P);
      });
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Energy reports

const std::vector<std::string>& energy_report_columns() {
  static const std::vector<std::string> cols{"t",
                                             "total_energy",
                                             "ballistic_energy",
                                             "entropy_total",
                                             "entropy_production_integral",
                                             "ballistic_residual",
                                             "divB_max",
                                             "boundary_heat_flux",
                                             "boundary_poynting_flux"};
  return cols;
}

void write_energy_reports(const std::string& path, std::span<const EnergyReport> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const auto& cols = energy_report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const EnergyReport& r : rows) {
    const double v[] = {r.t,
                        r.total_energy,
                        r.ballistic_energy,
                        r.entropy_total,
                        r.entropy_production_integral,
                        r.ballistic_residual,
                        r.divB_max,
                        r.boundary_heat_flux,
                        r.boundary_poynting_flux};
    for (std::size_t i = 0; i < std::size(v); ++i) out << (i ? "," : "") << fmt17(v[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

EnergyMonitor::EnergyMonitor(PhysicsModel model, BoundarySpec bc, SourceTerms src)
    : model_(std::move(model)), bc_(std::move(bc)), src_(std::move(src)) {}

EnergyMonitor::Snapshot EnergyMonitor::snapshot(const FieldState& raw) const {
  const FieldState s = with_ghosts(raw, bc_);
  const BoxGrid& g = s.grid;
  Snapshot snap;
  snap.t = s.t;
  snap.energy = total_energy(s, model_.gas);
  snap.B = s.B;
  snap.B_B = background_faces(g, bc_, s.t);
  snap.theta_tilde = harmonic_extension(g, bc_, s.t);
  snap.rho_s = entropy_density(s, model_.gas);

  const Array3& w = snap.theta_tilde;
  const HeatPairing heat = heat_pairing(s, model_, w);
  const double dissipative = weighted_heating(s, bc_, model_, w) + heat.production;
  const double transport = entropy_advection(s, snap.rho_s, w) + heat.transport;
  const EdgeField emf = induction_emf(s, bc_, model_);
  const double coupling = -edge_inner(g, emf, curl_face_to_edge(g, snap.B_B));
  const double sources = source_power(s, src_) - weighted_entropy_source(s, model_.gas, src_, w);
  snap.rate = dissipative + transport + coupling - gravity_work(s, bc_) - sources;

  const Array3 one = ones(g);
  snap.production = weighted_heating(s, bc_, model_, one) + heat_pairing(s, model_, one).production;
  return snap;
}

EnergyReport EnergyMonitor::observe(const FieldState& s) {
  Snapshot cur = snapshot(s);
  const BoxGrid& g = s.grid;
  EnergyReport r;
  r.t = s.t;
  r.total_energy = cur.energy;
  r.ballistic_energy = ballistic_energy(s, model_.gas, cur.theta_tilde, cur.B_B);
  r.entropy_total = cell_sum(g, [&](int i, int j, int k) { return cur.rho_s(i, j, k); });
  r.divB_max = max_abs_cells(g, divergence(g, s.B));
  r.boundary_heat_flux = boundary_heat_flux(s, bc_, model_);
  r.boundary_poynting_flux = boundary_poynting_flux(s, bc_, model_);

  if (!prev_) {
    initial_energy_ = cur.energy;
  } else {
    const Snapshot& a = *prev_;
    const double dt = cur.t - a.t;
    // The product-rule pairing of the mean weight with the increment turns
    // d(theta_tilde rho s) - rho s d(theta_tilde) into an exact telescoping sum.
    const double entropy_part = cell_sum(g, [&](int i, int j, int k) {
      return 0.5 * (a.theta_tilde(i, j, k) + cur.theta_tilde(i, j, k)) * (cur.rho_s(i, j, k) - a.rho_s(i, j, k));
    });
    double background_part = 0.0;
    for (int d = 0; d < 3; ++d)
      background_part += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
        return 0.5 * (a.B_B[d](i, j, k) + cur.B_B[d](i, j, k)) * (cur.B[d](i, j, k) - a.B[d](i, j, k));
      });
    const double residual =
        (cur.energy - a.energy) - entropy_part - background_part + 0.5 * dt * (a.rate + cur.rate);
    r.ballistic_residual = residual;
    r.entropy_production_integral = 0.5 * dt * (a.production + cur.production);
    cumulative_ += residual;
    max_positive_ = std::max(max_positive_, cumulative_);
  }
  prev_ = std::move(cur);
  return r;
}

std::vector<double> ballistic_balance_residual(std::span<const FieldState> history, const PhysicsModel& m,
                                               const BoundarySpec& bc, const SourceTerms& src) {
  EnergyMonitor mon(m, bc, src);
  std::vector<double> out;
  for (std::size_t n = 0; n < history.size(); ++n) {
    const EnergyReport r = mon.observe(history[n]);
    if (n > 0) out.push_back(r.ballistic_residual);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Test functions

namespace {

/// Per-axis factor pair: value and derivative.
struct AxisFactor {
  std::function<double(double)> f, df;
};

AxisFactor sine_factor(double k) {
  return {[k](double x) { return std::sin(k * x); }, [k](double x) { return k * std::cos(k * x); }};
}
AxisFactor cosine_factor(double k) {
  return {[k](double x) { return std::cos(k * x); }, [k](double x) { return -k * std::sin(k * x); }};
}

/// Lowest compatible wavenumber: half a wave between walls, one wave when periodic.
double axis_wavenumber(const BoxGrid& g, int a) {
  const double L = g.extents[z(a)];
  return g.wall(a) ? M_PI / L : 2.0 * M_PI / L;
}

/// Vector test with only component c nonzero: (1 + t/2) prod_a F_a(x_a).
VectorTest single_component(std::string name, int c, std::array<AxisFactor, 3> F) {
  auto amp = [](double t) { return 1.0 + 0.5 * t; };
  VectorTest v;
  v.name = std::move(name);
  v.value = [=](double t, const Vec3& x) {
    Vec3 r;
    r[c] = amp(t) * F[0].f(x[0]) * F[1].f(x[1]) * F[2].f(x[2]);
    return r;
  };
  v.dt = [=](double, const Vec3& x) {
    Vec3 r;
    r[c] = 0.5 * F[0].f(x[0]) * F[1].f(x[1]) * F[2].f(x[2]);
    return r;
  };
  v.grad = [=](double t, const Vec3& x) {
    Mat3 G;
    const double f0 = F[0].f(x[0]), f1 = F[1].f(x[1]), f2 = F[2].f(x[2]);
    G.m[c][0] = amp(t) * F[0].df(x[0]) * f1 * f2;
    G.m[c][1] = amp(t) * f0 * F[1].df(x[1]) * f2;
    G.m[c][2] = amp(t) * f0 * f1 * F[2].df(x[2]);
    return G;
  };
  return v;
}

const char* axis_name(int d) { return d == 0 ? "x" : (d == 1 ? "y" : "z"); }

/// Points on every wall face, including edges and corners.
std::vector<Vec3> wall_samples(const BoxGrid& g, int per_axis = 7) {
  std::vector<Vec3> pts;
  for (int d = 0; d < 3; ++d) {
    if (!g.wall(d)) continue;
    const int a = (d + 1) % 3, b = (d + 2) % 3;
    for (double side : {0.0, g.extents[z(d)]})
      for (int p = 0; p < per_axis; ++p)
        for (int q = 0; q < per_axis; ++q) {
          Vec3 x;
          x[d] = side;
          x[a] = g.extents[z(a)] * p / (per_axis - 1);
          x[b] = g.extents[z(b)] * q / (per_axis - 1);
          pts.push_back(x);
        }
  }
  return pts;
}

double time_samples[] = {0.0, 0.37, 1.0};

}  // namespace

TestDictionary default_test_dictionary(const BoxGrid& g, MagneticBC mbc) {
  TestDictionary dict;
  const std::array<double, 3> k{axis_wavenumber(g, 0), axis_wavenumber(g, 1), axis_wavenumber(g, 2)};

  dict.scalar.push_back({"constant", [](double, const Vec3&) { return 1.0; },
                         [](double, const Vec3&) { return 0.0; }, [](double, const Vec3&) { return Vec3{}; }});
  {
    std::array<AxisFactor, 3> F{cosine_factor(k[0]), cosine_factor(k[1]), cosine_factor(k[2])};
    ScalarTest s;
    s.name = "cosine_mode";
    s.value = [F](double t, const Vec3& x) { return (1.0 + t) * F[0].f(x[0]) * F[1].f(x[1]) * F[2].f(x[2]); };
    s.dt = [F](double, const Vec3& x) { return F[0].f(x[0]) * F[1].f(x[1]) * F[2].f(x[2]); };
    s.grad = [F](double t, const Vec3& x) {
      const double f0 = F[0].f(x[0]), f1 = F[1].f(x[1]), f2 = F[2].f(x[2]);
      return (1.0 + t) * Vec3{F[0].df(x[0]) * f1 * f2, f0 * F[1].df(x[1]) * f2, f0 * f1 * F[2].df(x[2])};
    };
    dict.scalar.push_back(std::move(s));
  }

  // Normal component vanishes on walls: sine along its own axis.
  auto normal_free = [&](int c) {
    std::array<AxisFactor, 3> F;
    for (int a = 0; a < 3; ++a) F[z(a)] = a == c ? sine_factor(k[z(a)]) : cosine_factor(k[z(a)]);
    return F;
  };
  // Tangential components vanish on walls: sine along the transverse axes.
  auto tangent_free = [&](int c) {
    std::array<AxisFactor, 3> F;
    for (int a = 0; a < 3; ++a) F[z(a)] = a == c ? cosine_factor(k[z(a)]) : sine_factor(k[z(a)]);
    return F;
  };
  for (int c = 0; c < 3; ++c) {
    dict.momentum.push_back(single_component(std::string("mode_") + axis_name(c), c, normal_free(c)));
    dict.induction.push_back(single_component(std::string("mode_") + axis_name(c), c,
                                              mbc == MagneticBC::TangentialDirichlet ? tangent_free(c)
                                                                                     : normal_free(c)));
  }
  return dict;
}

void check_test_dictionary(const BoxGrid& g, MagneticBC mbc, const TestDictionary& dict) {
  const auto pts = wall_samples(g);
  auto check = [&](const VectorTest& v, const std::string& family, bool normal_part) {
    for (double t : time_samples)
      for (const Vec3& x : pts) {
        const Vec3 phi = v.value(t, x);
        const double scale = 1e-12 * (1.0 + norm(phi));
        for (int d = 0; d < 3; ++d) {
          if (!g.wall(d) || !(x[d] == 0.0 || x[d] == g.extents[z(d)])) continue;
          if (normal_part && std::abs(phi[d]) > scale)
            throw ConfigError(family + " test '" + v.name + "': phi . n must vanish on walls");
          if (!normal_part)
            for (int c = 0; c < 3; ++c)
              if (c != d && std::abs(phi[c]) > scale)
                throw ConfigError(family + " test '" + v.name + "': phi x n must vanish on walls");
        }
      }
  };
  for (const VectorTest& v : dict.momentum) check(v, "momentum", true);
  for (const VectorTest& v : dict.induction) check(v, "induction", mbc != MagneticBC::TangentialDirichlet);
}

ScalarTest bump_test(const BoxGrid& g, double margin) {
  std::array<AxisFactor, 3> F;
  for (int a = 0; a < 3; ++a) {
    const double L = g.extents[z(a)];
    if (!g.wall(a)) {
      const double k = 2.0 * M_PI / L;
      F[z(a)] = {[k](double x) { return 1.0 + std::cos(k * x); }, [k](double x) { return -k * std::sin(k * x); }};
      continue;
    }
    if (!(margin > 0.0 && 2.0 * margin < L)) throw ConfigError("bump test: margin must lie in (0, L/2)");
    const double k = M_PI / (L - 2.0 * margin), m = margin;
    F[z(a)] = {[=](double x) {
                 if (x <= m || x >= L - m) return 0.0;
                 const double sn = std::sin(k * (x - m));
                 return sn * sn;
               },
               [=](double x) {
                 if (x <= m || x >= L - m) return 0.0;
                 return k * std::sin(2.0 * k * (x - m));
               }};
  }
  ScalarTest s;
  s.name = "bump";
  s.value = [F](double, const Vec3& x) { return F[0].f(x[0]) * F[1].f(x[1]) * F[2].f(x[2]); };
  s.dt = [](double, const Vec3&) { return 0.0; };
  s.grad = [F](double, const Vec3& x) {
    const double f0 = F[0].f(x[0]), f1 = F[1].f(x[1]), f2 = F[2].f(x[2]);
    return Vec3{F[0].df(x[0]) * f1 * f2, f0 * F[1].df(x[1]) * f2, f0 * f1 * F[2].df(x[2])};
  };
  return s;
}

// ---------------------------------------------------------------------------
// Weak-form residuals

namespace {

/// Integrand and endpoint value of one identity at one time, with the sum
/// of magnitudes of the integrand's terms.
struct Eval {
  double integrand = 0.0;
  double magnitude = 0.0;
  double endpoint = 0.0;
};

struct Accumulator {
  double integral = 0.0, magnitude = 0.0;
  double first = 0.0, last = 0.0;
  double prev_t = 0.0;
  Eval prev;
  bool started = false;

  void add(double t, const Eval& e) {
    if (!started) {
      first = e.endpoint;
      started = true;
    } else {
      const double dt = t - prev_t;
      integral += 0.5 * dt * (prev.integrand + e.integrand);
      magnitude += 0.5 * dt * (prev.magnitude + e.magnitude);
    }
    last = e.endpoint;
    prev = e;
    prev_t = t;
  }
  /// Integral minus the endpoint jump.
  double residual() const { return integral - (last - first); }
  double scale() const { return magnitude + std::abs(first) + std::abs(last); }
};

/// Running pair (value, |value|) for assembling integrands.
struct Terms {
  double sum = 0.0, mag = 0.0;
  void add(double v) {
    sum += v;
    mag += std::abs(v);
  }
};

Eval continuity_eval(const FieldState& s, const ScalarTest& phi, const SourceTerms& src, bool renormalized) {
  const BoxGrid& g = s.grid;
  const double t = s.t;
  auto bfun = [&](double r) { return renormalized ? r / (1.0 + r) : r; };
  auto dbfun = [&](double r) { return renormalized ? 1.0 / ((1.0 + r) * (1.0 + r)) : 1.0; };
  const Array3 divu = renormalized ? divergence(g, s.u) : Array3{};
  Eval e;
  Terms cells_time, cells_div, cells_src, faces_flux;
  e.endpoint = cell_sum(g, [&](int i, int j, int k) {
    return bfun(s.rho(i, j, k)) * phi.value(t, g.position(kCellStagger, i, j, k));
  });
  const double vol = g.cell_volume();
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const Vec3 x = g.position(kCellStagger, i, j, k);
        const double r = s.rho(i, j, k), b = bfun(r);
        cells_time.add(vol * b * phi.dt(t, x));
        if (renormalized) cells_div.add(vol * (b - dbfun(r) * r) * divu(i, j, k) * phi.value(t, x));
        if (src.mass) cells_src.add(vol * dbfun(r) * src.mass(t, x) * phi.value(t, x));
      }
  for (int d = 0; d < 3; ++d) {
    const Stagger fs = face_stagger(d);
    const Box box = g.owned(fs);
    for (int k = box.lo[2]; k < box.hi[2]; ++k)
      for (int j = box.lo[1]; j < box.hi[1]; ++j)
        for (int i = box.lo[0]; i < box.hi[0]; ++i) {
          const double bf = 0.5 * (bfun(s.rho(i, j, k)) + bfun(at(s.rho, sh({i, j, k}, d, -1))));
          faces_flux.add(vol * g.node_weight(fs, i, j, k) * bf * s.u[d](i, j, k) *
                         phi.grad(t, g.position(fs, i, j, k))[d]);
        }
  }
  for (const Terms* tm : {&cells_time, &cells_div, &cells_src, &faces_flux}) {
    e.integrand += tm->sum;
    e.magnitude += std::abs(tm->sum);
  }
  return e;
}

Eval momentum_eval(const FieldState& s, const BoundarySpec& bc, const PhysicsModel& m, const VectorTest& phi,
                   const SourceTerms& src) {
  const BoxGrid& g = s.grid;
  const double t = s.t, vol = g.cell_volume();
  Eval e;
  Terms time, gravity, source, convection, pressure, viscous, maxwell;
  for (int d = 0; d < 3; ++d) {
    const Stagger fs = face_stagger(d);
    const Box box = g.owned(fs);
    for (int k = box.lo[2]; k < box.hi[2]; ++k)
      for (int j = box.lo[1]; j < box.hi[1]; ++j)
        for (int i = box.lo[0]; i < box.hi[0]; ++i) {
          const Vec3 x = g.position(fs, i, j, k);
          const double w = vol * g.node_weight(fs, i, j, k);
          const double mom = cell_to_face(s.rho, d, i, j, k) * s.u[d](i, j, k);
          const double ph = phi.value(t, x)[d];
          e.endpoint += w * mom * ph;
          time.add(w * mom * phi.dt(t, x)[d]);
          if (bc.g) gravity.add(w * cell_to_face(s.rho, d, i, j, k) * bc.g(t, x)[d] * ph);
          if (src.momentum) source.add(w * src.momentum(t, x)[d] * ph);
        }
  }
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const Vec3 x = g.position(kCellStagger, i, j, k);
        const Mat3 Gphi = phi.grad(t, x);
        const Vec3 u = faces_to_cell(s.u, i, j, k), B = faces_to_cell(s.B, i, j, k);
        const double rho = s.rho(i, j, k), th = s.theta(i, j, k);
        const ThermoPoint tp = eos_eval(m.gas, rho, th);
        Mat3 uu, BB;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            uu.m[a][b] = rho * u[a] * u[b];
            BB.m[a][b] = B[a] * B[b] - (a == b ? 0.5 * dot(B, B) : 0.0);
          }
        const Mat3 S = viscous_stress(m.transport, th, cell_velocity_gradient(g, s.u, i, j, k));
        convection.add(vol * contract(uu, Gphi));
        pressure.add(vol * tp.p * Gphi.trace());
        viscous.add(-vol * contract(S, Gphi));
        maxwell.add(-vol * contract(BB, Gphi));
      }
  for (const Terms* tm : {&time, &gravity, &source, &convection, &pressure, &viscous, &maxwell}) {
    e.integrand += tm->sum;
    e.magnitude += std::abs(tm->sum);
  }
  return e;
}

Eval induction_eval(const FieldState& s, const PhysicsModel& m, const VectorTest& phi) {
  const BoxGrid& g = s.grid;
  const double t = s.t, vol = g.cell_volume();
  Eval e;
  Terms time, transport, resistive;
  for (int d = 0; d < 3; ++d) {
    const Stagger fs = face_stagger(d);
    const Box box = g.owned(fs);
    for (int k = box.lo[2]; k < box.hi[2]; ++k)
      for (int j = box.lo[1]; j < box.hi[1]; ++j)
        for (int i = box.lo[0]; i < box.hi[0]; ++i) {
          const Vec3 x = g.position(fs, i, j, k);
          const double w = vol * g.node_weight(fs, i, j, k);
          e.endpoint += w * s.B[d](i, j, k) * phi.value(t, x)[d];
          time.add(w * s.B[d](i, j, k) * phi.dt(t, x)[d]);
        }
  }
  const EdgeField J = curl_face_to_edge(g, s.B);
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const Mat3 G = phi.grad(t, g.position(kCellStagger, i, j, k));
        const Vec3 curl_phi{G.m[2][1] - G.m[1][2], G.m[0][2] - G.m[2][0], G.m[1][0] - G.m[0][1]};
        const Vec3 u = faces_to_cell(s.u, i, j, k), B = faces_to_cell(s.B, i, j, k);
        transport.add(-vol * dot(cross(B, u), curl_phi));
        resistive.add(-vol * magnetic_diffusivity(m.transport, s.theta(i, j, k)) *
                      dot(edges_to_cell(J, i, j, k), curl_phi));
      }
  for (const Terms* tm : {&time, &transport, &resistive}) {
    e.integrand += tm->sum;
    e.magnitude += std::abs(tm->sum);
  }
  return e;
}

}  // namespace

std::vector<WeakResidual> weak_form_residuals(std::span<const FieldState> history, const PhysicsModel& m,
                                              const BoundarySpec& bc, const TestDictionary& dict,
                                              const SourceTerms& src) {
  if (history.empty()) return {};
  check_test_dictionary(history.front().grid, bc.magnetic_bc, dict);
  const std::size_t ns = dict.scalar.size(), nm = dict.momentum.size(), ni = dict.induction.size();
  std::vector<Accumulator> acc(2 * ns + nm + ni);
  for (const FieldState& raw : history) {
    const FieldState s = with_ghosts(raw, bc);
    std::size_t slot = 0;
    for (const ScalarTest& phi : dict.scalar) acc[slot++].add(s.t, continuity_eval(s, phi, src, false));
    for (const ScalarTest& phi : dict.scalar) acc[slot++].add(s.t, continuity_eval(s, phi, src, true));
    for (const VectorTest& phi : dict.momentum) acc[slot++].add(s.t, momentum_eval(s, bc, m, phi, src));
    for (const VectorTest& phi : dict.induction) acc[slot++].add(s.t, induction_eval(s, m, phi));
  }
  std::vector<WeakResidual> out;
  std::size_t slot = 0;
  auto emit = [&](const std::string& eq, const std::string& name) {
    out.push_back({eq, name, acc[slot].residual(), acc[slot].scale()});
    ++slot;
  };
  for (const ScalarTest& phi : dict.scalar) emit("continuity", phi.name);
  for (const ScalarTest& phi : dict.scalar) emit("renormalized", phi.name);
  for (const VectorTest& phi : dict.momentum) emit("momentum", phi.name);
  for (const VectorTest& phi : dict.induction) emit("induction", phi.name);
  return out;
}

double entropy_inequality_residual(std::span<const FieldState> history, const PhysicsModel& m,
                                   const BoundarySpec& bc, const ScalarTest& phi, const SourceTerms& src) {
  if (history.empty()) return 0.0;
  const BoxGrid& g = history.front().grid;
  for (double t : time_samples) {
    for (const Vec3& x : wall_samples(g))
      if (std::abs(phi.value(t, x)) > 1e-14)
        throw ConfigError("entropy test '" + phi.name + "': must vanish on walls");
    const double lowest =
        min_over(g.cells(), [&](int i, int j, int k) { return phi.value(t, g.position(kCellStagger, i, j, k)); });
    if (lowest < 0.0) throw ConfigError("entropy test '" + phi.name + "': must be nonnegative");
  }
  Accumulator acc;
  for (const FieldState& raw : history) {
    const FieldState s = with_ghosts(raw, bc);
    const Array3 w = sample_cells(g, [&](const Vec3& x) { return phi.value(s.t, x); });
    const Array3 rho_s = entropy_density(s, m.gas);
    Eval e;
    e.endpoint = cell_sum(g, [&](int i, int j, int k) { return rho_s(i, j, k) * w(i, j, k); });
    const double time = cell_sum(g, [&](int i, int j, int k) {
      return rho_s(i, j, k) * phi.dt(s.t, g.position(kCellStagger, i, j, k));
    });
    const HeatPairing heat = heat_pairing(s, m, w);
    const double production = weighted_heating(s, bc, m, w) + heat.production;
    const double flux = entropy_advection(s, rho_s, w) + heat.transport;
    const double sources = weighted_entropy_source(s, m.gas, src, w);
    // d/dt (rho s phi) = rho s phi_t + flux terms + production + sources.
    e.integrand = time + flux + production + sources;
    e.magnitude = std::abs(time) + std::abs(flux) + std::abs(production) + std::abs(sources);
    acc.add(s.t, e);
  }
  // Jump minus the integrated right-hand side.
  return -acc.residual();
}

// ---------------------------------------------------------------------------
// Relative energy

double relative_thermal_density(const GasModel& gas, double rho, double theta, double r, double Theta) {
  const ThermoPoint a = eos_eval(gas, rho, theta);
  const ThermoPoint b = eos_eval(gas, r, Theta);
  return rho * a.e - Theta * (rho * a.s - r * b.s) - (b.e - Theta * b.s + b.p / r) * (rho - r) - r * b.e;
}

double relative_energy(const FieldState& s, const ReferenceFields& ref, const GasModel& gas) {
  const BoxGrid& g = s.grid;
  const double rmin = min_over(g.cells(), [&](int i, int j, int k) { return ref.r(i, j, k); });
  const double tmin = min_over(g.cells(), [&](int i, int j, int k) { return ref.Theta(i, j, k); });
  if (!(rmin > 0.0) || !(tmin > 0.0)) throw DomainError("relative energy: reference density and temperature must be positive");
  double total = cell_sum(g, [&](int i, int j, int k) {
    return relative_thermal_density(gas, s.rho(i, j, k), s.theta(i, j, k), ref.r(i, j, k), ref.Theta(i, j, k));
  });
  for (int d = 0; d < 3; ++d)
    total += weighted_sum(g, face_stagger(d), [&](int i, int j, int k) {
      const double du = s.u[d](i, j, k) - ref.U[d](i, j, k);
      const double dB = s.B[d](i, j, k) - ref.H[d](i, j, k);
      return 0.5 * cell_to_face(s.rho, d, i, j, k) * du * du + 0.5 * dB * dB;
    });
  return total;
}

std::size_t EssResSplit::essential_count() const {
  std::size_t n = 0;
  for (char c : ess_mask) n += c ? 1 : 0;
  return n;
}

EssResSplit ess_res_split(const FieldState& s, const ReferenceFields& ref) {
  const BoxGrid& g = s.grid;
  EssResSplit out;
  const auto cells = [&](const Array3& a) {
    return std::pair{min_over(g.cells(), [&](int i, int j, int k) { return a(i, j, k); }),
                     max_over(g.cells(), [&](int i, int j, int k) { return a(i, j, k); })};
  };
  const auto [rlo, rhi] = cells(ref.r);
  const auto [tlo, thi] = cells(ref.Theta);
  out.rho_lo = 0.5 * rlo;
  out.rho_hi = 2.0 * rhi;
  out.theta_lo = 0.5 * tlo;
  out.theta_hi = 2.0 * thi;
  out.ess_mask.reserve(g.cells().size());
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const double r = s.rho(i, j, k), th = s.theta(i, j, k);
        out.ess_mask.push_back(r >= out.rho_lo && r <= out.rho_hi && th >= out.theta_lo && th <= out.theta_hi);
      }
  return out;
}

double coercivity_constant(const GasModel& gas, const CoercivityBox& box, int n) {
  if (n < 2) throw ConfigError("coercivity lattice needs at least 2 points per axis");
  auto lin = [n](double lo, double hi, int i) { return lo + (hi - lo) * i / (n - 1); };
  const double rho_lo = 0.5 * box.r_lo, rho_hi = 2.0 * box.r_hi;
  const double th_lo = 0.5 * box.Theta_lo, th_hi = 2.0 * box.Theta_hi;
  double thermal = std::numeric_limits<double>::infinity();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double r = lin(box.r_lo, box.r_hi, a), T = lin(box.Theta_lo, box.Theta_hi, b);
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          const double rho = lin(rho_lo, rho_hi, c), th = lin(th_lo, th_hi, d);
          const double dist2 = (rho - r) * (rho - r) + (th - T) * (th - T);
          if (dist2 < 1e-10) continue;
          thermal = std::min(thermal, relative_thermal_density(gas, rho, th, r, T) / dist2);
        }
    }
  return std::min({thermal, 0.5 * rho_lo, 0.5});
}

}  // namespace mhd
