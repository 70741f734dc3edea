#include "mhd/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mhd/discrete_ops.hpp"
#include "mhd/errors.hpp"
#include "mhd/linear_solver.hpp"
#include "mhd/parallel.hpp"

namespace mhd {

namespace {
constexpr std::size_t u(int d) { return static_cast<std::size_t>(d); }
}  // namespace

double BoxGrid::h_min() const { return std::min({h(0), h(1), h(2)}); }

void BoxGrid::validate() const {
  std::ostringstream os;
  for (int d = 0; d < 3; ++d) {
    if (!(extents[u(d)] > 0.0) || !std::isfinite(extents[u(d)]))
      os << "grid.extent[" << d << "]: must be positive; ";
    if (n[u(d)] < kMinCells) os << "grid.n[" << d << "]: need at least " << kMinCells << " cells; ";
  }
  if (!os.str().empty()) throw ConfigError(os.str());
}

Box BoxGrid::array_box(const Stagger& s) const {
  Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[u(d)] = -kGhosts;
    b.hi[u(d)] = n[u(d)] + kGhosts + s[u(d)];
  }
  return b;
}

Box BoxGrid::owned(const Stagger& s) const {
  Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[u(d)] = 0;
    b.hi[u(d)] = n[u(d)] + ((s[u(d)] == 1 && wall(d)) ? 1 : 0);
  }
  return b;
}

Box BoxGrid::computed(const Stagger& s) const {
  Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[u(d)] = 0;
    b.hi[u(d)] = n[u(d)] + s[u(d)];
  }
  return b;
}

Vec3 BoxGrid::position(const Stagger& s, int i, int j, int k) const {
  const int idx[3] = {i, j, k};
  Vec3 x;
  for (int d = 0; d < 3; ++d) x[d] = (idx[d] + 0.5 * (1 - s[u(d)])) * h(d);
  return x;
}

double BoxGrid::node_weight(const Stagger& s, int i, int j, int k) const {
  const int idx[3] = {i, j, k};
  double w = 1.0;
  for (int d = 0; d < 3; ++d)
    if (on_wall_node(s, d, idx[d])) w *= 0.5;
  return w;
}

Array3 make_array(const BoxGrid& g, const Stagger& s, double value) {
  return Array3(g.array_box(s), value);
}

FaceField make_faces(const BoxGrid& g, double value) {
  return {{make_array(g, face_stagger(0), value), make_array(g, face_stagger(1), value),
           make_array(g, face_stagger(2), value)}};
}

EdgeField make_edges(const BoxGrid& g, double value) {
  return {{make_array(g, edge_stagger(0), value), make_array(g, edge_stagger(1), value),
           make_array(g, edge_stagger(2), value)}};
}

FieldState::FieldState(const BoxGrid& g)
    : grid(g),
      rho(make_array(g, kCellStagger, 1.0)),
      theta(make_array(g, kCellStagger, 1.0)),
      u(make_faces(g)),
      B(make_faces(g)) {}

std::string to_string(MagneticBC bc) {
  return bc == MagneticBC::TangentialDirichlet ? "tangential_dirichlet" : "normal_flux";
}

BoundarySpec BoundarySpec::uniform(double theta_b, const Vec3& B_B, const Vec3& g,
                                   MagneticBC mbc) {
  BoundarySpec bc;
  bc.theta_b = [theta_b](double, const Vec3&) { return theta_b; };
  bc.B_B = [B_B](double, const Vec3&) { return B_B; };
  bc.g = [g](double, const Vec3&) { return g; };
  bc.magnetic_bc = mbc;
  bc.theta_b_constant = true;
  bc.B_B_steady = true;
  return bc;
}

double background_divergence(const BoxGrid& g, const BoundarySpec& bc, double t) {
  if (!bc.B_B) return 0.0;
  double worst = 0.0;
  const double step[3] = {1e-3 * g.extents[0], 1e-3 * g.extents[1], 1e-3 * g.extents[2]};
  for (int k = 0; k < g.n[2]; ++k)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        const Vec3 x = g.position(kCellStagger, i, j, k);
        double div = 0.0;
        for (int d = 0; d < 3; ++d) {
          auto f = [&](double off) {
            Vec3 y = x;
            y[d] += off * step[d];
            return bc.B_B(t, y)[d];
          };
          div += (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * step[d]);
        }
        worst = std::max(worst, std::abs(div));
      }
  return worst;
}

void validate_boundary(const BoxGrid& g, const BoundarySpec& bc, double t) {
  if (!bc.theta_b || !bc.B_B || !bc.g) throw ConfigError("boundary: theta_b, B_B and g must all be set");
  std::ostringstream os;
  double min_theta = std::numeric_limits<double>::infinity();
  double max_b = 0.0;
  for (int d = 0; d < 3; ++d) {
    if (!g.wall(d)) continue;
    const Stagger s = face_stagger(d);
    Box b = g.owned(s);
    for (int side = 0; side < 2; ++side) {
      b.lo[u(d)] = side == 0 ? 0 : g.n[u(d)];
      b.hi[u(d)] = b.lo[u(d)] + 1;
      for (int k = b.lo[2]; k < b.hi[2]; ++k)
        for (int j = b.lo[1]; j < b.hi[1]; ++j)
          for (int i = b.lo[0]; i < b.hi[0]; ++i) {
            const Vec3 x = g.position(s, i, j, k);
            min_theta = std::min(min_theta, bc.theta_b(t, x));
            max_b = std::max(max_b, norm(bc.B_B(t, x)));
          }
    }
  }
  if (!(min_theta > 0.0)) os << "boundary.theta_b: must be positive; ";
  const double lmin = std::min({g.extents[0], g.extents[1], g.extents[2]});
  const double div = background_divergence(g, bc, t);
  if (div > 1e-6 * std::max(max_b, 1.0) / lmin) os << "boundary.B_B: not solenoidal, |div| = " << div << "; ";
  if (!os.str().empty()) throw ConfigError(os.str());
}

void fill_ghosts(const BoxGrid& g, Array3& a, const Stagger& s, const std::array<Reflect, 3>& rule,
                 const WallValue& wall_value) {
  const Box box = a.box();
  for (int d = 0; d < 3; ++d) {
    const int n = g.n[u(d)];
    const int p = (d + 1) % 3, q = (d + 2) % 3;
    const bool node = s[u(d)] == 1;
    auto ref = [&](int idx, int ip, int iq) -> double& {
      Index3 x;
      x[u(d)] = idx;
      x[u(p)] = ip;
      x[u(q)] = iq;
      return a(x[0], x[1], x[2]);
    };
    auto wall_point = [&](int side, int ip, int iq) {
      Index3 x;
      x[u(d)] = 0;
      x[u(p)] = ip;
      x[u(q)] = iq;
      Vec3 pos = g.position(s, x[0], x[1], x[2]);
      pos[d] = side == 0 ? 0.0 : g.extents[u(d)];
      return pos;
    };
    const Reflect r = rule[u(d)];
    for (int iq = box.lo[u(q)]; iq < box.hi[u(q)]; ++iq)
      for (int ip = box.lo[u(p)]; ip < box.hi[u(p)]; ++ip) {
        if (g.periodic[u(d)]) {
          for (int idx = box.lo[u(d)]; idx < 0; ++idx) ref(idx, ip, iq) = ref(idx + n, ip, iq);
          for (int idx = n; idx < box.hi[u(d)]; ++idx) ref(idx, ip, iq) = ref(idx - n, ip, iq);
          continue;
        }
        const double w_lo = r == Reflect::Dirichlet ? wall_value(wall_point(0, ip, iq)) : 0.0;
        const double w_hi = r == Reflect::Dirichlet ? wall_value(wall_point(1, ip, iq)) : 0.0;
        auto reflect = [&](double mirror, double w) {
          switch (r) {
            case Reflect::Even: return mirror;
            case Reflect::Odd: return -mirror;
            case Reflect::Dirichlet: return 2.0 * w - mirror;
          }
          return mirror;
        };
        if (node) {
          if (r == Reflect::Odd) {
            ref(0, ip, iq) = 0.0;
            ref(n, ip, iq) = 0.0;
          }
          for (int m = 1; m <= BoxGrid::kGhosts; ++m) {
            ref(-m, ip, iq) = reflect(ref(m, ip, iq), w_lo);
            ref(n + m, ip, iq) = reflect(ref(n - m, ip, iq), w_hi);
          }
        } else {
          for (int m = 0; m < BoxGrid::kGhosts; ++m) {
            ref(-1 - m, ip, iq) = reflect(ref(m, ip, iq), w_lo);
            ref(n + m, ip, iq) = reflect(ref(n - 1 - m, ip, iq), w_hi);
          }
        }
      }
  }
}

void fill_cell_ghosts_even(const BoxGrid& g, Array3& a) {
  fill_ghosts(g, a, kCellStagger, {Reflect::Even, Reflect::Even, Reflect::Even});
}

void fill_velocity_ghosts(const BoxGrid& g, FaceField& v) {
  for (int d = 0; d < 3; ++d) {
    std::array<Reflect, 3> rule{Reflect::Even, Reflect::Even, Reflect::Even};
    rule[u(d)] = Reflect::Odd;
    fill_ghosts(g, v[d], face_stagger(d), rule);
  }
}

void fill_theta_ghosts(const BoxGrid& g, Array3& theta, const BoundarySpec& bc, double t) {
  if (bc.thermal_bc == ThermalBC::Insulated) {
    fill_cell_ghosts_even(g, theta);
    return;
  }
  const WallValue w = [&](const Vec3& x) {
    const double v = bc.theta_b(t, x);
    if (!(v > 0.0)) throw ConfigError("boundary.theta_b: must be positive");
    return v;
  };
  fill_ghosts(g, theta, kCellStagger, {Reflect::Dirichlet, Reflect::Dirichlet, Reflect::Dirichlet}, w);
}

void fill_magnetic_ghosts(const BoxGrid& g, FaceField& B, const BoundarySpec& bc, double t) {
  for (int d = 0; d < 3; ++d) {
    const Reflect tang =
        bc.magnetic_bc == MagneticBC::TangentialDirichlet ? Reflect::Dirichlet : Reflect::Even;
    std::array<Reflect, 3> rule{tang, tang, tang};
    rule[u(d)] = Reflect::Even;
    const WallValue w = [&, d](const Vec3& x) { return bc.B_B(t, x)[d]; };
    fill_ghosts(g, B[d], face_stagger(d), rule, w);
  }
}

void fill_magnetic_ghosts_homogeneous(const BoxGrid& g, FaceField& B, MagneticBC mbc) {
  for (int d = 0; d < 3; ++d) {
    const Reflect tang = mbc == MagneticBC::TangentialDirichlet ? Reflect::Odd : Reflect::Even;
    std::array<Reflect, 3> rule{tang, tang, tang};
    rule[u(d)] = Reflect::Even;
    fill_ghosts(g, B[d], face_stagger(d), rule);
  }
}

void apply_boundaries(FieldState& s, const BoundarySpec& bc, double t) {
  const BoxGrid& g = s.grid;
  fill_cell_ghosts_even(g, s.rho);
  fill_theta_ghosts(g, s.theta, bc, t);
  fill_velocity_ghosts(g, s.u);
  fill_magnetic_ghosts(g, s.B, bc, t);
}

FaceField sample_background(const BoxGrid& g, const BoundarySpec& bc, double t) {
  FaceField f = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    const Stagger s = face_stagger(d);
    for_each_index(g.owned(s), [&](int i, int j, int k) {
      f[d](i, j, k) = bc.B_B(t, g.position(s, i, j, k))[d];
    });
  }
  return f;
}

FaceField initial_divergence_cleaning(const BoxGrid& g, const FaceField& B_raw) {
  FaceField B = B_raw;
  // Normalize the periodic duplicate nodes before measuring the divergence.
  for (int d = 0; d < 3; ++d)
    fill_ghosts(g, B[d], face_stagger(d), {Reflect::Even, Reflect::Even, Reflect::Even});
  const Array3 div = divergence(g, B);
  const double bmax = max_abs_faces(g, B);
  if (bmax == 0.0) return B;

  const DofMap dofs = DofMap::cells(g);
  const std::vector<double> w(dofs.size(), 1.0);
  std::vector<double> rhs(dofs.size()), phi(dofs.size(), 0.0);
  {
    const Array3* src[] = {&div};
    dofs.gather(src, rhs);
  }
  const bool all_periodic = g.periodic[0] && g.periodic[1] && g.periodic[2];
  auto project_mean = [&](std::span<double> v) {
    if (!all_periodic) return;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double& x : v) x -= m;
  };
  project_mean(rhs);
  for (double& r : rhs) r = -r;  // solve (-lap) phi = -div

  Array3 work = make_array(g, kCellStagger);
  const LinearOperator neg_lap = [&](std::span<const double> x, std::span<double> y) {
    Array3* dst[] = {&work};
    dofs.scatter(x, dst);
    fill_ghosts(g, work, kCellStagger, {Reflect::Odd, Reflect::Odd, Reflect::Odd});
    const Array3 l = laplacian(g, work);
    const Array3* src[] = {&l};
    dofs.gather(src, y);
    for (double& v : y) v = -v;
    project_mean(y);
  };
  const CgResult res = conjugate_gradient(neg_lap, rhs, phi, w, 1e-15, 20 * static_cast<int>(dofs.size()),
                                          1e-300);
  Array3* dst[] = {&work};
  dofs.scatter(phi, dst);
  fill_ghosts(g, work, kCellStagger, {Reflect::Odd, Reflect::Odd, Reflect::Odd});
  const FaceField gphi = gradient(g, work);
  for (int d = 0; d < 3; ++d)
    for_each_index(g.owned(face_stagger(d)), [&](int i, int j, int k) { B[d](i, j, k) -= gphi[d](i, j, k); });
  for (int d = 0; d < 3; ++d)
    fill_ghosts(g, B[d], face_stagger(d), {Reflect::Even, Reflect::Even, Reflect::Even});

  const double rel = max_abs_cells(g, divergence(g, B)) * g.h_min() / bmax;
  if (rel > 1e-12) {
    std::ostringstream os;
    os << "initial_divergence_cleaning: Poisson solve stalled after " << res.iterations
       << " iterations, relative divergence " << rel;
    throw NumericalError(os.str(), rel);
  }
  return B;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw IoError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

Box stored_box(const BoxGrid& g, const Stagger& s) {
  Box b{{0, 0, 0}, g.n};
  for (int d = 0; d < 3; ++d) b.hi[u(d)] += s[u(d)];
  return b;
}

}  // namespace

void write_checkpoint(const std::string& path, const FieldState& st) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write("MHDB", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  for (int d = 0; d < 3; ++d) put<std::uint32_t>(os, static_cast<std::uint32_t>(st.grid.n[u(d)]));
  for (int d = 0; d < 3; ++d) put<double>(os, st.grid.extents[u(d)]);
  put<double>(os, st.t);
  auto dump = [&](const Array3& a, const Stagger& s) {
    const Box b = stored_box(st.grid, s);
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) put<double>(os, a(i, j, k));
  };
  dump(st.rho, kCellStagger);
  dump(st.theta, kCellStagger);
  for (int d = 0; d < 3; ++d) dump(st.u[d], face_stagger(d));
  for (int d = 0; d < 3; ++d) dump(st.B[d], face_stagger(d));
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

FieldState read_checkpoint(const std::string& path, const std::array<bool, 3>& periodic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MHDB", 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  BoxGrid g;
  for (int d = 0; d < 3; ++d) g.n[u(d)] = static_cast<int>(get<std::uint32_t>(is));
  for (int d = 0; d < 3; ++d) g.extents[u(d)] = get<double>(is);
  g.periodic = periodic;
  g.validate();
  FieldState st(g);
  st.t = get<double>(is);
  auto load = [&](Array3& a, const Stagger& s) {
    const Box b = stored_box(g, s);
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) a(i, j, k) = get<double>(is);
  };
  load(st.rho, kCellStagger);
  load(st.theta, kCellStagger);
  for (int d = 0; d < 3; ++d) load(st.u[d], face_stagger(d));
  for (int d = 0; d < 3; ++d) load(st.B[d], face_stagger(d));
  return st;
}

}  // namespace mhd
