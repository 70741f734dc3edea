#pragma once

// Box domain and staggered (Yee) field layout.
//
// Index conventions, per axis a with n_a cells and spacing h_a:
//   cell-like index i  sits at x_a = (i + 1/2) h_a, interior i in [0, n_a)
//   node-like index i  sits at x_a = i h_a,         boundary nodes 0 and n_a
// A field component is described by its Stagger: 1 on node-like axes.
//   cells      (0,0,0)      rho, theta
//   faces d    e_d          u_d, B_d
//   edges d    1 - e_d      EMF_d, (curl B)_d
// Every array carries `kGhosts` layers beyond the interior on each side.

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "mhd/array3.hpp"
#include "mhd/vec3.hpp"

namespace mhd {

using Stagger = std::array<int, 3>;

inline constexpr Stagger kCellStagger{0, 0, 0};
constexpr Stagger face_stagger(int d) { return {d == 0, d == 1, d == 2}; }
constexpr Stagger edge_stagger(int d) { return {d != 0, d != 1, d != 2}; }

struct BoxGrid {
  static constexpr int kGhosts = 2;
  static constexpr int kMinCells = 4;

  std::array<double, 3> extents{1.0, 1.0, 1.0};
  Index3 n{16, 16, 16};
  /// Periodic axes wrap instead of carrying walls.
  std::array<bool, 3> periodic{false, false, false};

  double h(int d) const { return extents[static_cast<std::size_t>(d)] / n[static_cast<std::size_t>(d)]; }
  double h_min() const;
  double cell_volume() const { return h(0) * h(1) * h(2); }
  bool wall(int d) const { return !periodic[static_cast<std::size_t>(d)]; }

  /// Throws ConfigError when extents or cell counts are invalid.
  void validate() const;

  /// Allocation box of a component including ghosts.
  Box array_box(const Stagger& s) const;
  /// Interior cells.
  Box cells() const { return {{0, 0, 0}, n}; }
  /// Locations carrying independent values: cell-like axes [0, n); node-like
  /// axes [0, n] on walls (both boundary nodes) and [0, n) when periodic.
  Box owned(const Stagger& s) const;
  /// Owned range plus the duplicate node n on periodic axes: where operator
  /// outputs are written so that downstream stencils never read a stale node.
  Box computed(const Stagger& s) const;
  Vec3 position(const Stagger& s, int i, int j, int k) const;
  /// True if index `idx` along axis d is a boundary node of a wall.
  bool on_wall_node(const Stagger& s, int d, int idx) const {
    return s[static_cast<std::size_t>(d)] == 1 && wall(d) &&
           (idx == 0 || idx == n[static_cast<std::size_t>(d)]);
  }
  /// Trapezoid quadrature weight (1/2 per boundary-node direction).
  double node_weight(const Stagger& s, int i, int j, int k) const;
};

Array3 make_array(const BoxGrid& g, const Stagger& s, double value = 0.0);

struct FaceField {
  std::array<Array3, 3> c;
  Array3& operator[](int d) { return c[static_cast<std::size_t>(d)]; }
  const Array3& operator[](int d) const { return c[static_cast<std::size_t>(d)]; }
};
using EdgeField = FaceField;  // component d stored with edge_stagger(d)

FaceField make_faces(const BoxGrid& g, double value = 0.0);
EdgeField make_edges(const BoxGrid& g, double value = 0.0);

/// Fields at one time level.
struct FieldState {
  BoxGrid grid;
  Array3 rho;
  Array3 theta;
  FaceField u;
  FaceField B;
  double t = 0.0;

  FieldState() = default;
  explicit FieldState(const BoxGrid& g);
};

enum class MagneticBC { TangentialDirichlet, NormalFluxZeroEMF };
/// Insulated walls are only the conservative diagnostic case.
enum class ThermalBC { Dirichlet, Insulated };

std::string to_string(MagneticBC bc);

using ScalarFn = std::function<double(double, const Vec3&)>;
using VectorFn = std::function<Vec3(double, const Vec3&)>;

struct BoundarySpec {
  ScalarFn theta_b;
  VectorFn B_B;
  VectorFn g;
  MagneticBC magnetic_bc = MagneticBC::TangentialDirichlet;
  ThermalBC thermal_bc = ThermalBC::Dirichlet;
  /// Set when theta_b does not depend on (t, x).
  bool theta_b_constant = false;
  /// Set when B_B does not depend on t.
  bool B_B_steady = false;

  static BoundarySpec uniform(double theta_b, const Vec3& B_B, const Vec3& g,
                              MagneticBC mbc = MagneticBC::TangentialDirichlet);
};

/// Boundary data checks: theta_b > 0 at every boundary face centre and
/// |div B_B| small at cell centres. Throws ConfigError naming the violation.
void validate_boundary(const BoxGrid& g, const BoundarySpec& bc, double t);

/// Maximum of |div B_B| over cell centres (fourth-order differences).
double background_divergence(const BoxGrid& g, const BoundarySpec& bc, double t);

/// Ghost-cell enforcement at time t:
///   velocity   u.n = 0 on wall faces, tangential components mirrored (slip)
///   theta      ghost = 2 theta_B - interior (Dirichlet at face midpoints), or mirrored
///   rho        mirrored (homogeneous Neumann)
///   B          TangentialDirichlet: tangential ghosts reflect about B_B x n;
///              NormalFluxZeroEMF: tangential ghosts mirrored, wall-normal B untouched
/// Periodic axes wrap. Idempotent at fixed t.
void apply_boundaries(FieldState& state, const BoundarySpec& bc, double t);

// Component-level ghost filling, shared with the linear solvers.
enum class Reflect { Even, Odd, Dirichlet };
/// Wall value used by Reflect::Dirichlet: ghost = 2 w(x_wall) - mirror.
using WallValue = std::function<double(const Vec3&)>;
void fill_ghosts(const BoxGrid& g, Array3& a, const Stagger& s,
                 const std::array<Reflect, 3>& rule, const WallValue& wall_value = {});

void fill_cell_ghosts_even(const BoxGrid& g, Array3& a);
void fill_velocity_ghosts(const BoxGrid& g, FaceField& u);
void fill_theta_ghosts(const BoxGrid& g, Array3& theta, const BoundarySpec& bc, double t);
void fill_magnetic_ghosts(const BoxGrid& g, FaceField& B, const BoundarySpec& bc, double t);
/// Homogeneous counterpart (B_B = 0) used for linear solves.
void fill_magnetic_ghosts_homogeneous(const BoxGrid& g, FaceField& B, MagneticBC mbc);

/// Samples B_B at face centres, normal components only.
FaceField sample_background(const BoxGrid& g, const BoundarySpec& bc, double t);

/// Discrete Helmholtz projection: B - grad(phi) with Laplacian(phi) = div(B),
/// phi = 0 on walls, periodic otherwise. Throws NumericalError if the
/// conjugate-gradient solve does not reach 1e-12 relative divergence.
FaceField initial_divergence_cleaning(const BoxGrid& g, const FaceField& B_raw);

// Checkpoint: little-endian binary
//   "MHDB" | u32 version | u32 nx, ny, nz | f64 Lx, Ly, Lz | f64 t |
//   rho[cells] | theta[cells] | u_x | u_y | u_z | B_x | B_y | B_z
// Cells run over [0,n)^3; face component d over [0,n_d] along d. x fastest.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const std::string& path, const FieldState& state);
FieldState read_checkpoint(const std::string& path, const std::array<bool, 3>& periodic);

}  // namespace mhd
