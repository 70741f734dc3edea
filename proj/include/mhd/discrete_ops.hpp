#pragma once

// Mimetic staggered operators.
//
//   divergence         faces -> cells   forward differences
//   gradient           cells -> faces   backward differences (reads cell ghosts)
//   curl_face_to_edge  faces -> edges   backward differences (reads face ghosts)
//   curl_edge_to_face  edges -> faces   forward differences
//
// divergence(curl_edge_to_face(w)) == 0 identically, the pairs (-div, grad)
// and (curl_fe, curl_ef) are adjoint up to boundary sums. Outputs are written
// on the owned range of the target location (plus the duplicate node on
// periodic axes); ghosts of outputs stay zero.

#include <cstdint>

#include "mhd/grid.hpp"

namespace mhd {

Array3 divergence(const BoxGrid& g, const FaceField& v);
FaceField gradient(const BoxGrid& g, const Array3& phi);
EdgeField curl_face_to_edge(const BoxGrid& g, const FaceField& v);
FaceField curl_edge_to_face(const BoxGrid& g, const EdgeField& w);
/// divergence(gradient(phi)); phi ghosts must be filled.
Array3 laplacian(const BoxGrid& g, const Array3& phi);

/// Serial reference implementations; bitwise identical results.
namespace reference {
Array3 divergence(const BoxGrid& g, const FaceField& v);
FaceField gradient(const BoxGrid& g, const Array3& phi);
EdgeField curl_face_to_edge(const BoxGrid& g, const FaceField& v);
FaceField curl_edge_to_face(const BoxGrid& g, const EdgeField& w);
Array3 laplacian(const BoxGrid& g, const Array3& phi);
}  // namespace reference

/// Bundle of the operators bound to one grid.
struct OperatorSet {
  BoxGrid grid;

  Array3 div(const FaceField& v) const { return divergence(grid, v); }
  FaceField grad(const Array3& phi) const { return gradient(grid, phi); }
  EdgeField curl_fe(const FaceField& v) const { return curl_face_to_edge(grid, v); }
  FaceField curl_ef(const EdgeField& w) const { return curl_edge_to_face(grid, w); }
  Array3 lap(const Array3& phi) const { return laplacian(grid, phi); }
};

// Quadrature over owned locations with trapezoid weights.
double cell_inner(const BoxGrid& g, const Array3& a, const Array3& b);
double face_inner(const BoxGrid& g, const FaceField& a, const FaceField& b);
double edge_inner(const BoxGrid& g, const EdgeField& a, const EdgeField& b);
double max_abs(const Box& box, const Array3& a);
double max_abs_cells(const BoxGrid& g, const Array3& a);
double max_abs_faces(const BoxGrid& g, const FaceField& f);

// Interpolation stencils.

/// Face component d averaged to the cell centre.
inline double face_to_cell(const FaceField& f, int d, int i, int j, int k) {
  Index3 p{i, j, k};
  const double lo = f[d](i, j, k);
  ++p[static_cast<std::size_t>(d)];
  return 0.5 * (lo + f[d](p[0], p[1], p[2]));
}

/// Cell values averaged to face d.
inline double cell_to_face(const Array3& a, int d, int i, int j, int k) {
  Index3 p{i, j, k};
  --p[static_cast<std::size_t>(d)];
  return 0.5 * (a(i, j, k) + a(p[0], p[1], p[2]));
}

/// Face components transverse to edge direction e, averaged to that edge.
/// Component e of the result is zero; it never enters (a x b)_e.
inline Vec3 transverse_at_edge(const FaceField& f, int e, int i, int j, int k) {
  Vec3 r;
  for (int c = 0; c < 3; ++c) {
    if (c == e) continue;
    const int o = 3 - e - c;
    Index3 p{i, j, k};
    --p[static_cast<std::size_t>(o)];
    r[c] = 0.5 * (f[c](i, j, k) + f[c](p[0], p[1], p[2]));
  }
  return r;
}

/// Component e of a x b from transverse components.
inline double cross_component(const Vec3& a, const Vec3& b, int e) {
  const int c = (e + 1) % 3, o = (e + 2) % 3;
  return a[c] * b[o] - a[o] * b[c];
}

/// Cell-centred velocity gradient, G(a, b) = du_a/dx_b: diagonal from the
/// cell's own faces, off-diagonal from centred differences of cell averages.
inline Mat3 cell_velocity_gradient(const BoxGrid& g, const FaceField& u, int i, int j, int k) {
  Mat3 G;
  for (int d = 0; d < 3; ++d)
    for (int a = 0; a < 3; ++a) {
      Index3 up{i, j, k}, dn{i, j, k};
      ++up[static_cast<std::size_t>(a)];
      if (a == d) {
        G.m[d][d] = (u[d](up[0], up[1], up[2]) - u[d](i, j, k)) / g.h(d);
      } else {
        --dn[static_cast<std::size_t>(a)];
        G.m[d][a] = (face_to_cell(u, d, up[0], up[1], up[2]) - face_to_cell(u, d, dn[0], dn[1], dn[2])) /
                    (2.0 * g.h(a));
      }
    }
  return G;
}

/// Mean of the four edges of direction e around the cell, for each e.
inline Vec3 edges_to_cell(const EdgeField& w, int i, int j, int k) {
  Vec3 r;
  for (int e = 0; e < 3; ++e) {
    Index3 pa{i, j, k}, pb{i, j, k}, pab{i, j, k};
    const auto a = static_cast<std::size_t>((e + 1) % 3), b = static_cast<std::size_t>((e + 2) % 3);
    ++pa[a];
    ++pb[b];
    ++pab[a];
    ++pab[b];
    r[e] = 0.25 * (w[e](i, j, k) + w[e](pa[0], pa[1], pa[2]) + w[e](pb[0], pb[1], pb[2]) +
                   w[e](pab[0], pab[1], pab[2]));
  }
  return r;
}

/// Face vector averaged to the cell centre.
inline Vec3 faces_to_cell(const FaceField& f, int i, int j, int k) {
  return {face_to_cell(f, 0, i, j, k), face_to_cell(f, 1, i, j, k), face_to_cell(f, 2, i, j, k)};
}

struct SbpReport {
  int trials = 0;
  double div_grad = 0.0;     // <div v, phi> + <v, grad phi>
  double curl_pair = 0.0;    // <curl_fe v, w> - <v, curl_ef w>
  double div_curl = 0.0;     // max |div curl_ef w| h / max |curl_ef w|
  double vector_identity = 0.0;          // discrete vector identity, independent arguments
  double vector_identity_coinciding = 0.0;  // same identity with H = B, U = u
  double worst() const;
};

/// Fields for one evaluation of the summation-by-parts residuals. All should
/// vanish within two cells of every wall so that boundary sums drop out.
struct SbpFields {
  Array3 phi;
  FaceField v;
  EdgeField w;
  FaceField u, U, B, H;
};

SbpFields random_compact_fields(const BoxGrid& g, std::uint64_t seed);
/// Relative residuals for one field set.
SbpReport sbp_residuals(const BoxGrid& g, const SbpFields& f);
/// Maximum residuals over `trials` random compactly supported field sets.
SbpReport sbp_report(const BoxGrid& g, int trials, std::uint64_t seed);

/// Discrete form of the identity relating the Lorentz-force and induction
/// couplings of (u, B) against a comparison pair (U, H). Returns
/// (lhs, rhs, scale) where scale is the sum of magnitudes of all terms.
struct IdentityTerms {
  double lhs = 0.0;
  double rhs = 0.0;
  double scale = 0.0;
};
IdentityTerms induction_identity(const BoxGrid& g, const FaceField& u, const FaceField& U,
                                 const FaceField& B, const FaceField& H);

}  // namespace mhd
