#include "mhd/discrete_ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mhd/parallel.hpp"

namespace mhd {

namespace {

inline double at(const Array3& a, Index3 p) { return a(p[0], p[1], p[2]); }

Index3 shifted(int i, int j, int k, int d, int by) {
  Index3 p{i, j, k};
  p[static_cast<std::size_t>(d)] += by;
  return p;
}

// Kernels shared by the parallel and serial drivers. `Loop` is either
// for_each_index or a plain triple loop.

template <class Loop>
Array3 divergence_impl(const BoxGrid& g, const FaceField& v, Loop&& loop) {
  Array3 out = make_array(g, kCellStagger);
  const double ih[3] = {1.0 / g.h(0), 1.0 / g.h(1), 1.0 / g.h(2)};
  loop(g.cells(), [&](int i, int j, int k) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) s += (at(v[d], shifted(i, j, k, d, 1)) - v[d](i, j, k)) * ih[d];
    out(i, j, k) = s;
  });
  return out;
}

template <class Loop>
FaceField gradient_impl(const BoxGrid& g, const Array3& phi, Loop&& loop) {
  FaceField out = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    const double ih = 1.0 / g.h(d);
    Array3& o = out[d];
    loop(g.computed(face_stagger(d)), [&](int i, int j, int k) {
      o(i, j, k) = (phi(i, j, k) - at(phi, shifted(i, j, k, d, -1))) * ih;
    });
  }
  return out;
}

template <class Loop>
EdgeField curl_fe_impl(const BoxGrid& g, const FaceField& v, Loop&& loop) {
  EdgeField out = make_edges(g);
  for (int e = 0; e < 3; ++e) {
    const int a = (e + 1) % 3, b = (e + 2) % 3;
    const double iha = 1.0 / g.h(a), ihb = 1.0 / g.h(b);
    Array3& o = out[e];
    const Array3& vb = v[b];
    const Array3& va = v[a];
    loop(g.computed(edge_stagger(e)), [&](int i, int j, int k) {
      o(i, j, k) = (vb(i, j, k) - at(vb, shifted(i, j, k, a, -1))) * iha -
                   (va(i, j, k) - at(va, shifted(i, j, k, b, -1))) * ihb;
    });
  }
  return out;
}

template <class Loop>
FaceField curl_ef_impl(const BoxGrid& g, const EdgeField& w, Loop&& loop) {
  FaceField out = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    const int a = (d + 1) % 3, b = (d + 2) % 3;
    const double iha = 1.0 / g.h(a), ihb = 1.0 / g.h(b);
    Array3& o = out[d];
    const Array3& wb = w[b];
    const Array3& wa = w[a];
    loop(g.computed(face_stagger(d)), [&](int i, int j, int k) {
      o(i, j, k) = (at(wb, shifted(i, j, k, a, 1)) - wb(i, j, k)) * iha -
                   (at(wa, shifted(i, j, k, b, 1)) - wa(i, j, k)) * ihb;
    });
  }
  return out;
}

struct ParallelLoop {
  template <class F>
  void operator()(const Box& b, F&& f) const {
    for_each_index(b, f);
  }
};

struct SerialLoop {
  template <class F>
  void operator()(const Box& b, F&& f) const {
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) f(i, j, k);
  }
};

double weighted_sum(const BoxGrid& g, const Stagger& s, const Array3& a, const Array3& b) {
  return g.cell_volume() * sum_over(g.owned(s), [&](int i, int j, int k) {
           return g.node_weight(s, i, j, k) * a(i, j, k) * b(i, j, k);
         });
}

}  // namespace

Array3 divergence(const BoxGrid& g, const FaceField& v) { return divergence_impl(g, v, ParallelLoop{}); }
FaceField gradient(const BoxGrid& g, const Array3& phi) { return gradient_impl(g, phi, ParallelLoop{}); }
EdgeField curl_face_to_edge(const BoxGrid& g, const FaceField& v) {
  return curl_fe_impl(g, v, ParallelLoop{});
}
FaceField curl_edge_to_face(const BoxGrid& g, const EdgeField& w) {
  return curl_ef_impl(g, w, ParallelLoop{});
}
Array3 laplacian(const BoxGrid& g, const Array3& phi) { return divergence(g, gradient(g, phi)); }

namespace reference {
Array3 divergence(const BoxGrid& g, const FaceField& v) { return divergence_impl(g, v, SerialLoop{}); }
FaceField gradient(const BoxGrid& g, const Array3& phi) { return gradient_impl(g, phi, SerialLoop{}); }
EdgeField curl_face_to_edge(const BoxGrid& g, const FaceField& v) {
  return curl_fe_impl(g, v, SerialLoop{});
}
FaceField curl_edge_to_face(const BoxGrid& g, const EdgeField& w) {
  return curl_ef_impl(g, w, SerialLoop{});
}
Array3 laplacian(const BoxGrid& g, const Array3& phi) {
  return reference::divergence(g, reference::gradient(g, phi));
}
}  // namespace reference

double cell_inner(const BoxGrid& g, const Array3& a, const Array3& b) {
  return weighted_sum(g, kCellStagger, a, b);
}

double face_inner(const BoxGrid& g, const FaceField& a, const FaceField& b) {
  double s = 0.0;
  for (int d = 0; d < 3; ++d) s += weighted_sum(g, face_stagger(d), a[d], b[d]);
  return s;
}

double edge_inner(const BoxGrid& g, const EdgeField& a, const EdgeField& b) {
  double s = 0.0;
  for (int e = 0; e < 3; ++e) s += weighted_sum(g, edge_stagger(e), a[e], b[e]);
  return s;
}

double max_abs(const Box& box, const Array3& a) {
  return std::max(0.0, max_over(box, [&](int i, int j, int k) { return std::abs(a(i, j, k)); }));
}

double max_abs_cells(const BoxGrid& g, const Array3& a) { return max_abs(g.cells(), a); }

double max_abs_faces(const BoxGrid& g, const FaceField& f) {
  double m = 0.0;
  for (int d = 0; d < 3; ++d) m = std::max(m, max_abs(g.owned(face_stagger(d)), f[d]));
  return m;
}

double SbpReport::worst() const {
  return std::max({div_grad, curl_pair, div_curl, vector_identity, vector_identity_coinciding});
}

SbpFields random_compact_fields(const BoxGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  // Support: index >= 2 and <= n - 3 on every axis, so wall nodes, wall edges
  // and all ghost reads see zeros.
  auto fill = [&](Array3& a, const Stagger& s) {
    const Box own = g.owned(s);
    for (int k = own.lo[2]; k < own.hi[2]; ++k)
      for (int j = own.lo[1]; j < own.hi[1]; ++j)
        for (int i = own.lo[0]; i < own.hi[0]; ++i) {
          const Index3 p{i, j, k};
          bool inside = true;
          for (int d = 0; d < 3; ++d)
            inside = inside && p[static_cast<std::size_t>(d)] >= 2 &&
                     p[static_cast<std::size_t>(d)] <= g.n[static_cast<std::size_t>(d)] - 3;
          a(i, j, k) = inside ? uni(rng) : 0.0;
        }
  };
  SbpFields f;
  f.phi = make_array(g, kCellStagger);
  fill(f.phi, kCellStagger);
  f.v = make_faces(g);
  f.w = make_edges(g);
  f.u = make_faces(g);
  f.U = make_faces(g);
  f.B = make_faces(g);
  f.H = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    fill(f.v[d], face_stagger(d));
    fill(f.w[d], edge_stagger(d));
    fill(f.u[d], face_stagger(d));
    fill(f.U[d], face_stagger(d));
    fill(f.B[d], face_stagger(d));
    fill(f.H[d], face_stagger(d));
  }
  return f;
}

IdentityTerms induction_identity(const BoxGrid& g, const FaceField& u, const FaceField& U,
                                 const FaceField& B, const FaceField& H) {
  FaceField BmH = make_faces(g);
  FaceField Umu = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    auto bm = BmH[d].values();
    auto um = Umu[d].values();
    for (std::size_t n = 0; n < bm.size(); ++n) {
      bm[n] = B[d].values()[n] - H[d].values()[n];
      um[n] = U[d].values()[n] - u[d].values()[n];
    }
  }
  const EdgeField JB = curl_face_to_edge(g, B);
  const EdgeField JH = curl_face_to_edge(g, H);
  const EdgeField JD = curl_face_to_edge(g, BmH);

  // Edge EMF-like field H x U; its face curl enters the third term directly.
  EdgeField HxU = make_edges(g);
  for (int e = 0; e < 3; ++e)
    for_each_index(g.owned(edge_stagger(e)), [&](int i, int j, int k) {
      HxU[e](i, j, k) =
          cross_component(transverse_at_edge(H, e, i, j, k), transverse_at_edge(U, e, i, j, k), e);
    });
  const FaceField curl_HxU = curl_edge_to_face(g, HxU);

  // Edge sums of J . (a x b) with transverse face averages.
  auto edge_term = [&](const EdgeField& J, const FaceField& a, const FaceField& b) {
    double s = 0.0;
    for (int e = 0; e < 3; ++e) {
      const Stagger st = edge_stagger(e);
      s += g.cell_volume() * sum_over(g.owned(st), [&](int i, int j, int k) {
             return g.node_weight(st, i, j, k) * J[e](i, j, k) *
                    cross_component(transverse_at_edge(a, e, i, j, k),
                                    transverse_at_edge(b, e, i, j, k), e);
           });
    }
    return s;
  };

  // -(curl B x B).U = -curl B . (B x U)
  const double l1 = -edge_term(JB, B, U);
  // (curl H x H).(U - u) = curl H . (H x (U - u))
  const double l2 = edge_term(JH, H, Umu);
  const double l3 = face_inner(g, BmH, curl_HxU);
  const double l4 = edge_term(JH, B, u);
  const double r1 = edge_term(JD, U, BmH);
  const double r2 = edge_term(JH, Umu, BmH);

  // Divergence term: cell sum of the divergence of a face field built from
  // cell-centred (B - H) x (H x U); telescopes to the boundary flux.
  Array3 wx = make_array(g, kCellStagger), wy = wx, wz = wx;
  for_each_index(g.cells(), [&](int i, int j, int k) {
    Vec3 bh, h, uu;
    for (int d = 0; d < 3; ++d) {
      bh[d] = face_to_cell(BmH, d, i, j, k);
      h[d] = face_to_cell(H, d, i, j, k);
      uu[d] = face_to_cell(U, d, i, j, k);
    }
    const Vec3 w = cross(bh, cross(h, uu));
    wx(i, j, k) = w.x;
    wy(i, j, k) = w.y;
    wz(i, j, k) = w.z;
  });
  FaceField flux = make_faces(g);
  const Array3* wc[3] = {&wx, &wy, &wz};
  for (int d = 0; d < 3; ++d) {
    Box inner = g.owned(face_stagger(d));
    if (g.wall(d)) {
      inner.lo[d] = 1;
      inner.hi[d] = g.n[d];
    }
    for_each_index(inner, [&](int i, int j, int k) { flux[d](i, j, k) = cell_to_face(*wc[d], d, i, j, k); });
  }
  const Array3 div_flux = divergence(g, flux);
  const double r3 = g.cell_volume() * sum_over(g.cells(), [&](int i, int j, int k) { return div_flux(i, j, k); });

  IdentityTerms t;
  t.lhs = l1 + l2 + l3 + l4;
  t.rhs = r1 + r2 + r3;
  t.scale = std::abs(l1) + std::abs(l2) + std::abs(l3) + std::abs(l4) + std::abs(r1) +
            std::abs(r2) + std::abs(r3);
  return t;
}

SbpReport sbp_residuals(const BoxGrid& g, const SbpFields& f) {
  constexpr double tiny = 1e-300;
  SbpReport r;
  r.trials = 1;
  {
    const double a = cell_inner(g, divergence(g, f.v), f.phi);
    const double b = face_inner(g, f.v, gradient(g, f.phi));
    r.div_grad = std::abs(a + b) / std::max(std::abs(a) + std::abs(b), tiny);
  }
  {
    const double a = edge_inner(g, curl_face_to_edge(g, f.v), f.w);
    const FaceField cw = curl_edge_to_face(g, f.w);
    const double b = face_inner(g, f.v, cw);
    r.curl_pair = std::abs(a - b) / std::max(std::abs(a) + std::abs(b), tiny);
    const Array3 dc = divergence(g, cw);
    r.div_curl = max_abs_cells(g, dc) * g.h_min() / std::max(max_abs_faces(g, cw), tiny);
  }
  {
    const IdentityTerms t = induction_identity(g, f.u, f.U, f.B, f.H);
    r.vector_identity = std::abs(t.lhs - t.rhs) / std::max(t.scale, tiny);
    const IdentityTerms c = induction_identity(g, f.u, f.u, f.B, f.B);
    r.vector_identity_coinciding = std::abs(c.lhs - c.rhs) / std::max(c.scale, tiny);
  }
  return r;
}

SbpReport sbp_report(const BoxGrid& g, int trials, std::uint64_t seed) {
  SbpReport worst;
  for (int t = 0; t < trials; ++t) {
    const SbpReport r = sbp_residuals(g, random_compact_fields(g, seed + static_cast<std::uint64_t>(t)));
    worst.div_grad = std::max(worst.div_grad, r.div_grad);
    worst.curl_pair = std::max(worst.curl_pair, r.curl_pair);
    worst.div_curl = std::max(worst.div_curl, r.div_curl);
    worst.vector_identity = std::max(worst.vector_identity, r.vector_identity);
    worst.vector_identity_coinciding = std::max(worst.vector_identity_coinciding, r.vector_identity_coinciding);
  }
  worst.trials = trials;
  return worst;
}

}  // namespace mhd
