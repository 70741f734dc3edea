#include <doctest.h>

#include <cmath>
#include <random>

#include "mhd/discrete_ops.hpp"
#include "mhd/parallel.hpp"

using namespace mhd;

namespace {
template <class F>
FaceField sample_faces(const BoxGrid& g, F&& f) {
  FaceField v = make_faces(g);
  for (int d = 0; d < 3; ++d) {
    const Stagger s = face_stagger(d);
    const Box b = v[d].box();
    for (int k = b.lo[2]; k < b.hi[2]; ++k)
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) v[d](i, j, k) = f(g.position(s, i, j, k))[d];
  }
  return v;
}

BoxGrid grid(int n) {
  BoxGrid g;
  g.n = {n, n, n};
  g.extents = {1.0, 1.3, 0.8};
  return g;
}

bool bitwise_equal(const Array3& a, const Array3& b) {
  const auto x = a.values(), y = b.values();
  for (std::size_t n = 0; n < x.size(); ++n)
    if (x[n] != y[n]) return false;
  return true;
}
}  // namespace

TEST_CASE("divergence of constant and linear fields") {
  const BoxGrid g = grid(8);
  const Array3 d0 = divergence(g, sample_faces(g, [](const Vec3&) { return Vec3{1, -2, 3}; }));
  CHECK(max_abs_cells(g, d0) <= 1e-12);
  const Array3 d1 = divergence(g, sample_faces(g, [](const Vec3& x) { return x; }));
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) CHECK(d1(i, j, k) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("curl of a rotation") {
  const BoxGrid g = grid(8);
  const EdgeField c = curl_face_to_edge(g, sample_faces(g, [](const Vec3& x) { return Vec3{-x.y, x.x, 0}; }));
  const Box b = g.owned(edge_stagger(2));
  for (int k = b.lo[2]; k < b.hi[2]; ++k)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) {
        CHECK(c[2](i, j, k) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(std::abs(c[0](i, j, k)) <= 1e-12);
      }
}

TEST_CASE("div curl vanishes identically") {
  const BoxGrid g = grid(8);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(-1, 1);
  EdgeField w = make_edges(g);
  for (int e = 0; e < 3; ++e)
    for (double& v : w[e].values()) v = uni(rng);
  const FaceField v = curl_edge_to_face(g, w);
  CHECK(max_abs_cells(g, divergence(g, v)) <= 1e-13 * max_abs_faces(g, v) / g.h_min());
}

TEST_CASE("curl of a sampled gradient is second order") {
  auto err = [](int n) {
    const BoxGrid g = grid(n);
    const auto grad = [](const Vec3& x) {
      // f = sin(2x) cos(y) exp(z / 2)
      return Vec3{2 * std::cos(2 * x.x) * std::cos(x.y) * std::exp(x.z / 2),
                  -std::sin(2 * x.x) * std::sin(x.y) * std::exp(x.z / 2),
                  0.5 * std::sin(2 * x.x) * std::cos(x.y) * std::exp(x.z / 2)};
    };
    const EdgeField c = curl_face_to_edge(g, sample_faces(g, grad));
    double m = 0.0;
    for (int e = 0; e < 3; ++e) m = std::max(m, max_abs(g.owned(edge_stagger(e)), c[e]));
    return m;
  };
  const double e8 = err(8), e16 = err(16);
  CHECK(e8 < 0.2);
  CHECK(e8 / e16 > 3.5);
}

TEST_CASE("laplacian of a quadratic") {
  const BoxGrid g = grid(8);
  Array3 phi = make_array(g, kCellStagger);
  const Box b = phi.box();
  for (int k = b.lo[2]; k < b.hi[2]; ++k)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) {
        const Vec3 x = g.position(kCellStagger, i, j, k);
        phi(i, j, k) = x.x * x.x + 2 * x.y * x.y - x.z * x.z;
      }
  const Array3 l = laplacian(g, phi);
  for (int k = 0; k < 8; ++k)
    for (int i = 0; i < 8; ++i) CHECK(l(i, 3, k) == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("summation by parts and the induction identity") {
  for (auto periodic : {std::array<bool, 3>{false, false, false}, std::array<bool, 3>{false, true, true}}) {
    BoxGrid g = grid(8);
    g.periodic = periodic;
    const SbpReport r = sbp_report(g, 5, 99);
    CHECK(r.trials == 5);
    CHECK(r.div_grad <= 1e-12);
    CHECK(r.curl_pair <= 1e-12);
    CHECK(r.div_curl <= 1e-12);
    CHECK(r.vector_identity <= 1e-12);
    CHECK(r.vector_identity_coinciding <= 1e-12);
  }
}

TEST_CASE("summation by parts with single impulses") {
  const BoxGrid g = grid(8);
  SbpFields f = random_compact_fields(g, 1);
  for (auto* a : {&f.phi}) a->fill(0.0);
  for (auto* ff : {&f.v, &f.w, &f.u, &f.U, &f.B, &f.H})
    for (int d = 0; d < 3; ++d) (*ff)[d].fill(0.0);
  f.phi(4, 4, 4) = 1.0;
  f.v[0](4, 4, 4) = 1.0;
  f.v[0](5, 4, 4) = -0.5;
  f.w[2](4, 4, 3) = 1.0;
  f.v[1](4, 4, 3) = 2.0;
  f.B[1](4, 4, 4) = 1.0;
  f.u[0](4, 4, 4) = 1.0;
  f.H[2](4, 3, 4) = 0.5;
  f.U[1](4, 4, 5) = -1.0;
  const SbpReport r = sbp_residuals(g, f);
  CHECK(r.worst() <= 1e-12);
}

TEST_CASE("adjointness including boundary: curl pair under homogeneous tangential data") {
  // With tangential ghosts odd-reflected, the wall-edge values of curl_fe are
  // consistent with a trapezoid rule, which makes curl_ef(curl_fe) symmetric.
  BoxGrid g = grid(6);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(-1, 1);
  auto random_face = [&] {
    FaceField v = make_faces(g);
    for (int d = 0; d < 3; ++d) {
      const Box o = g.owned(face_stagger(d));
      for (int k = o.lo[2]; k < o.hi[2]; ++k)
        for (int j = o.lo[1]; j < o.hi[1]; ++j)
          for (int i = o.lo[0]; i < o.hi[0]; ++i) v[d](i, j, k) = uni(rng);
      fill_ghosts(g, v[d], face_stagger(d),
                  {d == 0 ? Reflect::Even : Reflect::Odd, d == 1 ? Reflect::Even : Reflect::Odd,
                   d == 2 ? Reflect::Even : Reflect::Odd});
    }
    return v;
  };
  const FaceField a = random_face(), b = random_face();
  const double ab = edge_inner(g, curl_face_to_edge(g, a), curl_face_to_edge(g, b));
  const double ba = face_inner(g, a, curl_edge_to_face(g, curl_face_to_edge(g, b)));
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
}

TEST_CASE("parallel operators match the serial reference bitwise") {
  const BoxGrid g = grid(12);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uni(-1, 1);
  FaceField v = make_faces(g);
  EdgeField w = make_edges(g);
  Array3 phi = make_array(g, kCellStagger);
  for (int d = 0; d < 3; ++d) {
    for (double& x : v[d].values()) x = uni(rng);
    for (double& x : w[d].values()) x = uni(rng);
  }
  for (double& x : phi.values()) x = uni(rng);
  const int saved = worker_count();
  for (int workers : {1, 4}) {
    set_worker_count(workers);
    CHECK(bitwise_equal(divergence(g, v), reference::divergence(g, v)));
    CHECK(bitwise_equal(laplacian(g, phi), reference::laplacian(g, phi)));
    const FaceField gp = gradient(g, phi), gr = reference::gradient(g, phi);
    const EdgeField cp = curl_face_to_edge(g, v), cr = reference::curl_face_to_edge(g, v);
    const FaceField ep = curl_edge_to_face(g, w), er = reference::curl_edge_to_face(g, w);
    for (int d = 0; d < 3; ++d) {
      CHECK(bitwise_equal(gp[d], gr[d]));
      CHECK(bitwise_equal(cp[d], cr[d]));
      CHECK(bitwise_equal(ep[d], er[d]));
    }
    const double s1 = face_inner(g, v, v);
    set_worker_count(workers == 1 ? 4 : 1);
    CHECK(face_inner(g, v, v) == s1);
  }
  set_worker_count(saved);
}
