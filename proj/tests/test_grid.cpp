#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "mhd/discrete_ops.hpp"
#include "mhd/errors.hpp"
#include "mhd/grid.hpp"

using namespace mhd;

namespace {
BoxGrid grid8() {
  BoxGrid g;
  g.n = {8, 8, 8};
  return g;
}

FaceField random_solenoidal(const BoxGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  EdgeField a = make_edges(g);
  for (int e = 0; e < 3; ++e) {
    for (double& v : a[e].values()) v = uni(rng);
    fill_ghosts(g, a[e], edge_stagger(e), {Reflect::Even, Reflect::Even, Reflect::Even});
  }
  return curl_edge_to_face(g, a);
}

FaceField gradient_of_random(const BoxGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Array3 phi = make_array(g, kCellStagger);
  const Box c = g.cells();
  for (int k = 0; k < c.hi[2]; ++k)
    for (int j = 0; j < c.hi[1]; ++j)
      for (int i = 0; i < c.hi[0]; ++i) phi(i, j, k) = uni(rng);
  fill_ghosts(g, phi, kCellStagger, {Reflect::Odd, Reflect::Odd, Reflect::Odd});
  return gradient(g, phi);
}

double max_diff(const BoxGrid& g, const FaceField& a, const FaceField& b) {
  double m = 0.0;
  for (int d = 0; d < 3; ++d) {
    const Box o = g.owned(face_stagger(d));
    for (int k = o.lo[2]; k < o.hi[2]; ++k)
      for (int j = o.lo[1]; j < o.hi[1]; ++j)
        for (int i = o.lo[0]; i < o.hi[0]; ++i) m = std::max(m, std::abs(a[d](i, j, k) - b[d](i, j, k)));
  }
  return m;
}
}  // namespace

TEST_CASE("grid validation") {
  BoxGrid g;
  g.n = {3, 8, 8};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.n = {8, 8, 8};
  g.extents = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.extents = {2.0, 1.0, 0.5};
  CHECK_NOTHROW(g.validate());
  CHECK(g.h(0) == 0.25);
  const Vec3 x = g.position(face_stagger(0), 0, 0, 0);
  CHECK(x.x == 0.0);
  CHECK(x.y == 0.0625);
  CHECK(g.node_weight(edge_stagger(2), 0, 8, 3) == 0.25);
}

TEST_CASE("compatible uniform data is a boundary fixed point") {
  const BoxGrid g = grid8();
  const BoundarySpec bc = BoundarySpec::uniform(1.5, {0.2, -0.1, 0.3}, {});
  FieldState s(g);
  s.theta.fill(1.5);
  s.rho.fill(2.0);
  for (int d = 0; d < 3; ++d) s.B[d].fill(bc.B_B(0, {})[d]);
  apply_boundaries(s, bc, 0.0);
  for (double v : s.theta.values()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));
  for (double v : s.rho.values()) CHECK(v == 2.0);
  for (int d = 0; d < 3; ++d)
    for (double v : s.B[d].values()) CHECK(v == doctest::Approx(bc.B_B(0, {})[d]).epsilon(1e-15));
}

TEST_CASE("ghost rules") {
  const BoxGrid g = grid8();
  BoundarySpec bc = BoundarySpec::uniform(2.0, {0.0, 0.0, 0.7}, {});
  FieldState s(g);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  for (double& v : s.rho.values()) v = uni(rng);
  for (int d = 0; d < 3; ++d) {
    for (double& v : s.u[d].values()) v = uni(rng);
    for (double& v : s.B[d].values()) v = uni(rng);
  }
  s.theta.fill(1.0);
  apply_boundaries(s, bc, 0.0);
  CHECK(s.theta(-1, 3, 3) == doctest::Approx(3.0));
  CHECK(s.theta(8, 3, 3) == doctest::Approx(3.0));
  CHECK(s.rho(-1, 2, 5) == s.rho(0, 2, 5));
  CHECK(s.rho(-2, 2, 5) == s.rho(1, 2, 5));
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j) {
      CHECK(s.u[0](0, j, k) == 0.0);
      CHECK(s.u[0](8, j, k) == 0.0);
      CHECK(s.u[1](j, 0, k) == 0.0);
      CHECK(s.u[2](j, k, 8) == 0.0);
      // tangential velocity mirrored
      CHECK(s.u[1](-1, j, k) == s.u[1](0, j, k));
      // tangential B reflected about B_B: wall average equals B_B
      CHECK(0.5 * (s.B[2](-1, j, k) + s.B[2](0, j, k)) == doctest::Approx(0.7).epsilon(1e-14));
      CHECK(0.5 * (s.B[0](j, k, 7) + s.B[0](j, k, 8)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    }
  // idempotent
  FieldState t = s;
  apply_boundaries(t, bc, 0.0);
  for (std::size_t n = 0; n < s.theta.values().size(); ++n) CHECK(t.theta.values()[n] == s.theta.values()[n]);
  for (int d = 0; d < 3; ++d)
    for (std::size_t n = 0; n < s.B[d].values().size(); ++n) CHECK(t.B[d].values()[n] == s.B[d].values()[n]);

  // normal-flux variant mirrors tangential B
  bc.magnetic_bc = MagneticBC::NormalFluxZeroEMF;
  apply_boundaries(s, bc, 0.0);
  CHECK(s.B[2](-1, 4, 4) == s.B[2](0, 4, 4));

  bc.theta_b = [](double, const Vec3&) { return -1.0; };
  CHECK_THROWS_AS(apply_boundaries(s, bc, 0.0), ConfigError);
}

TEST_CASE("periodic axes wrap") {
  BoxGrid g = grid8();
  g.periodic = {false, true, true};
  FieldState s(g);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 8; ++i) s.u[1](i, j, k) = 100 * i + 10 * (j % 8) + k + 1;
  const BoundarySpec bc = BoundarySpec::uniform(1.0, {}, {});
  apply_boundaries(s, bc, 0.0);
  CHECK(s.u[1](3, -1, 2) == s.u[1](3, 7, 2));
  CHECK(s.u[1](3, 8, 2) == s.u[1](3, 0, 2));
  CHECK(s.u[1](3, 9, 2) == s.u[1](3, 1, 2));
  CHECK(s.u[1](3, 2, -2) == s.u[1](3, 2, 6));
}

TEST_CASE("boundary data validation") {
  const BoxGrid g = grid8();
  BoundarySpec bc = BoundarySpec::uniform(1.0, {1, 2, 3}, {});
  CHECK_NOTHROW(validate_boundary(g, bc, 0.0));
  bc.theta_b = [](double, const Vec3& x) { return x.x - 0.5; };
  CHECK_THROWS_WITH_AS(validate_boundary(g, bc, 0.0), doctest::Contains("theta_b: must be positive"), ConfigError);
  bc = BoundarySpec::uniform(1.0, {}, {});
  bc.B_B = [](double, const Vec3& x) { return Vec3{x.x, 0.0, 0.0}; };
  CHECK_THROWS_WITH_AS(validate_boundary(g, bc, 0.0), doctest::Contains("not solenoidal"), ConfigError);
  bc.B_B = [](double, const Vec3& x) { return Vec3{std::sin(x.y), std::cos(x.z), x.x * x.x}; };
  CHECK(background_divergence(g, bc, 0.0) <= 1e-10);
}

TEST_CASE("divergence cleaning") {
  for (const auto& periodic : {std::array<bool, 3>{false, false, false}, std::array<bool, 3>{true, true, true},
                               std::array<bool, 3>{false, true, true}}) {
    BoxGrid g = grid8();
    g.periodic = periodic;
    const FaceField sol = random_solenoidal(g, 17);
    const FaceField grad = gradient_of_random(g, 23);
    const double ns = max_abs_faces(g, sol), ng = max_abs_faces(g, grad);

    CHECK(max_diff(g, initial_divergence_cleaning(g, sol), sol) <= 1e-12 * ns);

    const FaceField only_grad = initial_divergence_cleaning(g, grad);
    CHECK(max_abs_faces(g, only_grad) <= 1e-10 * ng);

    FaceField mixed = sol;
    for (int d = 0; d < 3; ++d)
      for (std::size_t n = 0; n < mixed[d].values().size(); ++n) mixed[d].values()[n] += grad[d].values()[n];
    const FaceField cleaned = initial_divergence_cleaning(g, mixed);
    CHECK(max_diff(g, cleaned, sol) <= 1e-10 * (ns + ng));
    CHECK(max_abs_cells(g, divergence(g, cleaned)) * g.h_min() <= 1e-12 * max_abs_faces(g, cleaned));
  }
}

TEST_CASE("checkpoint round trip") {
  BoxGrid g;
  g.n = {5, 4, 6};
  g.extents = {1.0, 0.5, 2.0};
  FieldState s(g);
  s.t = 0.125;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uni(0.1, 1.0);
  for (double& v : s.rho.values()) v = uni(rng);
  for (double& v : s.theta.values()) v = uni(rng);
  for (int d = 0; d < 3; ++d) {
    for (double& v : s.u[d].values()) v = uni(rng);
    for (double& v : s.B[d].values()) v = uni(rng);
  }
  const auto path = (std::filesystem::temp_directory_path() / "mhd_ckpt_test.bin").string();
  write_checkpoint(path, s);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 12 + 24 + 8 + 8 * (2 * 120 + 2 * (144 + 150 + 140)));
  const FieldState r = read_checkpoint(path, g.periodic);
  CHECK(r.t == s.t);
  CHECK(r.grid.n == g.n);
  CHECK(r.grid.extents == g.extents);
  CHECK(r.rho(4, 3, 5) == s.rho(4, 3, 5));
  CHECK(r.theta(0, 0, 0) == s.theta(0, 0, 0));
  CHECK(r.B[0](5, 3, 5) == s.B[0](5, 3, 5));
  CHECK(r.u[2](4, 3, 6) == s.u[2](4, 3, 6));
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_checkpoint(path, g.periodic), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_checkpoint(path, g.periodic), IoError);
}
