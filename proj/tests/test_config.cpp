#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mhd/config.hpp"

using namespace mhd;

namespace {

std::vector<std::string> violations_of(const std::string& text, const Overrides& o = {}) {
  try {
    parse_config_text(text, o);
  } catch (const ConfigValidationError& e) {
    return e.violations();
  }
  return {};
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_CASE("config: empty file gives the documented defaults") {
  const RunConfig c = parse_config_text("");
  CHECK(c.grid.n == Index3{16, 16, 16});
  CHECK(c.grid.extents == std::array<double, 3>{1.0, 1.0, 1.0});
  CHECK(c.grid.periodic == std::array<bool, 3>{false, false, false});
  CHECK(c.model.gas.c1 == 1.0);
  CHECK(c.model.gas.p_inf == 1.0);
  CHECK(c.model.gas.a == 1e-2);
  CHECK(c.model.transport.mu0 == 1e-2);
  CHECK(c.model.transport.alpha == 0.5);
  CHECK(c.model.transport.beta == 3.0);
  CHECK(c.model.reg.eps == 1e-3);
  CHECK(c.model.reg.delta == 1e-3);
  CHECK(c.model.reg.Gamma == 8.0);
  CHECK(c.theta_b == 1.0);
  CHECK(c.magnetic_bc == MagneticBC::TangentialDirichlet);
  CHECK(c.thermal_bc == ThermalBC::Dirichlet);
  CHECK(c.initial.profile == InitialProfile::Uniform);
  CHECK(c.steps == 100);
  CHECK(c.seed == 1);
  CHECK(c.control.cfl == 0.4);
  CHECK(c.control.integrator == Integrator::SspRk3);
  CHECK(c.output.diagnostics_every == 1);
  CHECK(c.experiment.resolutions == std::vector<int>{16, 32});
  CHECK(c.experiment.reference.family == ReferenceFamily::CellularFlow);
  // beta = 3 is legal but outside the existence regime.
  CHECK(c.warnings == std::vector<std::string>{"transport.beta: outside existence regime (beta > 6)"});
  CHECK(c.effective.at("grid").at("nx") == "16");
}

TEST_CASE("config: values are read from every section") {
  const RunConfig c = parse_config_text(R"(
[grid]
nx = 8
ny = 6
nz = 4
lx = 2.5
periodic_y = true
[gas]
c1 = 0.5
a = 0.02
[transport]
mu0 = 0.1
alpha = 0.75
beta = 7
[regularization]
eps = 0
delta = 0
gamma = 4
gamma_weighted_heating = yes
[boundary]
theta_b = 2
b_b = 0.1 0.2 0.3
gravity = 0 0 -1
magnetic_bc = normal_flux
thermal_bc = insulated
[initial]
profile = random
amplitude = 0.05
u = 1 0 0
[control]
steps = 12
t_end = 0.5
cfl = 0.3
diffusion = lagged_implicit
integrator = heun
seed = 99
[output]
diagnostics_every = 3
checkpoint_every = 4
[experiment]
family = C
modes = 2 1
resolutions = 8 16 32
schedule = 1e-1 1e-2
)");
  CHECK(c.grid.n == Index3{8, 6, 4});
  CHECK(c.grid.extents[0] == 2.5);
  CHECK(c.grid.periodic == std::array<bool, 3>{false, true, false});
  CHECK(c.model.gas.c1 == 0.5);
  CHECK(c.model.gas.a == 0.02);
  CHECK(c.model.transport.mu0 == 0.1);
  CHECK(c.model.transport.alpha == 0.75);
  CHECK(c.model.reg.eps == 0.0);
  CHECK(c.model.reg.Gamma == 4.0);
  CHECK(c.model.reg.gamma_weighted_heating);
  CHECK(c.theta_b == 2.0);
  CHECK(c.B_B.z == 0.3);
  CHECK(c.gravity.z == -1.0);
  CHECK(c.magnetic_bc == MagneticBC::NormalFluxZeroEMF);
  CHECK(c.thermal_bc == ThermalBC::Insulated);
  CHECK(c.initial.profile == InitialProfile::Random);
  CHECK(c.initial.u.x == 1.0);
  CHECK(c.steps == 12);
  CHECK(c.t_end == 0.5);
  CHECK(c.control.diffusion == DiffusionTreatment::LaggedImplicit);
  CHECK(c.control.integrator == Integrator::Heun);
  CHECK(c.seed == 99);
  CHECK(c.output.checkpoint_every == 4);
  CHECK(c.experiment.reference.family == ReferenceFamily::ResistiveDecay);
  CHECK(c.experiment.reference.modes == std::array<int, 2>{2, 1});
  CHECK(c.experiment.reference.Theta0 == 2.0);
  CHECK(c.experiment.reference.extents[0] == 2.5);
  CHECK(c.experiment.resolutions == std::vector<int>{8, 16, 32});
  CHECK(c.experiment.schedule == std::vector<double>{1e-1, 1e-2});
  CHECK(c.warnings.empty());

  const BoundarySpec bc = c.boundary();
  CHECK(bc.magnetic_bc == MagneticBC::NormalFluxZeroEMF);
  CHECK(bc.thermal_bc == ThermalBC::Insulated);
  CHECK(bc.theta_b(0.0, {0.3, 0.3, 0.3}) == 2.0);
  CHECK(bc.B_B(0.0, {0.3, 0.3, 0.3}).y == 0.2);
}

TEST_CASE("config: negative boundary temperature is a single violation") {
  CHECK(violations_of("[boundary]\ntheta_b = -1\n") ==
        std::vector<std::string>{"boundary.theta_b: must be positive"});
}

TEST_CASE("config: beta between 3 and 6 warns but parses") {
  const RunConfig c = parse_config_text("[transport]\nbeta = 4\n");
  CHECK(c.model.transport.beta == 4.0);
  CHECK(c.warnings == std::vector<std::string>{"transport.beta: outside existence regime (beta > 6)"});
  CHECK(parse_config_text("[transport]\nbeta = 6.5\n").warnings.empty());
}

TEST_CASE("config: every violation is reported at once") {
  const auto v = violations_of(R"(
[grid]
nx = 2
ly = 0
[transport]
alpha = 0.4
beta = 2
mu0 = -1
[regularization]
gamma = 2
eps = -0.1
[boundary]
theta_b = 0
magnetic_bc = perfect
[control]
steps = many
[mystery]
x = 1
[output]
colour = red
)");
  CHECK(contains(v, "grid.nx: must be at least 4"));
  CHECK(contains(v, "grid.ly: must be positive"));
  CHECK(contains(v, "transport.alpha: must lie in [1/2, 1]"));
  CHECK(contains(v, "transport.beta: must be at least 3"));
  CHECK(contains(v, "transport.mu0: must be nonnegative"));
  CHECK(contains(v, "regularization.gamma: must exceed 2"));
  CHECK(contains(v, "regularization.eps: must be nonnegative"));
  CHECK(contains(v, "boundary.theta_b: must be positive"));
  CHECK(contains(v, "control.steps: expected a number, got 'many'"));
  CHECK(contains(v, "mystery: unknown section"));
  CHECK(contains(v, "output.colour: unknown key"));
  CHECK(std::any_of(v.begin(), v.end(), [](const std::string& s) { return s.rfind("boundary.magnetic_bc:", 0) == 0; }));
  CHECK(v.size() == 12);
}

TEST_CASE("config: the background field must be solenoidal") {
  const auto bad = violations_of("[boundary]\nb_b_gradient = 1 0 0  0 0 0  0 0 0\n");
  REQUIRE(bad.size() == 1);
  CHECK(bad[0].rfind("boundary.b_b_gradient: background field must be solenoidal", 0) == 0);

  // Trace-free gradients are divergence-free.
  const RunConfig c = parse_config_text("[boundary]\nb_b = 0 0 1\nb_b_gradient = 1 0 0  0 -1 0  0 0 0\n");
  const Vec3 b = c.boundary().B_B(0.0, {0.5, 0.25, 0.0});
  CHECK(b.x == doctest::Approx(0.5));
  CHECK(b.y == doctest::Approx(-0.25));
  CHECK(b.z == 1.0);
  CHECK(background_divergence(c.grid, c.boundary(), 0.0) <= 1e-12);
}

TEST_CASE("config: malformed input") {
  CHECK(violations_of("[grid\nnx = 4\n").size() == 1);
  const auto dup = violations_of("[grid]\nnx = 4\nnx = 8\n");
  REQUIRE(dup.size() == 1);
  CHECK(dup[0].find("duplicate") != std::string::npos);
  CHECK(contains(violations_of("[grid]\nnx = 4\n[GRID]\nNX = 8\n"), "grid.nx: duplicate key"));
  CHECK(contains(violations_of("[boundary]\nb_b = 1 2\n"), "boundary.b_b: expected 3 components"));
  CHECK(contains(violations_of("[experiment]\nschedule = 1e-3 1e-2\n"),
                 "experiment.schedule: must be positive and strictly decreasing"));
  CHECK(contains(violations_of("[experiment]\nfamily = D\n"), "experiment.family: expected A, B or C, got 'D'"));
  CHECK(contains(violations_of("[initial]\nprofile = checkpoint\n"),
                 "initial.checkpoint: required when profile = checkpoint"));
  CHECK(contains(violations_of("[grid]\nperiodic_x = maybe\n"), "grid.periodic_x: expected true or false, got 'maybe'"));
}

TEST_CASE("config: section and key names are case-insensitive") {
  const RunConfig c = parse_config_text("[Grid]\nNX = 8\n[TRANSPORT]\nBeta = 7\n");
  CHECK(c.grid.n[0] == 8);
  CHECK(c.model.transport.beta == 7.0);
}

TEST_CASE("config: overrides replace file values and are validated") {
  const RunConfig c = parse_config_text("[grid]\nnx = 8\n", {{"grid.nx", "12"}, {"control.seed", "5"}});
  CHECK(c.grid.n[0] == 12);
  CHECK(c.seed == 5);
  CHECK(violations_of("", {{"boundary.theta_b", "-2"}}) == std::vector<std::string>{"boundary.theta_b: must be positive"});
  CHECK(contains(violations_of("", {{"nosection", "1"}}), "nosection: override needs SECTION__KEY"));
}

TEST_CASE("config: environment overrides") {
  ::setenv("MHD__Transport__BETA", "8", 1);
  ::setenv("MHD__GRID__NY", "10", 1);
  const Overrides o = environment_overrides();
  ::unsetenv("MHD__Transport__BETA");
  ::unsetenv("MHD__GRID__NY");
  CHECK(o.at("transport.beta") == "8");
  CHECK(o.at("grid.ny") == "10");
  const RunConfig c = parse_config_text("", o);
  CHECK(c.model.transport.beta == 8.0);
  CHECK(c.grid.n[1] == 10);
  CHECK(environment_overrides().count("grid.ny") == 0);
}

TEST_CASE("config: files") {
  const auto dir = std::filesystem::temp_directory_path() / "mhd_config_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "run.ini").string();
  {
    std::ofstream out(path);
    out << "; comment\n[grid]\nnx = 8\n";
  }
  CHECK(parse_config(path, {}).grid.n[0] == 8);
  CHECK_THROWS_AS(parse_config((dir / "missing.ini").string(), {}), IoError);
  std::filesystem::remove_all(dir);
}
