#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "mhd/errors.hpp"
#include "mhd/thermo.hpp"
#include "mhd/transport.hpp"
#include "mhd/verification.hpp"
#include "support.hpp"

using namespace mhd;
using namespace mhd::testing;

namespace {

// Sixth-order central difference of a scalar function of one variable.
template <class F>
double d1(F&& f, double x, double h) {
  return (-f(x - 3 * h) + 9 * f(x - 2 * h) - 45 * f(x - h) + 45 * f(x + h) - 9 * f(x + 2 * h) + f(x + 3 * h)) /
         (60 * h);
}

constexpr double kStep = 4e-3;

// d/dx_a of g(t, x).
template <class G>
double dx(G&& g, int a, double t, const Vec3& x) {
  return d1([&](double s) {
    Vec3 y = x;
    y[a] = s;
    return g(t, y);
  }, x[a], kStep);
}

template <class G>
double dt(G&& g, double t, const Vec3& x) {
  return d1([&](double s) { return g(s, x); }, t, kStep);
}

/// Residuals of the forced unregularized system, one per equation, evaluated
/// from the reference fields by finite differences only.
struct Strong {
  double mass = 0.0, mass_scale = 0.0;
  double momentum = 0.0, momentum_scale = 0.0;
  double induction = 0.0, induction_scale = 0.0;
  double energy = 0.0, energy_scale = 0.0;
};

Strong strong_residual(const ReferenceSolution& ref, const ForcingSet& f, const PhysicsModel& m, double t,
                       const Vec3& x) {
  const auto& gas = m.gas;
  const auto& tr = m.transport;
  auto r = [&](double s, const Vec3& y) { return ref.r(s, y); };
  auto grad_u = [&](double s, const Vec3& y) {
    Mat3 G;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) G.m[i][j] = dx([&](double q, const Vec3& z) { return ref.U(q, z)[i]; }, j, s, y);
    return G;
  };
  auto stress = [&](double s, const Vec3& y) { return viscous_stress(tr, ref.Theta(s, y), grad_u(s, y)); };
  auto curl_H = [&](double s, const Vec3& y) {
    auto H = [&](int c) { return [&, c](double q, const Vec3& z) { return ref.H(q, z)[c]; }; };
    return Vec3{dx(H(2), 1, s, y) - dx(H(1), 2, s, y), dx(H(0), 2, s, y) - dx(H(2), 0, s, y),
                dx(H(1), 0, s, y) - dx(H(0), 1, s, y)};
  };
  auto curl = [&](auto&& V, double s, const Vec3& y) {
    auto c = [&](int k) { return [&, k](double q, const Vec3& z) { return V(q, z)[k]; }; };
    return Vec3{dx(c(2), 1, s, y) - dx(c(1), 2, s, y), dx(c(0), 2, s, y) - dx(c(2), 0, s, y),
                dx(c(1), 0, s, y) - dx(c(0), 1, s, y)};
  };

  Strong out;
  const Vec3 H = ref.H(t, x);
  const ThermoPoint tp = eos_eval(gas, ref.r(t, x), ref.Theta(t, x));

  // Mass.
  {
    double div = 0.0;
    for (int j = 0; j < 3; ++j) div += dx([&](double s, const Vec3& y) { return r(s, y) * ref.U(s, y)[j]; }, j, t, x);
    const double time = dt(r, t, x), src = f.mass(t, x);
    out.mass = time + div - src;
    out.mass_scale = std::abs(time) + std::abs(div) + std::abs(src);
  }
  // Momentum.
  {
    const Vec3 J = curl_H(t, x);
    const Vec3 lorentz = cross(J, H);
    const Vec3 src = f.momentum(t, x);
    for (int i = 0; i < 3; ++i) {
      const double time = dt([&](double s, const Vec3& y) { return r(s, y) * ref.U(s, y)[i]; }, t, x);
      double conv = 0.0, div_s = 0.0;
      for (int j = 0; j < 3; ++j) {
        conv += dx([&](double s, const Vec3& y) { return r(s, y) * ref.U(s, y)[i] * ref.U(s, y)[j]; }, j, t, x);
        div_s += dx([&](double s, const Vec3& y) { return stress(s, y).m[i][j]; }, j, t, x);
      }
      const double grad_p =
          dx([&](double s, const Vec3& y) { return eos_eval(gas, ref.r(s, y), ref.Theta(s, y)).p; }, i, t, x);
      const double res = time + conv + grad_p - div_s - lorentz[i] - src[i];
      out.momentum = std::max(out.momentum, std::abs(res));
      out.momentum_scale += std::abs(time) + std::abs(conv) + std::abs(grad_p) + std::abs(div_s) +
                            std::abs(lorentz[i]) + std::abs(src[i]);
    }
  }
  // Induction: dH/dt + curl(H x U) + curl(zeta curl H) = f.
  {
    auto HxU = [&](double s, const Vec3& y) { return cross(ref.H(s, y), ref.U(s, y)); };
    auto zJ = [&](double s, const Vec3& y) { return magnetic_diffusivity(tr, ref.Theta(s, y)) * curl_H(s, y); };
    const Vec3 a = curl(HxU, t, x), b = curl(zJ, t, x), src = f.induction(t, x);
    for (int i = 0; i < 3; ++i) {
      const double time = dt([&](double s, const Vec3& y) { return ref.H(s, y)[i]; }, t, x);
      const double res = time + a[i] + b[i] - src[i];
      out.induction = std::max(out.induction, std::abs(res));
      out.induction_scale += std::abs(time) + std::abs(a[i]) + std::abs(b[i]) + std::abs(src[i]);
    }
  }
  // Internal energy.
  {
    auto re = [&](double s, const Vec3& y) { return r(s, y) * eos_eval(gas, r(s, y), ref.Theta(s, y)).e; };
    const double time = dt(re, t, x);
    double conv = 0.0, div_q = 0.0, div_u = 0.0;
    for (int j = 0; j < 3; ++j) {
      conv += dx([&](double s, const Vec3& y) { return re(s, y) * ref.U(s, y)[j]; }, j, t, x);
      div_u += dx([&](double s, const Vec3& y) { return ref.U(s, y)[j]; }, j, t, x);
      div_q += dx([&](double s, const Vec3& y) {
        Vec3 gT;
        for (int a = 0; a < 3; ++a) gT[a] = dx(ref.Theta, a, s, y);
        return heat_flux(tr, ref.Theta(s, y), gT)[j];
      }, j, t, x);
    }
    const double visc = contract(stress(t, x), grad_u(t, x));
    const Vec3 J = curl_H(t, x);
    const double ohm = magnetic_diffusivity(tr, ref.Theta(t, x)) * dot(J, J);
    const double work = tp.p * div_u, src = f.energy(t, x);
    out.energy = time + conv + div_q + work - visc - ohm - src;
    out.energy_scale = std::abs(time) + std::abs(conv) + std::abs(div_q) + std::abs(work) + std::abs(visc) +
                       std::abs(ohm) + std::abs(src);
  }
  return out;
}

ReferenceParams params(ReferenceFamily f) {
  ReferenceParams p;
  p.family = f;
  p.amplitude = 0.3;
  p.r0 = 1.3;
  p.Theta0 = 0.8;
  p.B0 = 0.5;
  return p;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mhd_verification_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("forced strong residual vanishes at random space-time points") {
  const PhysicsModel m = quiet_model();
  for (auto family : {ReferenceFamily::Equilibrium, ReferenceFamily::CellularFlow, ReferenceFamily::ResistiveDecay}) {
    CAPTURE(to_string(family));
    ReferenceParams p = params(family);
    p.modes = {1, 2};
    p.extents = {1.0, 1.5, 0.7};
    const auto [ref, f] = make_reference(p, m);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Strong worst, scale;
    for (int n = 0; n < 1000; ++n) {
      const double t = u01(rng);
      const Vec3 x{u01(rng) * p.extents[0], u01(rng) * p.extents[1], u01(rng) * p.extents[2]};
      const Strong s = strong_residual(ref, f, m, t, x);
      worst.mass = std::max(worst.mass, std::abs(s.mass));
      worst.momentum = std::max(worst.momentum, s.momentum);
      worst.induction = std::max(worst.induction, s.induction);
      worst.energy = std::max(worst.energy, std::abs(s.energy));
      scale.mass = std::max(scale.mass, s.mass_scale);
      scale.momentum = std::max(scale.momentum, s.momentum_scale);
      scale.induction = std::max(scale.induction, s.induction_scale);
      scale.energy = std::max(scale.energy, s.energy_scale);
    }
    CHECK(worst.mass <= 1e-10 * (1.0 + scale.mass));
    CHECK(worst.momentum <= 1e-10 * (1.0 + scale.momentum));
    CHECK(worst.induction <= 1e-10 * (1.0 + scale.induction));
    CHECK(worst.energy <= 1e-10 * (1.0 + scale.energy));
    if (family != ReferenceFamily::Equilibrium) CHECK(scale.momentum > 1e-2);
  }
}

TEST_CASE("reference families: forcing shapes and traces") {
  const PhysicsModel m = quiet_model();

  SUBCASE("equilibrium forcings are identically zero") {
    const auto [ref, f] = make_reference(params(ReferenceFamily::Equilibrium), m);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int n = 0; n < 100; ++n) {
      const double t = u01(rng);
      const Vec3 x{u01(rng), u01(rng), u01(rng)};
      CHECK(f.mass(t, x) == 0.0);
      CHECK(f.energy(t, x) == 0.0);
      CHECK(norm(f.momentum(t, x)) == 0.0);
      CHECK(norm(f.induction(t, x)) == 0.0);
    }
  }

  SUBCASE("cellular flow is tangential on all six walls") {
    const auto [ref, f] = make_reference(params(ReferenceFamily::CellularFlow), m);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 200; ++n)
      for (int d = 0; d < 3; ++d)
        for (double side : {0.0, 1.0}) {
          Vec3 x{u01(rng), u01(rng), u01(rng)};
          x[d] = side;
          worst = std::max(worst, std::abs(ref.U(0.3, x)[d]));
        }
    CHECK(worst <= 1e-14);
  }

  SUBCASE("resistive decay: no induction source, energy source cancels ohmic heating") {
    const ReferenceParams p = params(ReferenceFamily::ResistiveDecay);
    const auto [ref, f] = make_reference(p, m);
    const double zeta = 0.01 * (1.0 + p.Theta0), k = kPi, t = 0.4;
    const double a = p.amplitude * std::exp(-2.0 * k * k * zeta * t);
    const Vec3 x{0.3, 0.65, 0.2};
    // curl (0, 0, a sin(pi x) sin(pi y)) by hand.
    const double jx = a * k * std::sin(k * x.x) * std::cos(k * x.y);
    const double jy = -a * k * std::cos(k * x.x) * std::sin(k * x.y);
    CHECK(norm(f.induction(t, x)) == 0.0);
    CHECK(f.energy(t, x) == doctest::Approx(-zeta * (jx * jx + jy * jy)).epsilon(1e-13));
    CHECK(norm(ref.U(t, x)) == 0.0);
  }

  SUBCASE("boundary data equal the reference traces") {
    for (auto family : {ReferenceFamily::CellularFlow, ReferenceFamily::ResistiveDecay}) {
      const auto [ref, f] = make_reference(params(family), m);
      for (int d = 0; d < 3; ++d)
        for (double side : {0.0, 1.0}) {
          Vec3 x{0.37, 0.61, 0.23};
          x[d] = side;
          const Vec3 n{d == 0 ? 1.0 : 0.0, d == 1 ? 1.0 : 0.0, d == 2 ? 1.0 : 0.0};
          CHECK(ref.Theta(0.2, x) == ref.boundary.theta_b(0.2, x));
          CHECK(norm(cross(ref.H(0.2, x) - ref.boundary.B_B(0.2, x), n)) <= 1e-15);
        }
    }
  }
}

TEST_CASE("reference parameters are validated") {
  const PhysicsModel m = quiet_model();
  ReferenceParams p = params(ReferenceFamily::CellularFlow);
  p.r0 = 0.0;
  CHECK_THROWS_WITH_AS(make_reference(p, m), "reference.r0: must be positive", ConfigError);
  p = params(ReferenceFamily::CellularFlow);
  p.Theta0 = -1.0;
  CHECK_THROWS_AS(make_reference(p, m), ConfigError);
  p = params(ReferenceFamily::ResistiveDecay);
  p.magnetic_bc = MagneticBC::NormalFluxZeroEMF;
  CHECK_THROWS_AS(make_reference(p, m), ConfigError);
  p = params(ReferenceFamily::Equilibrium);
  p.magnetic_bc = MagneticBC::NormalFluxZeroEMF;
  CHECK_NOTHROW(make_reference(p, m));
  CHECK(parse_family("B") == ReferenceFamily::CellularFlow);
  CHECK(parse_family("resistive_decay") == ReferenceFamily::ResistiveDecay);
  CHECK_THROWS_AS(parse_family("D"), ConfigError);
}

TEST_CASE("sampled reference state") {
  const PhysicsModel m = quiet_model();
  const ReferenceParams p = params(ReferenceFamily::CellularFlow);
  const auto [ref, f] = make_reference(p, m);
  const BoxGrid g = reference_grid(p, {8, 8, 8});
  const FieldState s = sample_state(ref, g, 0.0);
  CHECK(max_abs_cells(g, divergence(g, s.u)) <= 1e-13);
  CHECK(max_abs_cells(g, divergence(g, s.B)) <= 1e-13);
  CHECK(relative_energy(s, sample_reference(ref, g, 0.0), m.gas) == 0.0);
  // Sampled velocity approximates U at second order.
  auto error = [&](int n) {
    const BoxGrid gg = reference_grid(p, {n, n, n});
    const FieldState ss = sample_state(ref, gg, 0.0);
    double e = 0.0;
    for (int d = 0; d < 2; ++d)
      visit(gg.owned(face_stagger(d)), [&](int i, int j, int k) {
        e = std::max(e, std::abs(ss.u[d](i, j, k) - ref.U(0.0, gg.position(face_stagger(d), i, j, k))[d]));
      });
    return e;
  };
  CHECK(error(16) < error(8) / 3.5);
}

TEST_CASE("random state is deterministic and solenoidal") {
  const BoxGrid g = make_grid({8, 8, 8});
  const FieldState a = random_state(g, 42, 0.2), b = random_state(g, 42, 0.2), c = random_state(g, 43, 0.2);
  CHECK(std::equal(a.rho.values().begin(), a.rho.values().end(), b.rho.values().begin()));
  CHECK(std::equal(a.B[1].values().begin(), a.B[1].values().end(), b.B[1].values().begin()));
  CHECK_FALSE(std::equal(a.rho.values().begin(), a.rho.values().end(), c.rho.values().begin()));
  CHECK(max_abs_cells(g, divergence(g, a.B)) <= 1e-12 * max_abs_faces(g, a.B) / g.h_min());
  CHECK(min_over(g.cells(), [&](int i, int j, int k) { return a.rho(i, j, k); }) > 0.7);
}

TEST_CASE("weak-strong experiment") {
  const PhysicsModel m = quiet_model();
  const StepControl control;

  SUBCASE("equilibrium stays at zero relative energy") {
    const std::vector<int> res{8};
    const auto report = weak_strong_experiment(params(ReferenceFamily::Equilibrium), m, control, res, 0.05);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].e_rel_max <= 1e-12);
    CHECK(report.rows[0].steps > 0);
    CHECK(report.pass);
  }

  SUBCASE("cellular flow converges and the report round-trips") {
    ReferenceParams p = params(ReferenceFamily::CellularFlow);
    p.r0 = 1.0;
    p.Theta0 = 1.0;
    const std::vector<int> res{8, 16};
    const auto report = weak_strong_experiment(p, m, control, res, 0.05);
    REQUIRE(report.rows.size() == 2);
    for (const auto& r : report.rows) {
      CHECK(r.e_rel_initial == 0.0);
      CHECK(r.e_rel_max > 0.0);
      CHECK(r.sigma_min >= 0.0);
      CHECK(r.series.size() == static_cast<std::size_t>(r.steps) + 1);
    }
    CHECK(report.rows[1].e_rel_max < report.rows[0].e_rel_max / 2.0);
    CHECK(report.fitted_order >= 1.0);
    CHECK(report.pass);

    const auto dir = scratch_dir("ws");
    write_weak_strong_report((dir / "report.json").string(), (dir / "e_rel.csv").string(), report);
    std::ifstream in(dir / "report.json");
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc.at("experiment") == "weak_strong");
    CHECK(doc.at("reference").at("family") == "B");
    CHECK(doc.at("rows").size() == 2);
    CHECK(doc.at("rows")[1].at("e_rel_max").get<double>() == report.rows[1].e_rel_max);
    CHECK(doc.at("pass").get<bool>());
    std::ifstream csv(dir / "e_rel.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "n,t,e_rel");
    std::size_t lines = 0;
    for (std::string line; std::getline(csv, line);) ++lines;
    CHECK(lines == report.rows[0].series.size() + report.rows[1].series.size());
  }

  SUBCASE("invalid horizon") {
    const std::vector<int> res{8};
    CHECK_THROWS_AS(weak_strong_experiment(params(ReferenceFamily::Equilibrium), m, control, res, 0.0), ConfigError);
  }
}

TEST_CASE("monotone within the noise floor") {
  const std::vector<double> down{3.0, 2.0, 1.0}, flat_noisy{1.0, 1.05, 0.98}, up{1.0, 2.0, 3.0}, zeros{0.0, 0.0, 0.0};
  CHECK(decreasing_within_noise(down));
  CHECK(decreasing_within_noise(flat_noisy));
  CHECK_FALSE(decreasing_within_noise(up));
  CHECK(decreasing_within_noise(zeros));
  const std::vector<double> roundoff{-4e-16, 5e-16, -1e-16};
  CHECK_FALSE(decreasing_within_noise(roundoff));
  CHECK(decreasing_within_noise(roundoff, 1e-12));
}

TEST_CASE("regularization limit study") {
  const PhysicsModel m = quiet_model();
  const StepControl control;

  SUBCASE("schedule must be positive and strictly decreasing") {
    const std::vector<std::pair<double, double>> bad{{1e-3, 1e-3}, {1e-2, 1e-2}};
    CHECK_THROWS_AS(regularization_limit_study(params(ReferenceFamily::Equilibrium), m, control, 8, bad, 0.01),
                    ConfigError);
    const std::vector<std::pair<double, double>> zero{{0.0, 1e-3}};
    CHECK_THROWS_AS(regularization_limit_study(params(ReferenceFamily::Equilibrium), m, control, 8, zero, 0.01),
                    ConfigError);
  }

  SUBCASE("equilibrium data give zero diagnostics across the schedule") {
    ReferenceParams p = params(ReferenceFamily::Equilibrium);
    p.r0 = 1.0;
    p.Theta0 = 1.0;  // the eps and delta energy sources cancel at theta = 1 when eps = delta
    const std::vector<std::pair<double, double>> schedule{{1e-2, 1e-2}, {1e-3, 1e-3}};
    const auto report = regularization_limit_study(p, m, control, 8, schedule, 0.02);
    CHECK(report.baseline.distance == 0.0);
    REQUIRE(report.entries.size() == 2);
    for (const auto& e : report.entries) {
      CHECK(std::abs(e.entropy_residual) <= 1e-12);
      CHECK(e.ballistic_positive <= 1e-12);
      CHECK(std::abs(e.distance) <= 1e-13);
    }
    CHECK(report.pass);
    const auto dir = scratch_dir("limit");
    write_limit_report((dir / "limit.json").string(), report);
    std::ifstream in(dir / "limit.json");
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc.at("entries").size() == 2);
    CHECK(doc.at("baseline").at("distance").get<double>() == 0.0);
  }
}

TEST_CASE("linear waves at moderate resolution") {
  const GasModel gas;
  const WaveResult a = acoustic_wave_experiment(gas, 32);
  CHECK(a.crossings >= 4);
  CHECK(a.predicted_speed == doctest::Approx(std::sqrt(10.0 / 3.0)).epsilon(1e-2));
  CHECK(a.relative_error() < 0.05);
  const WaveResult b = alfven_wave_experiment(gas, 32);
  CHECK(b.crossings >= 4);
  CHECK(b.relative_error() < 0.05);
}

TEST_CASE("conservation runs") {
  const DriftResult d = energy_drift_experiment(8, 10, 1);
  CHECK(d.initial_energy > 0.0);
  CHECK(d.relative_drift() < 1e-2);
  const SolenoidalResult s = solenoidality_experiment(8, 20, 2);
  CHECK(s.B_max > 0.0);
  CHECK(s.relative() <= 1e-12);
}
