#include "mhd/verification.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "mhd/discrete_ops.hpp"
#include "mhd/errors.hpp"
#include "mhd/parallel.hpp"
#include "mhd/thermo.hpp"
#include "mhd/transport.hpp"

namespace mhd {

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
Array3 sample_on(const BoxGrid& g, const Stagger& st, F&& f) {
  Array3 a = make_array(g, st);
  const Box b = a.box();
  for (int k = b.lo[2]; k < b.hi[2]; ++k)
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) a(i, j, k) = f(g.position(st, i, j, k));
  return a;
}

void check_family_bc(const ReferenceParams& p) {
  if (p.magnetic_bc == MagneticBC::TangentialDirichlet) return;
  // Zero tangential EMF on the walls contradicts a decaying wall-normal field
  // and the flow-induced EMF B0 U on the z walls.
  if (p.family == ReferenceFamily::ResistiveDecay ||
      (p.family == ReferenceFamily::CellularFlow && p.B0 != 0.0))
    throw ConfigError("boundary.magnetic_bc: family " + to_string(p.family) + " requires tangential_dirichlet");
}

void validate(const ReferenceParams& p) {
  if (!(p.r0 > 0.0) || !std::isfinite(p.r0)) throw ConfigError("reference.r0: must be positive");
  if (!(p.Theta0 > 0.0) || !std::isfinite(p.Theta0)) throw ConfigError("reference.Theta0: must be positive");
  if (!(p.amplitude >= 0.0) || !std::isfinite(p.amplitude))
    throw ConfigError("reference.amplitude: must be finite and nonnegative");
  if (!std::isfinite(p.B0)) throw ConfigError("reference.B0: must be finite");
  if (p.modes[0] < 1 || p.modes[1] < 1) throw ConfigError("reference.modes: must be at least 1");
  for (double L : p.extents)
    if (!(L > 0.0) || !std::isfinite(L)) throw ConfigError("reference.extents: must be positive");
  check_family_bc(p);
}

}  // namespace

std::string to_string(ReferenceFamily f) {
  switch (f) {
    case ReferenceFamily::Equilibrium: return "A";
    case ReferenceFamily::CellularFlow: return "B";
    case ReferenceFamily::ResistiveDecay: return "C";
  }
  return "?";
}

ReferenceFamily parse_family(const std::string& name) {
  if (name == "A" || name == "equilibrium") return ReferenceFamily::Equilibrium;
  if (name == "B" || name == "cellular_flow") return ReferenceFamily::CellularFlow;
  if (name == "C" || name == "resistive_decay") return ReferenceFamily::ResistiveDecay;
  throw ConfigError("unknown reference family '" + name + "'");
}

std::pair<ReferenceSolution, ForcingSet> make_reference(const ReferenceParams& p, const PhysicsModel& m) {
  validate(p);
  const double kx = p.modes[0] * kPi / p.extents[0];
  const double ky = p.modes[1] * kPi / p.extents[1];
  const double k2 = kx * kx + ky * ky;
  const double A = p.amplitude, r0 = p.r0, T0 = p.Theta0, B0 = p.B0;

  ReferenceSolution ref;
  ref.params = p;
  ref.r = [r0](double, const Vec3&) { return r0; };
  ref.Theta = [T0](double, const Vec3&) { return T0; };
  ref.boundary = BoundarySpec::uniform(T0, {0.0, 0.0, B0}, {0.0, 0.0, 0.0}, p.magnetic_bc);

  ForcingSet f;
  f.mass = [](double, const Vec3&) { return 0.0; };
  f.induction = [](double, const Vec3&) { return Vec3{}; };
  f.momentum = [](double, const Vec3&) { return Vec3{}; };
  f.energy = [](double, const Vec3&) { return 0.0; };

  switch (p.family) {
    case ReferenceFamily::Equilibrium:
      ref.U = [](double, const Vec3&) { return Vec3{}; };
      ref.stream = [](double, const Vec3&) { return 0.0; };
      ref.H = [B0](double, const Vec3&) { return Vec3{0.0, 0.0, B0}; };
      break;

    case ReferenceFamily::CellularFlow: {
      const double c = A / kPi;
      const double mu = viscosity(m.transport, T0);
      ref.stream = [=](double, const Vec3& x) { return c * std::sin(kx * x.x) * std::sin(ky * x.y); };
      ref.U = [=](double, const Vec3& x) {
        const double sx = std::sin(kx * x.x), cx = std::cos(kx * x.x);
        const double sy = std::sin(ky * x.y), cy = std::cos(ky * x.y);
        return Vec3{c * ky * sx * cy, -c * kx * cx * sy, 0.0};
      };
      ref.H = [B0](double, const Vec3&) { return Vec3{0.0, 0.0, B0}; };
      // Steady, solenoidal, uniform r and Theta: r (U . grad) U - mu Lap U balances
      // the momentum equation and -S : grad U cancels the viscous heating.
      f.momentum = [=](double, const Vec3& x) {
        const double sx = std::sin(kx * x.x), cx = std::cos(kx * x.x);
        const double sy = std::sin(ky * x.y), cy = std::cos(ky * x.y);
        const Vec3 U{c * ky * sx * cy, -c * kx * cx * sy, 0.0};
        const Vec3 conv{c * c * kx * ky * ky * sx * cx, c * c * kx * kx * ky * sy * cy, 0.0};
        return r0 * conv + mu * k2 * U;
      };
      f.energy = [=](double, const Vec3& x) {
        const double sx = std::sin(kx * x.x), cx = std::cos(kx * x.x);
        const double sy = std::sin(ky * x.y), cy = std::cos(ky * x.y);
        const double diag = c * kx * ky * cx * cy;
        const double shear = c * (kx * kx - ky * ky) * sx * sy;
        return -mu * (4.0 * diag * diag + shear * shear);
      };
      break;
    }

    case ReferenceFamily::ResistiveDecay: {
      const double zeta = magnetic_diffusivity(m.transport, T0);
      const double rate = zeta * k2;
      ref.U = [](double, const Vec3&) { return Vec3{}; };
      ref.stream = [](double, const Vec3&) { return 0.0; };
      ref.H = [=](double t, const Vec3& x) {
        return Vec3{0.0, 0.0, B0 + A * std::exp(-rate * t) * std::sin(kx * x.x) * std::sin(ky * x.y)};
      };
      // J = curl H = a (ky sx cy, -kx cx sy, 0); the forcing holds u = 0
      // against J x H and replaces the ohmic heating.
      f.momentum = [=](double t, const Vec3& x) {
        const double a = A * std::exp(-rate * t);
        const double sx = std::sin(kx * x.x), cx = std::cos(kx * x.x);
        const double sy = std::sin(ky * x.y), cy = std::cos(ky * x.y);
        const Vec3 J{a * ky * sx * cy, -a * kx * cx * sy, 0.0};
        const double Hz = B0 + a * sx * sy;
        return Vec3{-J.y * Hz, J.x * Hz, 0.0};
      };
      f.energy = [=](double t, const Vec3& x) {
        const double a = A * std::exp(-rate * t);
        const double sx = std::sin(kx * x.x), cx = std::cos(kx * x.x);
        const double sy = std::sin(ky * x.y), cy = std::cos(ky * x.y);
        const double jx = a * ky * sx * cy, jy = -a * kx * cx * sy;
        return -zeta * (jx * jx + jy * jy);
      };
      break;
    }
  }
  return {std::move(ref), std::move(f)};
}

BoxGrid reference_grid(const ReferenceParams& p, Index3 n) {
  BoxGrid g;
  g.extents = p.extents;
  g.n = n;
  g.validate();
  return g;
}

FieldState sample_state(const ReferenceSolution& ref, const BoxGrid& g, double t) {
  FieldState s(g);
  s.t = t;
  s.rho = sample_on(g, kCellStagger, [&](const Vec3& x) { return ref.r(t, x); });
  s.theta = sample_on(g, kCellStagger, [&](const Vec3& x) { return ref.Theta(t, x); });
  for (int d = 0; d < 3; ++d)
    s.B[d] = sample_on(g, face_stagger(d), [&](const Vec3& x) { return ref.H(t, x)[d]; });
  EdgeField psi = make_edges(g);
  psi[2] = sample_on(g, edge_stagger(2), [&](const Vec3& x) { return ref.stream(t, x); });
  s.u = curl_edge_to_face(g, psi);
  apply_boundaries(s, ref.boundary, t);
  return s;
}

ReferenceFields sample_reference(const ReferenceSolution& ref, const BoxGrid& g, double t) {
  FieldState s = sample_state(ref, g, t);
  return {std::move(s.rho), std::move(s.theta), std::move(s.u), std::move(s.B)};
}

FieldState random_state(const BoxGrid& g, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  // Three modes per field with random integer wave vectors (|k_a| <= 2) and phases.
  struct Mode {
    Vec3 k;
    double phase = 0.0, weight = 0.0;
  };
  auto draw = [&] {
    std::array<Mode, 3> modes;
    for (Mode& md : modes) {
      for (int d = 0; d < 3; ++d) {
        const int q = static_cast<int>(std::floor(2.5 * (uni(rng) + 1.0)));  // 0..4
        md.k[d] = 2.0 * kPi * (std::min(q, 4) - 2) / g.extents[static_cast<std::size_t>(d)];
      }
      md.phase = kPi * uni(rng);
      md.weight = uni(rng) / 3.0;
    }
    return modes;
  };
  auto eval = [](const std::array<Mode, 3>& modes, const Vec3& x) {
    double v = 0.0;
    for (const Mode& md : modes) v += md.weight * std::sin(dot(md.k, x) + md.phase);
    return v;
  };
  auto bump = [&](const Vec3& x) {
    double b = 1.0;
    for (int d = 0; d < 3; ++d)
      if (g.wall(d)) b *= std::pow(std::sin(kPi * x[d] / g.extents[static_cast<std::size_t>(d)]), 2);
    return b;
  };

  FieldState s(g);
  const auto rho_modes = draw(), theta_modes = draw();
  s.rho = sample_on(g, kCellStagger, [&](const Vec3& x) { return 1.0 + amplitude * eval(rho_modes, x); });
  s.theta = sample_on(g, kCellStagger, [&](const Vec3& x) { return 1.0 + amplitude * eval(theta_modes, x); });
  for (int d = 0; d < 3; ++d) {
    const auto modes = draw();
    s.u[d] = sample_on(g, face_stagger(d), [&](const Vec3& x) { return amplitude * bump(x) * eval(modes, x); });
  }
  EdgeField a = make_edges(g);
  for (int e = 0; e < 3; ++e) {
    const auto modes = draw();
    a[e] = sample_on(g, edge_stagger(e), [&](const Vec3& x) { return amplitude * eval(modes, x) / (2.0 * kPi); });
  }
  s.B = curl_edge_to_face(g, a);
  return s;
}

// ---------------------------------------------------------------------------
// Weak-strong experiment

namespace {

double fitted_order(const std::vector<WeakStrongRow>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows)
    if (r.e_rel_max > 0.0) pts.emplace_back(std::log(r.h), std::log(r.e_rel_max));
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (auto [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

template <class F>
auto with_context(int n, F&& f) {
  try {
    return f();
  } catch (const StepFailure& e) {
    throw StepFailure(e.invariant(), "resolution " + std::to_string(n) + ": " + e.what());
  }
}

}  // namespace

WeakStrongReport weak_strong_experiment(const ReferenceParams& p, const PhysicsModel& m,
                                        const StepControl& control, std::span<const int> resolutions,
                                        double t_end) {
  if (!(t_end > 0.0)) throw ConfigError("control.t_end: must be positive");
  if (resolutions.empty()) throw ConfigError("resolutions: must not be empty");
  const auto [ref, forcing] = make_reference(p, m);
  if (!forcing.induction_zero) throw ConfigError("reference: induction forcing is not supported by the solver");
  const SourceTerms src = forcing.solver_sources();
  const bool steady = p.family != ReferenceFamily::ResistiveDecay;

  WeakStrongReport report;
  report.params = p;
  report.t_end = t_end;
  for (int n : resolutions) {
    WeakStrongRow row = with_context(n, [&] {
      const BoxGrid g = reference_grid(p, {n, n, n});
      WeakStrongRow r;
      r.n = n;
      r.h = g.h_min();
      FieldState s = sample_state(ref, g, 0.0);
      const Solver solver(m, control, ref.boundary, src);
      EnergyMonitor monitor(m, ref.boundary, src);
      monitor.observe(s);
      r.sigma_min = std::numeric_limits<double>::infinity();
      const ReferenceFields fixed = sample_reference(ref, g, 0.0);
      auto record = [&] {
        const double e = steady ? relative_energy(s, fixed, m.gas)
                                : relative_energy(s, sample_reference(ref, g, s.t), m.gas);
        r.series.push_back({s.t, e});
        r.e_rel_max = std::max(r.e_rel_max, e);
      };
      record();
      r.e_rel_initial = r.series.front().e_rel;
      while (s.t < t_end * (1.0 - 1e-12)) {
        apply_boundaries(s, ref.boundary, s.t);
        const double dt = std::min(stable_dt(s, m, control), t_end - s.t);
        const StepReport step = solver.step_with(s, dt);
        r.sigma_min = std::min(r.sigma_min, step.sigma_min);
        const EnergyReport e = monitor.observe(s);
        r.entropy_production += e.entropy_production_integral;
        record();
        ++r.steps;
      }
      r.e_rel_final = r.series.back().e_rel;
      r.initial_energy = monitor.initial_energy();
      r.ballistic_cumulative = monitor.cumulative_ballistic_residual();
      r.ballistic_positive = monitor.max_positive_ballistic_residual();
      return r;
    });
    report.rows.push_back(std::move(row));
  }

  report.fitted_order = fitted_order(report.rows);
  bool initial_ok = true;
  for (const auto& r : report.rows) initial_ok = initial_ok && r.e_rel_initial <= 1e-14;
  if (p.family == ReferenceFamily::Equilibrium) {
    bool ok = initial_ok;
    for (const auto& r : report.rows) ok = ok && r.e_rel_max <= 1e-12;
    report.pass = ok;
    report.verdict = ok ? "max relative energy <= 1e-12 at every resolution"
                        : "relative energy of the equilibrium exceeds 1e-12";
  } else {
    const bool order_ok = std::isfinite(report.fitted_order) && report.fitted_order >= 1.0;
    report.pass = initial_ok && order_ok;
    if (!initial_ok)
      report.verdict = "initial relative energy is not zero";
    else if (!std::isfinite(report.fitted_order))
      report.verdict = "fitted order undefined (need two resolutions with positive error)";
    else
      report.verdict = "fitted order " + std::to_string(report.fitted_order) + (order_ok ? " >= 1" : " < 1");
  }
  return report;
}

namespace {

using nlohmann::json;

json params_json(const ReferenceParams& p) {
  return {{"family", to_string(p.family)},
          {"amplitude", p.amplitude},
          {"modes", p.modes},
          {"r0", p.r0},
          {"Theta0", p.Theta0},
          {"B0", p.B0},
          {"extents", p.extents},
          {"magnetic_bc", to_string(p.magnetic_bc)}};
}

// NaN has no JSON representation; emit null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace

void write_weak_strong_report(const std::string& json_path, const std::string& csv_path,
                              const WeakStrongReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"n", r.n},
                    {"h", r.h},
                    {"steps", r.steps},
                    {"e_rel_initial", r.e_rel_initial},
                    {"e_rel_max", r.e_rel_max},
                    {"e_rel_final", r.e_rel_final},
                    {"initial_energy", r.initial_energy},
                    {"ballistic_cumulative", r.ballistic_cumulative},
                    {"ballistic_positive", r.ballistic_positive},
                    {"entropy_production", r.entropy_production},
                    {"sigma_min", r.sigma_min}});
  const json doc = {{"experiment", "weak_strong"},
                    {"reference", params_json(report.params)},
                    {"t_end", report.t_end},
                    {"rows", rows},
                    {"fitted_order", number(report.fitted_order)},
                    {"pass", report.pass},
                    {"verdict", report.verdict}};
  write_text(json_path, doc.dump(2) + "\n");

  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot open '" + csv_path + "' for writing");
  csv << "n,t,e_rel\n";
  csv.precision(17);
  for (const auto& r : report.rows)
    for (const auto& smp : r.series) csv << r.n << ',' << smp.t << ',' << smp.e_rel << '\n';
  if (!csv) throw ConfigError("write to '" + csv_path + "' failed");
}

// ---------------------------------------------------------------------------
// Regularization limit study

bool decreasing_within_noise(std::span<const double> v, double atol) {
  double largest = 0.0;
  for (double x : v) largest = std::max(largest, std::abs(x));
  const double floor = std::max(0.1 * largest, atol);
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] + floor) return false;
  return true;
}

LimitReport regularization_limit_study(const ReferenceParams& p, const PhysicsModel& m,
                                       const StepControl& control, int n,
                                       std::span<const std::pair<double, double>> schedule, double t_end) {
  if (schedule.empty()) throw ConfigError("limit_study.schedule: must not be empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto [eps, delta] = schedule[i];
    if (!(eps > 0.0) || !(delta > 0.0)) throw ConfigError("limit_study.schedule: entries must be positive");
    if (i > 0 && !(eps < schedule[i - 1].first && delta < schedule[i - 1].second))
      throw ConfigError("limit_study.schedule: must be strictly decreasing");
  }
  if (!(t_end > 0.0)) throw ConfigError("control.t_end: must be positive");

  const auto [ref, forcing] = make_reference(p, m);
  const SourceTerms src = forcing.solver_sources();
  const BoxGrid g = reference_grid(p, {n, n, n});
  const FieldState initial = sample_state(ref, g, 0.0);

  PhysicsModel limit = m;
  limit.reg.eps = 0.0;
  limit.reg.delta = 0.0;
  std::vector<PhysicsModel> models{limit};
  for (const auto& [eps, delta] : schedule) {
    PhysicsModel mm = m;
    mm.reg.eps = eps;
    mm.reg.delta = delta;
    models.push_back(mm);
  }

  // One fixed step for every run, so all runs share the time levels.
  double dt = control.dt_max;
  for (const auto& mm : models) dt = std::min(dt, stable_dt(initial, mm, control));
  const int steps = static_cast<int>(std::ceil(t_end / dt - 1e-9));
  dt = t_end / steps;

  const double margin = 0.2 * *std::min_element(p.extents.begin(), p.extents.end());
  const ScalarTest bump = bump_test(g, margin);

  struct Run {
    LimitEntry entry;
    FieldState final_state;
  };
  auto run = [&](const PhysicsModel& mm) {
    Run out;
    out.entry.eps = mm.reg.eps;
    out.entry.delta = mm.reg.delta;
    const Solver solver(mm, control, ref.boundary, src);
    EnergyMonitor monitor(limit, ref.boundary, src);
    std::vector<FieldState> history;
    history.reserve(static_cast<std::size_t>(steps) + 1);
    FieldState s = initial;
    monitor.observe(s);
    history.push_back(s);
    out.entry.sigma_min = std::numeric_limits<double>::infinity();
    with_context(n, [&] {
      for (int k = 0; k < steps; ++k) {
        out.entry.sigma_min = std::min(out.entry.sigma_min, solver.step_with(s, dt).sigma_min);
        monitor.observe(s);
        history.push_back(s);
      }
      return 0;
    });
    out.entry.entropy_residual = entropy_inequality_residual(history, limit, ref.boundary, bump, src);
    out.entry.entropy_negative = std::max(0.0, -out.entry.entropy_residual);
    out.entry.ballistic_cumulative = monitor.cumulative_ballistic_residual();
    out.entry.ballistic_positive = monitor.max_positive_ballistic_residual();
    out.final_state = std::move(s);
    return out;
  };

  LimitReport report;
  report.params = p;
  report.n = n;
  report.steps = steps;
  report.dt = dt;
  Run base = run(limit);
  const ReferenceFields target{base.final_state.rho, base.final_state.theta, base.final_state.u,
                               base.final_state.B};
  base.entry.distance = relative_energy(base.final_state, target, m.gas);
  report.baseline = base.entry;
  for (std::size_t i = 1; i < models.size(); ++i) {
    Run r = run(models[i]);
    r.entry.distance = relative_energy(r.final_state, target, m.gas);
    report.entries.push_back(r.entry);
  }

  std::vector<double> neg, pos, dist;
  for (const auto& e : report.entries) {
    neg.push_back(e.entropy_negative);
    pos.push_back(e.ballistic_positive);
    dist.push_back(e.distance);
  }
  const double atol = 1e-12 * std::abs(total_energy(initial, m.gas));
  const bool ok_neg = decreasing_within_noise(neg, atol), ok_pos = decreasing_within_noise(pos, atol),
             ok_dist = decreasing_within_noise(dist, atol);
  report.pass = ok_neg && ok_pos && ok_dist;
  report.verdict = report.pass ? "all three series decrease within the 10% noise floor" : "not monotone:";
  if (!ok_neg) report.verdict += " entropy_negative";
  if (!ok_pos) report.verdict += " ballistic_positive";
  if (!ok_dist) report.verdict += " distance";
  return report;
}

void write_limit_report(const std::string& json_path, const LimitReport& report) {
  auto entry = [](const LimitEntry& e) {
    return json{{"eps", e.eps},
                {"delta", e.delta},
                {"entropy_negative", e.entropy_negative},
                {"entropy_residual", e.entropy_residual},
                {"ballistic_positive", e.ballistic_positive},
                {"ballistic_cumulative", e.ballistic_cumulative},
                {"distance", e.distance},
                {"sigma_min", number(e.sigma_min)}};
  };
  json entries = json::array();
  for (const auto& e : report.entries) entries.push_back(entry(e));
  const json doc = {{"experiment", "regularization_limit"},
                    {"reference", params_json(report.params)},
                    {"n", report.n},
                    {"steps", report.steps},
                    {"dt", report.dt},
                    {"baseline", entry(report.baseline)},
                    {"entries", entries},
                    {"pass", report.pass},
                    {"verdict", report.verdict}};
  write_text(json_path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Linear waves

double WaveResult::relative_error() const {
  return std::abs(measured_speed - predicted_speed) / predicted_speed;
}

namespace {

BoxGrid wave_grid(int n) {
  BoxGrid g;
  g.n = {n, 4, 4};
  g.extents = {1.0, 4.0 / n, 4.0 / n};
  g.periodic = {true, true, true};
  g.validate();
  return g;
}

PhysicsModel wave_model(const GasModel& gas) {
  PhysicsModel m;
  m.gas = gas;
  m.reg.eps = 0.0;
  m.reg.delta = 0.0;
  m.transport.mu0 = m.transport.eta0 = m.transport.kappa0 = m.transport.zeta0 = 1e-4;
  return m;
}

/// Runs until `wanted` sign changes of the modal amplitude and returns the
/// angular frequency from the first and last interpolated crossing.
template <class Amplitude>
std::pair<double, int> measure_frequency(FieldState& s, const Solver& solver, Amplitude&& amplitude,
                                         double t_max, int wanted) {
  std::vector<double> crossings;
  double prev = amplitude(s), t_prev = s.t;
  while (s.t < t_max && static_cast<int>(crossings.size()) < wanted) {
    solver.step(s);
    const double cur = amplitude(s);
    if ((prev < 0.0) != (cur < 0.0)) crossings.push_back(t_prev + (s.t - t_prev) * prev / (prev - cur));
    prev = cur;
    t_prev = s.t;
  }
  const int c = static_cast<int>(crossings.size());
  if (c < 2) return {0.0, c};
  return {kPi * (c - 1) / (crossings.back() - crossings.front()), c};
}

}  // namespace

WaveResult acoustic_wave_experiment(const GasModel& gas, int n, double amplitude) {
  const BoxGrid g = wave_grid(n);
  const PhysicsModel m = wave_model(gas);
  const BoundarySpec bc = BoundarySpec::uniform(1.0, {}, {});
  const ThermoPoint tp = eos_eval(gas, 1.0, 1.0);
  const double dtheta_drho = (tp.p - tp.de_drho) / tp.de_dtheta;  // isentropic, rho = 1
  const double k = 2.0 * kPi;

  FieldState s(g);
  s.rho = sample_on(g, kCellStagger, [&](const Vec3& x) { return 1.0 + amplitude * std::cos(k * x.x); });
  s.theta = sample_on(g, kCellStagger,
                      [&](const Vec3& x) { return 1.0 + amplitude * dtheta_drho * std::cos(k * x.x); });
  apply_boundaries(s, bc, 0.0);

  const Solver solver(m, StepControl{}, bc);
  auto mode = [&](const FieldState& st) {
    return sum_over(g.cells(), [&](int i, int j, int kk) {
      return (st.rho(i, j, kk) - 1.0) * std::cos(k * g.position(kCellStagger, i, j, kk).x);
    });
  };
  WaveResult r;
  r.predicted_speed = std::sqrt(adiabatic_sound_speed_sq(tp));
  const auto [omega, c] = measure_frequency(s, solver, mode, 4.0 / r.predicted_speed, 6);
  r.measured_speed = omega / k;
  r.crossings = c;
  return r;
}

WaveResult alfven_wave_experiment(const GasModel& gas, int n, double B0, double amplitude) {
  const BoxGrid g = wave_grid(n);
  const PhysicsModel m = wave_model(gas);
  const BoundarySpec bc = BoundarySpec::uniform(1.0, {B0, 0.0, 0.0}, {});
  const double k = 2.0 * kPi;

  FieldState s(g);
  s.rho.fill(1.0);
  s.theta.fill(1.0);
  s.B[0].fill(B0);
  s.u[1] = sample_on(g, face_stagger(1), [&](const Vec3& x) { return amplitude * std::cos(k * x.x); });
  apply_boundaries(s, bc, 0.0);

  const Solver solver(m, StepControl{}, bc);
  auto mode = [&](const FieldState& st) {
    return sum_over(g.cells(), [&](int i, int j, int kk) {
      return st.u[1](i, j, kk) * std::cos(k * g.position(face_stagger(1), i, j, kk).x);
    });
  };
  WaveResult r;
  r.predicted_speed = std::abs(B0);  // rho = 1
  const auto [omega, c] = measure_frequency(s, solver, mode, 4.0 / r.predicted_speed, 6);
  r.measured_speed = omega / k;
  r.crossings = c;
  return r;
}

// ---------------------------------------------------------------------------
// Conservation runs

double DriftResult::relative_drift() const {
  return std::abs(final_energy - initial_energy) / std::abs(initial_energy);
}

DriftResult energy_drift_experiment(int n, int steps, std::uint64_t seed) {
  BoxGrid g;
  g.n = {n, n, n};
  g.validate();
  PhysicsModel m;
  m.reg.eps = 0.0;
  m.reg.delta = 0.0;
  BoundarySpec bc = BoundarySpec::uniform(1.0, {}, {}, MagneticBC::NormalFluxZeroEMF);
  bc.thermal_bc = ThermalBC::Insulated;

  FieldState s = random_state(g, seed, 0.1);
  s.theta.fill(1.0);
  apply_boundaries(s, bc, 0.0);
  const Solver solver(m, StepControl{}, bc);
  DriftResult r;
  r.n = n;
  r.steps = steps;
  r.initial_energy = total_energy(s, m.gas);
  for (int k = 0; k < steps; ++k) solver.step(s);
  r.final_energy = total_energy(s, m.gas);
  return r;
}

SolenoidalResult solenoidality_experiment(int n, int steps, std::uint64_t seed) {
  BoxGrid g;
  g.n = {n, n, n};
  g.validate();
  const PhysicsModel m;
  // A uniform background keeps |B| of order one while the random part decays.
  const Vec3 background{0.3, -0.2, 0.5};
  const BoundarySpec bc = BoundarySpec::uniform(1.0, background, {});
  FieldState s = random_state(g, seed, 0.2);
  for (int d = 0; d < 3; ++d)
    for (double& v : s.B[d].values()) v += background[d];
  apply_boundaries(s, bc, 0.0);
  const Solver solver(m, StepControl{}, bc);
  for (int k = 0; k < steps; ++k) solver.step(s);
  SolenoidalResult r;
  r.steps = steps;
  r.div_max = g.h_min() * max_abs_cells(g, divergence(g, s.B));
  r.B_max = max_abs_faces(g, s.B);
  return r;
}

}  // namespace mhd
