#include "mhd/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "mhd/checks.hpp"
#include "mhd/diagnostics.hpp"
#include "mhd/discrete_ops.hpp"
#include "mhd/verification.hpp"

namespace mhd {

namespace {

using nlohmann::json;

constexpr double kDivTolerance = 1e-12;

// Position of the running simulation, for failure records.
struct Progress {
  int step = -1;
  double t = std::numeric_limits<double>::quiet_NaN();
};
thread_local Progress progress;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

json config_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& [section, keys] : c.effective)
    for (const auto& [key, value] : keys) j[section][key] = value;
  return j;
}

json base_report(const std::string& command, const RunConfig& c) {
  return json{{"command", command}, {"seed", c.seed}, {"warnings", c.warnings}, {"config", config_json(c)}};
}

BoundarySpec run_boundary(const RunConfig& c, SourceTerms* src) {
  if (c.initial.profile != InitialProfile::Reference) return c.boundary();
  const auto [ref, forcing] = make_reference(c.experiment.reference, c.model);
  if (src) *src = forcing.solver_sources();
  return ref.boundary;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FieldState initial_state(const RunConfig& c) {
  const InitialConfig& ini = c.initial;
  FieldState s;
  switch (ini.profile) {
    case InitialProfile::Uniform: {
      s = FieldState(c.grid);
      s.rho.fill(ini.rho);
      s.theta.fill(ini.theta);
      for (int d = 0; d < 3; ++d) {
        s.u[d].fill(ini.u[d]);
        s.B[d].fill(ini.B[d]);
      }
      break;
    }
    case InitialProfile::Random: {
      s = random_state(c.grid, c.seed, ini.amplitude);
      for (double& v : s.rho.values()) v *= ini.rho;
      for (double& v : s.theta.values()) v *= ini.theta;
      for (int d = 0; d < 3; ++d)
        for (double& v : s.B[d].values()) v += ini.B[d];
      break;
    }
    case InitialProfile::Reference: {
      const auto [ref, forcing] = make_reference(c.experiment.reference, c.model);
      s = sample_state(ref, c.grid, 0.0);
      break;
    }
    case InitialProfile::Checkpoint: {
      s = read_checkpoint(ini.checkpoint, c.grid.periodic);
      if (s.grid.n != c.grid.n)
        throw ConfigError("initial.checkpoint: grid " + std::to_string(s.grid.n[0]) + "x" +
                          std::to_string(s.grid.n[1]) + "x" + std::to_string(s.grid.n[2]) +
                          " does not match [grid]");
      break;
    }
  }
  apply_boundaries(s, run_boundary(c, nullptr), s.t);
  return s;
}

int run_simulate(const RunConfig& c, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path out(out_dir);
  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);

  SourceTerms src;
  const BoundarySpec bc = run_boundary(c, &src);
  validate_boundary(c.grid, bc, 0.0);
  FieldState s = initial_state(c);
  const Solver solver(c.model, c.control, bc, src);
  EnergyMonitor monitor(c.model, bc, src);

  std::vector<EnergyReport> rows;
  rows.push_back(monitor.observe(s));

  std::ofstream steps_csv(out / "steps.csv");
  if (!steps_csv) throw IoError("cannot write '" + (out / "steps.csv").string() + "'");
  steps_csv << "step,t,dt,min_rho,min_theta,max_u,max_B,divB_max,sigma_min,halvings,cg_iterations\n";

  const double h = c.grid.h_min();
  double sigma_min = std::numeric_limits<double>::infinity();
  double div_worst = 0.0;
  int taken = 0;
  auto checkpoint = [&](int step) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06d.bin", step);
    write_checkpoint((ckpt_dir / name).string(), s);
  };

  progress = {0, s.t};
  for (int k = 1; k <= c.steps; ++k) {
    if (c.t_end > 0.0 && s.t >= c.t_end * (1.0 - 1e-12)) break;
    progress = {k, s.t};
    StepReport r;
    if (c.t_end > 0.0)
      r = solver.step_with(s, std::min(stable_dt(s, c.model, c.control), c.t_end - s.t));
    else
      r = solver.step(s);
    taken = k;
    sigma_min = std::min(sigma_min, r.sigma_min);
    const double div_rel = h * r.divB_max / (r.max_B > 0.0 ? r.max_B : 1.0);
    div_worst = std::max(div_worst, div_rel);
    steps_csv << k << ',' << fmt17(r.t) << ',' << fmt17(r.dt) << ',' << fmt17(r.min_rho) << ','
              << fmt17(r.min_theta) << ',' << fmt17(r.max_u) << ',' << fmt17(r.max_B) << ','
              << fmt17(r.divB_max) << ',' << fmt17(r.sigma_min) << ',' << r.halvings << ',' << r.cg_iterations
              << '\n';
    if (k % c.output.diagnostics_every == 0) rows.push_back(monitor.observe(s));
    if (c.output.checkpoint_every > 0 && k % c.output.checkpoint_every == 0) checkpoint(k);
  }
  if (taken % c.output.diagnostics_every != 0) rows.push_back(monitor.observe(s));
  if (c.output.checkpoint_every == 0 || taken % c.output.checkpoint_every != 0) checkpoint(taken);
  steps_csv.close();
  if (!steps_csv) throw IoError("error while writing steps.csv");
  write_energy_reports((out / "diagnostics.csv").string(), rows);

  const bool sigma_ok = taken == 0 || sigma_min >= 0.0;
  const bool div_ok = div_worst <= kDivTolerance;
  json report = base_report("simulate", c);
  report["steps"] = taken;
  report["t_final"] = s.t;
  report["diagnostics_rows"] = rows.size();
  report["energy"] = {{"initial", rows.front().total_energy},
                      {"final", rows.back().total_energy},
                      {"ballistic_cumulative", monitor.cumulative_ballistic_residual()},
                      {"ballistic_positive", monitor.max_positive_ballistic_residual()}};
  report["gates"] = {
      {"entropy_production", {{"min", number(taken ? sigma_min : 0.0)}, {"pass", sigma_ok}}},
      {"solenoidality", {{"max_h_divB_over_B", div_worst}, {"tolerance", kDivTolerance}, {"pass", div_ok}}}};
  report["pass"] = sigma_ok && div_ok;
  write_json(out / "report.json", report);
  return sigma_ok && div_ok ? kExitPass : kExitGateFailure;
}

int run_ws_test(const RunConfig& c, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  PhysicsModel m = c.model;
  m.reg.eps = 0.0;
  m.reg.delta = 0.0;
  const ExperimentConfig& ex = c.experiment;
  const WeakStrongReport r = weak_strong_experiment(ex.reference, m, c.control, ex.resolutions, ex.t_end);
  const std::filesystem::path out(out_dir);
  write_weak_strong_report((out / "report.json").string(), (out / "e_rel.csv").string(), r);
  return r.pass ? kExitPass : kExitGateFailure;
}

int run_limit_study(const RunConfig& c, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const ExperimentConfig& ex = c.experiment;
  std::vector<std::pair<double, double>> schedule;
  for (double v : ex.schedule) schedule.emplace_back(v, v);
  const LimitReport r =
      regularization_limit_study(ex.reference, c.model, c.control, ex.limit_resolution, schedule, ex.t_end);
  write_limit_report((std::filesystem::path(out_dir) / "report.json").string(), r);
  return r.pass ? kExitPass : kExitGateFailure;
}

int run_check_thermo(const RunConfig& c, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const GibbsCheck gibbs = gibbs_check(c.model.gas, 1000, c.seed);
  const StructureCheck structure = structure_check(c.model.gas);
  const ProductionSweep sweep = production_sweep(c.model.transport, 100000, c.seed);
  const HypothesisReport& h = structure.report;

  json report = base_report("check-thermo", c);
  report["gibbs"] = {{"points", gibbs.points},     {"step", gibbs.step},   {"worst", gibbs.worst},
                     {"worst_half", gibbs.worst_half}, {"order", gibbs.order}, {"pass", gibbs.pass()}};
  report["hypotheses"] = {{"samples", h.rows.size()},
                          {"p_zero_at_origin", h.p_zero_at_origin},
                          {"heat_capacity", h.heat_capacity_all},
                          {"heat_capacity_ratio_max", h.heat_capacity_ratio_max},
                          {"monotone", h.monotone_all},
                          {"degenerate_limit", h.degenerate_limit_ok},
                          {"degenerate_limit_estimate", number(h.degenerate_limit_estimate)},
                          {"stability", h.stability_all},
                          {"third_law", h.third_law_ok},
                          {"third_law_estimate", number(h.third_law_estimate)},
                          {"ratio_deviation", structure.ratio_deviation},
                          {"ratio_roundoff", structure.ratio_roundoff},
                          {"pass", structure.pass()}};
  const bool sweep_ok = sweep.negative == 0;
  report["entropy_production"] = {
      {"samples", sweep.samples}, {"minimum", sweep.minimum}, {"negative", sweep.negative}, {"pass", sweep_ok}};
  const bool pass = gibbs.pass() && structure.pass() && sweep_ok;
  report["pass"] = pass;
  write_json(std::filesystem::path(out_dir) / "report.json", report);
  return pass ? kExitPass : kExitGateFailure;
}

int run_check_ops(const RunConfig& c, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const OperatorCheck ops = operator_check(c.grid, 4, c.seed);
  json report = base_report("check-ops", c);
  report["sbp"] = {{"trials", ops.sbp.trials},
                   {"div_grad", ops.sbp.div_grad},
                   {"curl_pair", ops.sbp.curl_pair},
                   {"div_curl", ops.sbp.div_curl},
                   {"vector_identity", ops.sbp.vector_identity},
                   {"vector_identity_coinciding", ops.sbp.vector_identity_coinciding},
                   {"worst", ops.sbp.worst()},
                   {"tolerance", 1e-12}};
  report["parallel_bitwise"] = ops.parallel_bitwise;
  report["pass"] = ops.pass();
  write_json(std::filesystem::path(out_dir) / "report.json", report);
  return ops.pass() ? kExitPass : kExitGateFailure;
}

int run_command(const std::string& subcommand, const RunConfig& c, const std::string& out_dir, std::ostream& err) {
  progress = {};
  try {
    if (subcommand == "simulate") return run_simulate(c, out_dir);
    if (subcommand == "ws-test") return run_ws_test(c, out_dir);
    if (subcommand == "limit-study") return run_limit_study(c, out_dir);
    if (subcommand == "check-thermo") return run_check_thermo(c, out_dir);
    if (subcommand == "check-ops") return run_check_ops(c, out_dir);
    err << "unknown subcommand '" << subcommand << "'\n";
    return kExitIoError;
  } catch (const StepFailure& e) {
    json record{{"status", "failed"},
                {"command", subcommand},
                {"kind", "step_failure"},
                {"invariant", e.invariant()},
                {"message", e.what()},
                {"step", progress.step >= 0 ? json(progress.step) : json(nullptr)},
                {"t", number(progress.t)}};
    try {
      std::filesystem::create_directories(out_dir);
      write_json(std::filesystem::path(out_dir) / "failure.json", record);
    } catch (const std::exception& io) {
      err << "cannot write failure.json: " << io.what() << '\n';
    }
    err << record.dump() << '\n';
    return kExitStepFailure;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DomainError& e) {
    // Only reachable from inadmissible initial data; the solver guards its own states.
    err << "invalid initial data: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIoError;
  }
}

}  // namespace mhd
