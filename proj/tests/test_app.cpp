#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "mhd/app.hpp"
#include "mhd/diagnostics.hpp"
#include "mhd/parallel.hpp"

using namespace mhd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mhd_app_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const std::string& path) {
  const std::string text = slurp(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

const char* kEquilibrium = R"(
[grid]
nx = 8
ny = 8
nz = 8
[transport]
beta = 7
[boundary]
b_b = 0 0 0.5
[initial]
b = 0 0 0.5
)";

const char* kRandom = R"(
[grid]
nx = 8
ny = 8
nz = 8
[transport]
beta = 7
[boundary]
b_b = 0.3 -0.2 0.5
[initial]
profile = random
amplitude = 0.2
b = 0.3 -0.2 0.5
[control]
steps = 15
seed = 4
)";

}  // namespace

TEST_CASE("simulate: equilibrium run writes one diagnostics row per step plus the initial one") {
  TempDir dir("equilibrium");
  const RunConfig c = parse_config_text(kEquilibrium);
  std::ostringstream err;
  CHECK(run_command("simulate", c, dir.path.string(), err) == kExitPass);
  CHECK(err.str().empty());
  CHECK(line_count(dir / "diagnostics.csv") == 1 + 101);
  CHECK(line_count(dir / "steps.csv") == 1 + 100);
  CHECK(fs::exists(dir.path / "checkpoints" / "step_000100.bin"));

  const auto report = read_json(dir / "report.json");
  CHECK(report["pass"] == true);
  CHECK(report["steps"] == 100);
  CHECK(report["diagnostics_rows"] == 101);
  CHECK(report["gates"]["solenoidality"]["max_h_divB_over_B"].get<double>() <= 1e-12);
  CHECK(report["gates"]["entropy_production"]["min"].get<double>() >= 0.0);
  const double e0 = report["energy"]["initial"], e1 = report["energy"]["final"];
  CHECK(std::abs(e1 - e0) <= 1e-13 * e0);

  const std::string header = slurp(dir / "diagnostics.csv").substr(0, slurp(dir / "diagnostics.csv").find('\n'));
  std::string expected;
  for (const auto& col : energy_report_columns()) expected += (expected.empty() ? "" : ",") + col;
  CHECK(header == expected);
}

TEST_CASE("simulate: output cadence and t_end") {
  TempDir dir("cadence");
  const RunConfig c = parse_config_text(std::string(kEquilibrium) +
                                        "[control]\nsteps = 10\n[output]\ndiagnostics_every = 4\ncheckpoint_every = 5\n");
  std::ostringstream err;
  CHECK(run_command("simulate", c, dir.path.string(), err) == kExitPass);
  // Samples at steps 0, 4, 8 and the final step 10.
  CHECK(line_count(dir / "diagnostics.csv") == 1 + 4);
  CHECK(fs::exists(dir.path / "checkpoints" / "step_000005.bin"));
  CHECK(fs::exists(dir.path / "checkpoints" / "step_000010.bin"));

  TempDir short_run("t_end");
  const RunConfig t = parse_config_text(std::string(kEquilibrium) + "[control]\nsteps = 1000\nt_end = 0.025\n");
  CHECK(run_command("simulate", t, short_run.path.string(), err) == kExitPass);
  const auto report = read_json(short_run / "report.json");
  CHECK(report["t_final"].get<double>() == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(report["steps"].get<int>() < 1000);
}

TEST_CASE("simulate: diagnostics are bit-identical across runs and worker counts") {
  const RunConfig c = parse_config_text(kRandom);
  const int saved = worker_count();
  std::string first;
  for (int workers : {1, 4, 1, 4}) {
    set_worker_count(workers);
    TempDir dir("repro");
    std::ostringstream err;
    REQUIRE(run_command("simulate", c, dir.path.string(), err) == kExitPass);
    const std::string text = slurp(dir / "diagnostics.csv");
    REQUIRE(line_count(dir / "diagnostics.csv") == 1 + 16);
    if (first.empty())
      first = text;
    else
      CHECK(text == first);
  }
  set_worker_count(saved);

  // A different seed changes the data.
  TempDir other("repro_seed");
  std::ostringstream err;
  REQUIRE(run_command("simulate", parse_config_text(kRandom, {{"control.seed", "5"}}), other.path.string(), err) ==
          kExitPass);
  CHECK(slurp(other / "diagnostics.csv") != first);
}

TEST_CASE("simulate: restart from a checkpoint continues the run") {
  TempDir dir("restart");
  std::ostringstream err;
  const RunConfig a = parse_config_text(std::string(kRandom), {{"control.steps", "6"}});
  REQUIRE(run_command("simulate", a, (dir.path / "a").string(), err) == kExitPass);
  const std::string ckpt = (dir.path / "a" / "checkpoints" / "step_000006.bin").string();
  const RunConfig b = parse_config_text(std::string(kRandom), {{"control.steps", "2"},
                                                               {"initial.profile", "checkpoint"},
                                                               {"initial.checkpoint", ckpt}});
  REQUIRE(run_command("simulate", b, (dir.path / "b").string(), err) == kExitPass);
  const auto ra = read_json((dir.path / "a" / "report.json").string());
  const auto rb = read_json((dir.path / "b" / "report.json").string());
  CHECK(rb["energy"]["initial"].get<double>() == ra["energy"]["final"].get<double>());
  CHECK(rb["t_final"].get<double>() > ra["t_final"].get<double>());

  const RunConfig wrong = parse_config_text(std::string(kRandom), {{"grid.nx", "10"},
                                                                   {"initial.profile", "checkpoint"},
                                                                   {"initial.checkpoint", ckpt}});
  CHECK(run_command("simulate", wrong, (dir.path / "c").string(), err) == kExitConfigError);
}

TEST_CASE("simulate: a step failure leaves a machine-readable record") {
  TempDir dir("failure");
  const RunConfig c = parse_config_text(kRandom, {{"control.diffusion", "lagged_implicit"},
                                                  {"control.cg_max_iterations", "1"},
                                                  {"control.cg_rtol", "1e-14"}});
  std::ostringstream err;
  CHECK(run_command("simulate", c, dir.path.string(), err) == kExitStepFailure);
  const auto record = read_json(dir / "failure.json");
  CHECK(record["status"] == "failed");
  CHECK(record["kind"] == "step_failure");
  CHECK(record["invariant"] == "linear_solver");
  CHECK(record["step"] == 1);
  CHECK(record["t"] == 0.0);
  // The same record, on one line, goes to the error stream.
  CHECK(nlohmann::json::parse(err.str()) == record);
}

TEST_CASE("run_command: usage and IO errors") {
  TempDir dir("errors");
  const RunConfig c = parse_config_text(kEquilibrium);
  std::ostringstream err;
  CHECK(run_command("bogus", c, dir.path.string(), err) == kExitIoError);
  {
    std::ofstream blocker(dir / "file");
  }
  CHECK(run_command("simulate", c, dir / "file", err) == kExitIoError);
  const RunConfig missing =
      parse_config_text(kEquilibrium, {{"initial.profile", "checkpoint"}, {"initial.checkpoint", dir / "none.bin"}});
  CHECK(run_command("simulate", missing, (dir.path / "m").string(), err) == kExitIoError);
}

TEST_CASE("ws-test: cellular flow converges and writes report and series") {
  TempDir dir("ws");
  const RunConfig c = parse_config_text(R"(
[transport]
beta = 7
[experiment]
family = B
resolutions = 8 16
t_end = 0.05
)");
  std::ostringstream err;
  CHECK(run_command("ws-test", c, dir.path.string(), err) == kExitPass);
  const auto report = read_json(dir / "report.json");
  CHECK(report["experiment"] == "weak_strong");
  CHECK(report["pass"] == true);
  CHECK(report["fitted_order"].get<double>() >= 1.0);
  CHECK(report["rows"].size() == 2);
  CHECK(slurp(dir / "e_rel.csv").rfind("n,t,e_rel\n", 0) == 0);
}

TEST_CASE("limit-study and checks subcommands") {
  std::ostringstream err;
  {
    TempDir dir("limit");
    const RunConfig c = parse_config_text(R"(
[transport]
beta = 7
[experiment]
limit_resolution = 8
t_end = 0.1
)");
    CHECK(run_command("limit-study", c, dir.path.string(), err) == kExitPass);
    const auto report = read_json(dir / "report.json");
    CHECK(report["pass"] == true);
    CHECK(report["entries"].size() == 3);
  }
  {
    TempDir dir("thermo");
    CHECK(run_command("check-thermo", parse_config_text(""), dir.path.string(), err) == kExitPass);
    const auto report = read_json(dir / "report.json");
    CHECK(report["hypotheses"]["heat_capacity"] == true);
    CHECK(report["hypotheses"]["monotone"] == true);
    CHECK(report["hypotheses"]["degenerate_limit"] == true);
    CHECK(report["hypotheses"]["stability"] == true);
    CHECK(report["hypotheses"]["ratio_deviation"] == 0.0);
    CHECK(report["entropy_production"]["negative"] == 0);
  }
  {
    TempDir dir("ops");
    CHECK(run_command("check-ops", parse_config_text("[grid]\nnx = 8\nny = 8\nnz = 8\n"), dir.path.string(), err) ==
          kExitPass);
    CHECK(read_json(dir / "report.json")["parallel_bitwise"] == true);
  }
}
