#include "mhd/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

extern char** environ;

namespace mhd {

namespace {

using Sections = std::map<std::string, std::map<std::string, std::string>>;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"grid", {"nx", "ny", "nz", "lx", "ly", "lz", "periodic_x", "periodic_y", "periodic_z"}},
      {"gas", {"c1", "p_inf", "a", "s0"}},
      {"transport", {"mu0", "eta0", "kappa0", "zeta0", "alpha", "beta"}},
      {"regularization", {"eps", "delta", "gamma", "gamma_weighted_heating"}},
      {"boundary", {"theta_b", "b_b", "b_b_gradient", "gravity", "magnetic_bc", "thermal_bc"}},
      {"initial", {"profile", "rho", "theta", "u", "b", "amplitude", "checkpoint"}},
      {"control",
       {"steps", "t_end", "seed", "cfl", "dt_max", "max_halvings", "diffusion", "integrator", "cg_rtol",
        "cg_max_iterations"}},
      {"output", {"diagnostics_every", "checkpoint_every"}},
      {"experiment",
       {"family", "amplitude", "b0", "modes", "resolutions", "t_end", "limit_resolution", "schedule"}},
  };
  return s;
}

/// Reads typed values, recording violations instead of throwing.
class Reader {
 public:
  explicit Reader(Sections sections) : sections_(std::move(sections)) {}

  std::vector<std::string> violations;
  Sections effective;

  void fail(const std::string& section, const std::string& key, const std::string& what) {
    violations.push_back(section + "." + key + ": " + what);
  }

  const std::string* raw(const std::string& section, const std::string& key) {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  template <class T>
  T number(const std::string& section, const std::string& key, T fallback) {
    T v = fallback;
    if (const std::string* r = raw(section, key)) {
      if (!parse_number(*r, v)) {
        fail(section, key, "expected a number, got '" + *r + "'");
        v = fallback;
      }
    }
    std::ostringstream os;
    os.precision(17);
    os << v;
    effective[section][key] = os.str();
    return v;
  }

  bool flag(const std::string& section, const std::string& key, bool fallback) {
    bool v = fallback;
    if (const std::string* r = raw(section, key)) {
      const std::string t = lower(trim(*r));
      if (t == "true" || t == "1" || t == "yes" || t == "on")
        v = true;
      else if (t == "false" || t == "0" || t == "no" || t == "off")
        v = false;
      else
        fail(section, key, "expected true or false, got '" + *r + "'");
    }
    effective[section][key] = v ? "true" : "false";
    return v;
  }

  std::string word(const std::string& section, const std::string& key, const std::string& fallback) {
    const std::string* r = raw(section, key);
    const std::string v = r ? trim(*r) : fallback;
    effective[section][key] = v;
    return v;
  }

  template <class T>
  std::vector<T> list(const std::string& section, const std::string& key, const std::vector<T>& fallback) {
    std::vector<T> v = fallback;
    if (const std::string* r = raw(section, key)) {
      v.clear();
      for (const std::string& item : split(*r)) {
        T x{};
        if (!parse_number(item, x)) {
          fail(section, key, "expected a list of numbers, got '" + *r + "'");
          v = fallback;
          break;
        }
        v.push_back(x);
      }
    }
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    effective[section][key] = os.str();
    return v;
  }

  Vec3 vec3(const std::string& section, const std::string& key, const Vec3& fallback) {
    const std::vector<double> v = list<double>(section, key, {fallback.x, fallback.y, fallback.z});
    if (v.size() != 3) {
      fail(section, key, "expected 3 components");
      return fallback;
    }
    return {v[0], v[1], v[2]};
  }

  void report_unknown() {
    for (const auto& [section, keys] : sections_) {
      const auto known = schema().find(section);
      if (known == schema().end()) {
        violations.push_back(section + ": unknown section");
        continue;
      }
      for (const auto& [key, value] : keys)
        if (!known->second.count(key)) fail(section, key, "unknown key");
    }
  }

 private:
  Sections sections_;
};

template <class E>
E choose(Reader& rd, const std::string& section, const std::string& key, const std::string& fallback,
         const std::vector<std::pair<std::string, E>>& options) {
  const std::string w = lower(rd.word(section, key, fallback));
  for (const auto& [name, value] : options)
    if (name == w) return value;
  std::string names;
  for (const auto& [name, value] : options) names += (names.empty() ? "" : ", ") + name;
  rd.fail(section, key, "expected one of " + names + ", got '" + w + "'");
  return options.front().second;
}

Sections load(const std::string& text, std::vector<std::string>& violations) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    violations.push_back("syntax error at line " + std::to_string(e.line()) + ": " + e.message());
    return {};
  }
  Sections out;
  for (const auto& [section, node] : pt) {
    if (node.empty()) {
      violations.push_back(section + ": key outside of a section");
      continue;
    }
    auto& dst = out[lower(section)];
    for (const auto& [key, value] : node) {
      const std::string k = lower(key);
      if (dst.count(k)) violations.push_back(lower(section) + "." + k + ": duplicate key");
      dst[k] = value.get_value<std::string>();
    }
  }
  return out;
}

void check_nonnegative(Reader& rd, const std::string& section, const std::string& key, double v) {
  if (!(v >= 0.0)) rd.fail(section, key, "must be nonnegative");
}

void check_positive(Reader& rd, const std::string& section, const std::string& key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) rd.fail(section, key, "must be positive");
}

RunConfig build(Sections sections, const Overrides& overrides, std::vector<std::string> violations) {
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
      violations.push_back(path + ": override needs SECTION__KEY");
      continue;
    }
    sections[lower(path.substr(0, dot))][lower(path.substr(dot + 1))] = value;
  }

  Reader rd(std::move(sections));
  rd.violations = std::move(violations);
  RunConfig c;

  // [grid]
  c.grid.n = {rd.number("grid", "nx", 16), rd.number("grid", "ny", 16), rd.number("grid", "nz", 16)};
  c.grid.extents = {rd.number("grid", "lx", 1.0), rd.number("grid", "ly", 1.0), rd.number("grid", "lz", 1.0)};
  c.grid.periodic = {rd.flag("grid", "periodic_x", false), rd.flag("grid", "periodic_y", false),
                     rd.flag("grid", "periodic_z", false)};
  const char* axes[3] = {"x", "y", "z"};
  for (int d = 0; d < 3; ++d) {
    if (c.grid.n[static_cast<std::size_t>(d)] < BoxGrid::kMinCells)
      rd.fail("grid", std::string("n") + axes[d], "must be at least " + std::to_string(BoxGrid::kMinCells));
    check_positive(rd, "grid", std::string("l") + axes[d], c.grid.extents[static_cast<std::size_t>(d)]);
  }

  // [gas]
  GasModel& gas = c.model.gas;
  gas.c1 = rd.number("gas", "c1", gas.c1);
  gas.p_inf = rd.number("gas", "p_inf", gas.p_inf);
  gas.a = rd.number("gas", "a", gas.a);
  gas.s0 = rd.number("gas", "s0", gas.s0);
  check_positive(rd, "gas", "c1", gas.c1);
  check_positive(rd, "gas", "p_inf", gas.p_inf);
  check_positive(rd, "gas", "a", gas.a);

  // [transport]
  TransportModel& tr = c.model.transport;
  tr.mu0 = rd.number("transport", "mu0", tr.mu0);
  tr.eta0 = rd.number("transport", "eta0", tr.eta0);
  tr.kappa0 = rd.number("transport", "kappa0", tr.kappa0);
  tr.zeta0 = rd.number("transport", "zeta0", tr.zeta0);
  tr.alpha = rd.number("transport", "alpha", tr.alpha);
  tr.beta = rd.number("transport", "beta", tr.beta);
  check_nonnegative(rd, "transport", "mu0", tr.mu0);
  check_nonnegative(rd, "transport", "eta0", tr.eta0);
  check_nonnegative(rd, "transport", "kappa0", tr.kappa0);
  check_nonnegative(rd, "transport", "zeta0", tr.zeta0);
  if (!(tr.alpha >= 0.5 && tr.alpha <= 1.0)) rd.fail("transport", "alpha", "must lie in [1/2, 1]");
  if (!(tr.beta >= 3.0))
    rd.fail("transport", "beta", "must be at least 3");
  else if (tr.beta <= 6.0)
    c.warnings.push_back("transport.beta: outside existence regime (beta > 6)");

  // [regularization]
  RegularizationParams& reg = c.model.reg;
  reg.eps = rd.number("regularization", "eps", reg.eps);
  reg.delta = rd.number("regularization", "delta", reg.delta);
  reg.Gamma = rd.number("regularization", "gamma", reg.Gamma);
  reg.gamma_weighted_heating = rd.flag("regularization", "gamma_weighted_heating", reg.gamma_weighted_heating);
  check_nonnegative(rd, "regularization", "eps", reg.eps);
  check_nonnegative(rd, "regularization", "delta", reg.delta);
  if (!(reg.Gamma > 2.0)) rd.fail("regularization", "gamma", "must exceed 2");

  // [boundary]
  c.theta_b = rd.number("boundary", "theta_b", c.theta_b);
  c.B_B = rd.vec3("boundary", "b_b", c.B_B);
  {
    const std::vector<double> gvals = rd.list<double>("boundary", "b_b_gradient", std::vector<double>(9, 0.0));
    if (gvals.size() != 9)
      rd.fail("boundary", "b_b_gradient", "expected 9 components (row-major)");
    else
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c.B_B_gradient.m[i][j] = gvals[static_cast<std::size_t>(3 * i + j)];
  }
  c.gravity = rd.vec3("boundary", "gravity", c.gravity);
  c.magnetic_bc = choose<MagneticBC>(rd, "boundary", "magnetic_bc", "tangential_dirichlet",
                                     {{"tangential_dirichlet", MagneticBC::TangentialDirichlet},
                                      {"normal_flux", MagneticBC::NormalFluxZeroEMF}});
  c.thermal_bc = choose<ThermalBC>(rd, "boundary", "thermal_bc", "dirichlet",
                                   {{"dirichlet", ThermalBC::Dirichlet}, {"insulated", ThermalBC::Insulated}});
  if (!(c.theta_b > 0.0) || !std::isfinite(c.theta_b)) rd.fail("boundary", "theta_b", "must be positive");

  // [initial]
  InitialConfig& ini = c.initial;
  ini.profile = choose<InitialProfile>(rd, "initial", "profile", "uniform",
                                       {{"uniform", InitialProfile::Uniform},
                                        {"random", InitialProfile::Random},
                                        {"reference", InitialProfile::Reference},
                                        {"checkpoint", InitialProfile::Checkpoint}});
  ini.rho = rd.number("initial", "rho", ini.rho);
  ini.theta = rd.number("initial", "theta", ini.theta);
  ini.u = rd.vec3("initial", "u", ini.u);
  ini.B = rd.vec3("initial", "b", ini.B);
  ini.amplitude = rd.number("initial", "amplitude", ini.amplitude);
  ini.checkpoint = rd.word("initial", "checkpoint", "");
  check_positive(rd, "initial", "rho", ini.rho);
  check_positive(rd, "initial", "theta", ini.theta);
  check_nonnegative(rd, "initial", "amplitude", ini.amplitude);
  if (ini.profile == InitialProfile::Checkpoint && ini.checkpoint.empty())
    rd.fail("initial", "checkpoint", "required when profile = checkpoint");

  // [control]
  StepControl& ctl = c.control;
  c.steps = rd.number("control", "steps", c.steps);
  c.t_end = rd.number("control", "t_end", c.t_end);
  c.seed = rd.number<std::uint64_t>("control", "seed", c.seed);
  ctl.cfl = rd.number("control", "cfl", ctl.cfl);
  ctl.dt_max = rd.number("control", "dt_max", ctl.dt_max);
  ctl.max_halvings = rd.number("control", "max_halvings", ctl.max_halvings);
  ctl.diffusion = choose<DiffusionTreatment>(
      rd, "control", "diffusion", "explicit",
      {{"explicit", DiffusionTreatment::Explicit}, {"lagged_implicit", DiffusionTreatment::LaggedImplicit}});
  ctl.integrator = choose<Integrator>(rd, "control", "integrator", "ssp_rk3",
                                      {{"ssp_rk3", Integrator::SspRk3}, {"heun", Integrator::Heun}});
  ctl.cg_rtol = rd.number("control", "cg_rtol", ctl.cg_rtol);
  ctl.cg_max_iterations = rd.number("control", "cg_max_iterations", ctl.cg_max_iterations);
  if (c.steps < 0) rd.fail("control", "steps", "must be nonnegative");
  check_nonnegative(rd, "control", "t_end", c.t_end);
  if (!(ctl.cfl > 0.0 && ctl.cfl <= 1.0)) rd.fail("control", "cfl", "must lie in (0, 1]");
  check_positive(rd, "control", "dt_max", ctl.dt_max);
  if (ctl.max_halvings < 0) rd.fail("control", "max_halvings", "must be nonnegative");
  if (!(ctl.cg_rtol > 0.0 && ctl.cg_rtol < 1.0)) rd.fail("control", "cg_rtol", "must lie in (0, 1)");
  if (ctl.cg_max_iterations < 1) rd.fail("control", "cg_max_iterations", "must be positive");

  // [output]
  c.output.diagnostics_every = rd.number("output", "diagnostics_every", c.output.diagnostics_every);
  c.output.checkpoint_every = rd.number("output", "checkpoint_every", c.output.checkpoint_every);
  if (c.output.diagnostics_every < 1) rd.fail("output", "diagnostics_every", "must be positive");
  if (c.output.checkpoint_every < 0) rd.fail("output", "checkpoint_every", "must be nonnegative");

  // [experiment]
  ExperimentConfig& ex = c.experiment;
  ReferenceParams& ref = ex.reference;
  {
    const std::string fam = rd.word("experiment", "family", "B");
    try {
      ref.family = parse_family(fam);
    } catch (const ConfigError&) {
      rd.fail("experiment", "family", "expected A, B or C, got '" + fam + "'");
    }
  }
  ref.amplitude = rd.number("experiment", "amplitude", ref.amplitude);
  ref.B0 = rd.number("experiment", "b0", ref.B0);
  {
    const std::vector<int> modes = rd.list<int>("experiment", "modes", {1, 1});
    if (modes.size() != 2 || modes[0] < 1 || modes[1] < 1)
      rd.fail("experiment", "modes", "expected two mode numbers >= 1");
    else
      ref.modes = {modes[0], modes[1]};
  }
  ref.r0 = ini.rho;
  ref.Theta0 = c.theta_b;
  ref.extents = c.grid.extents;
  ref.magnetic_bc = c.magnetic_bc;
  ex.resolutions = rd.list<int>("experiment", "resolutions", ex.resolutions);
  ex.t_end = rd.number("experiment", "t_end", ex.t_end);
  ex.limit_resolution = rd.number("experiment", "limit_resolution", ex.limit_resolution);
  ex.schedule = rd.list<double>("experiment", "schedule", ex.schedule);
  check_nonnegative(rd, "experiment", "amplitude", ref.amplitude);
  check_positive(rd, "experiment", "t_end", ex.t_end);
  if (ex.resolutions.empty()) rd.fail("experiment", "resolutions", "must not be empty");
  for (int n : ex.resolutions)
    if (n < BoxGrid::kMinCells) {
      rd.fail("experiment", "resolutions", "entries must be at least " + std::to_string(BoxGrid::kMinCells));
      break;
    }
  if (ex.limit_resolution < BoxGrid::kMinCells)
    rd.fail("experiment", "limit_resolution", "must be at least " + std::to_string(BoxGrid::kMinCells));
  for (std::size_t i = 0; i < ex.schedule.size(); ++i)
    if (!(ex.schedule[i] > 0.0) || (i > 0 && !(ex.schedule[i] < ex.schedule[i - 1]))) {
      rd.fail("experiment", "schedule", "must be positive and strictly decreasing");
      break;
    }

  rd.report_unknown();

  // Boundary data on the grid; only meaningful once the grid itself is valid.
  if (rd.violations.empty()) {
    const BoundarySpec bc = c.boundary();
    const double div = background_divergence(c.grid, bc, 0.0);
    double scale = 0.0;
    for (const auto& row : c.B_B_gradient.m)
      for (double v : row) scale = std::max(scale, std::abs(v));
    if (div > 1e-10 * (1.0 + scale))
      rd.fail("boundary", "b_b_gradient", "background field must be solenoidal (|div B_B| = " + std::to_string(div) + ")");
  }

  if (!rd.violations.empty()) throw ConfigValidationError(std::move(rd.violations));
  c.effective = std::move(rd.effective);
  return c;
}

}  // namespace

BoundarySpec RunConfig::boundary() const {
  BoundarySpec bc = BoundarySpec::uniform(theta_b, B_B, gravity, magnetic_bc);
  bc.thermal_bc = thermal_bc;
  bool linear = false;
  for (const auto& row : B_B_gradient.m)
    for (double v : row) linear = linear || v != 0.0;
  if (linear) {
    const Vec3 base = B_B;
    const Mat3 grad = B_B_gradient;
    bc.B_B = [base, grad](double, const Vec3& x) {
      Vec3 b = base;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i] += grad.m[i][j] * x[j];
      return b;
    };
  }
  return bc;
}

ConfigValidationError::ConfigValidationError(std::vector<std::string> violations)
    : ConfigError([&] {
        std::string all;
        for (const auto& v : violations) all += (all.empty() ? "" : "\n") + v;
        return all;
      }()),
      violations_(std::move(violations)) {}

Overrides environment_overrides() {
  Overrides out;
  const std::string prefix = "MHD__";
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(prefix.size(), eq - prefix.size());
    const auto sep = name.find("__");
    const std::string path =
        sep == std::string::npos ? lower(name) : lower(name.substr(0, sep)) + "." + lower(name.substr(sep + 2));
    out[path] = entry.substr(eq + 1);
  }
  return out;
}

RunConfig parse_config_text(const std::string& text, const Overrides& overrides) {
  std::vector<std::string> violations;
  Sections sections = load(text, violations);
  return build(std::move(sections), overrides, std::move(violations));
}

RunConfig parse_config(const std::string& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read configuration '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) throw IoError("error while reading configuration '" + path + "'");
  return parse_config_text(text.str(), overrides);
}

}  // namespace mhd
