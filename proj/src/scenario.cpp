#include "octmpc/scenario.hpp"

#include "octmpc/json_eigen.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#ifndef OCTMPC_GIT_REVISION
#define OCTMPC_GIT_REVISION "unknown"
#endif

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string git_revision() { return OCTMPC_GIT_REVISION; }

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

const json& need(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return obj.at(key);
}

// Box bounds given as {"lower": [...], "upper": [...]} or {"norm_inf": r}.
std::pair<VectorXd, VectorXd> parse_box(const json& j, int dim, const std::string& where) {
  check_keys(j, {"lower", "upper", "norm_inf"}, where);
  VectorXd lo, hi;
  if (j.contains("norm_inf")) {
    if (j.contains("lower") || j.contains("upper")) throw ConfigError(where + ": give either norm_inf or lower/upper");
    const double r = j.at("norm_inf").get<double>();
    lo = VectorXd::Constant(dim, -r);
    hi = VectorXd::Constant(dim, r);
  } else {
    lo = vector_from_json(need(j, "lower", where));
    hi = vector_from_json(need(j, "upper", where));
  }
  if (lo.size() != dim || hi.size() != dim) {
    throw ConfigError(where + ": expected " + std::to_string(dim) + " bounds");
  }
  if ((lo.array() > hi.array()).any()) throw ConfigError(where + ": lower bound exceeds upper bound");
  return {lo, hi};
}

LinearSystem parse_system(const json& j) {
  const std::string where = "system";
  check_keys(j, {"time", "sampling_time", "A", "B", "Bw", "F", "G", "b", "state_box", "input_box",
                 "disturbance_box", "disturbance", "notes"},
             where);
  LinearSystem sys;
  MatrixXd A = matrix_from_json(need(j, "A", where));
  MatrixXd B = matrix_from_json(need(j, "B", where));
  MatrixXd Bw = matrix_from_json(need(j, "Bw", where));
  const std::string time = j.value("time", "discrete");
  if (time == "continuous") {
    const double T = need(j, "sampling_time", where).get<double>();
    if (!(T > 0.0)) throw ConfigError("system: sampling_time must be positive");
    if (A.rows() != A.cols() || B.rows() != A.rows() || Bw.rows() != A.rows()) {
      throw ConfigError("system: matrix dimensions are inconsistent");
    }
    const auto d = forward_euler_discretize(A, B, Bw, T);
    A = d.A;
    B = d.B;
    Bw = d.Bw;
  } else if (time != "discrete") {
    throw ConfigError("system: time must be 'discrete' or 'continuous'");
  } else if (j.contains("sampling_time")) {
    throw ConfigError("system: sampling_time only applies to continuous systems");
  }
  sys.A = A;
  sys.B = B;
  sys.Bw = Bw;
  const int nx = sys.nx(), nu = sys.nu(), nw = sys.nw();

  const bool explicit_rows = j.contains("F") || j.contains("G") || j.contains("b");
  const bool boxes = j.contains("state_box") || j.contains("input_box");
  if (explicit_rows == boxes) throw ConfigError("system: give either F, G, b or state_box and input_box");
  if (explicit_rows) {
    sys.F = matrix_from_json(need(j, "F", where), nx);
    sys.G = matrix_from_json(need(j, "G", where), nu);
    sys.b = vector_from_json(need(j, "b", where));
  } else {
    const auto [xl, xu] = parse_box(need(j, "state_box", where), nx, "system.state_box");
    const auto [ul, uu] = parse_box(need(j, "input_box", where), nu, "system.input_box");
    set_box_constraints(sys, xl, xu, ul, uu);
  }

  if (j.contains("disturbance_box") == j.contains("disturbance")) {
    throw ConfigError("system: give exactly one of disturbance_box or disturbance");
  }
  if (j.contains("disturbance_box")) {
    const auto [wl, wu] = parse_box(j.at("disturbance_box"), nw, "system.disturbance_box");
    sys.W = Polytope::box(wl, wu);
  } else {
    const json& d = j.at("disturbance");
    check_keys(d, {"D", "d"}, "system.disturbance");
    sys.W = Polytope(matrix_from_json(need(d, "D", "system.disturbance"), nw),
                     vector_from_json(need(d, "d", "system.disturbance")));
  }

  const auto report = validate(sys);
  if (!report.ok()) {
    std::string msg = "system is invalid:";
    for (const auto& issue : report.issues) {
      if (issue.severity == Severity::kError) msg += " [" + issue.code + "] " + issue.message;
    }
    throw ConfigError(msg);
  }
  return sys;
}

GridSpec parse_grid(const json& j, int nx, const std::string& where) {
  check_keys(j, {"dims", "lower", "upper", "counts"}, where);
  GridSpec g;
  g.dims = need(j, "dims", where).get<std::vector<int>>();
  g.lower = vector_from_json(need(j, "lower", where));
  g.upper = vector_from_json(need(j, "upper", where));
  g.counts = need(j, "counts", where).get<std::vector<int>>();
  const auto n = g.dims.size();
  if (n == 0) throw ConfigError(where + ": dims must not be empty");
  if (static_cast<std::size_t>(g.lower.size()) != n || static_cast<std::size_t>(g.upper.size()) != n ||
      g.counts.size() != n) {
    throw ConfigError(where + ": dims, lower, upper and counts must have equal length");
  }
  std::set<int> seen;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.dims[i] < 0 || g.dims[i] >= nx || !seen.insert(g.dims[i]).second) {
      throw ConfigError(where + ": invalid or repeated state index");
    }
    if (g.counts[i] < 1) throw ConfigError(where + ": counts must be positive");
    if (g.lower[static_cast<int>(i)] > g.upper[static_cast<int>(i)]) throw ConfigError(where + ": lower > upper");
  }
  return g;
}

int positive(const json& j, const std::string& key, int def, const std::string& where) {
  const int v = j.value(key, def);
  if (v < 1) throw ConfigError(where + ": " + key + " must be positive");
  return v;
}

ScenarioConfig parse_impl(json doc, const std::string& profile, const std::filesystem::path& base) {
  if (!doc.is_object()) throw ConfigError("scenario: expected a JSON object");
  if (doc.value("schema", "") != kScenarioSchema) {
    throw ConfigError(std::string("scenario: schema must be '") + kScenarioSchema + "'");
  }
  if (!doc.contains("version") || !doc.at("version").is_number_integer() ||
      doc.at("version").get<int>() != kSchemaVersion) {
    throw ConfigError("scenario: unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!profile.empty()) {
    const bool known = doc.contains("profiles") && doc.at("profiles").contains(profile);
    if (known) {
      doc.merge_patch(doc.at("profiles").at(profile));
    } else if (profile != "ci" && profile != "full") {
      throw ConfigError("scenario: unknown profile '" + profile + "'");
    }
  }
  doc.erase("profiles");
  if (doc.contains("system_file")) {
    if (doc.contains("system")) throw ConfigError("scenario: give either system or system_file");
    const auto path = base / doc.at("system_file").get<std::string>();
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario: system_file '" + path.string() + "' not found");
    doc["system"] = json::parse(in);
    doc.erase("system_file");
  }
  check_keys(doc, {"schema", "version", "name", "description", "system", "weights", "horizon", "controllers",
                   "design", "grid", "monte_carlo", "costs", "output_dir"},
             "scenario");

  ScenarioConfig cfg;
  cfg.name = need(doc, "name", "scenario").get<std::string>();
  cfg.system = parse_system(need(doc, "system", "scenario"));
  const int nx = cfg.system.nx(), nu = cfg.system.nu();

  const json& wj = need(doc, "weights", "scenario");
  check_keys(wj, {"Q", "R"}, "weights");
  cfg.weights = wj.get<CostWeights>();
  const auto wrep = validate(cfg.weights, nx, nu);
  if (!wrep.ok()) throw ConfigError("weights are invalid: " + wrep.issues.front().message);

  cfg.horizon = positive(doc, "horizon", 0, "scenario");

  cfg.controllers.clear();
  for (const auto& name : doc.value("controllers", std::vector<std::string>{"tmpc", "oct", "fpd"})) {
    cfg.controllers.push_back(controller_kind_from_string(name));
  }
  if (cfg.controllers.empty()) throw ConfigError("scenario: controller list is empty");

  if (doc.contains("design")) {
    const json& dj = doc.at("design");
    check_keys(dj, {"fallback", "terminal_image"}, "design");
    if (dj.contains("fallback")) cfg.design.tightening.fallback = fallback_from_string(dj.at("fallback"));
    if (dj.contains("terminal_image")) cfg.design.terminal_image = terminal_image_from_string(dj.at("terminal_image"));
  }

  cfg.grid = parse_grid(need(doc, "grid", "scenario"), nx, "grid");

  if (doc.contains("monte_carlo")) {
    const json& mj = doc.at("monte_carlo");
    check_keys(mj, {"runs", "steps", "seed", "disturbances", "starts"}, "monte_carlo");
    cfg.monte_carlo.runs = positive(mj, "runs", cfg.monte_carlo.runs, "monte_carlo");
    cfg.monte_carlo.steps = positive(mj, "steps", cfg.monte_carlo.steps, "monte_carlo");
    cfg.monte_carlo.seed = mj.value("seed", cfg.monte_carlo.seed);
    if (mj.contains("disturbances")) {
      cfg.monte_carlo.modes.clear();
      for (const auto& m : mj.at("disturbances").get<std::vector<std::string>>()) {
        const auto mode = disturbance_mode_from_string(m);
        if (mode == DisturbanceMode::kSequence) throw ConfigError("monte_carlo: use uniform or vertex disturbances");
        cfg.monte_carlo.modes.push_back(mode);
      }
    }
    if (mj.contains("starts")) {
      for (const auto& s : mj.at("starts")) {
        VectorXd x = vector_from_json(s);
        if (x.size() != nx) throw ConfigError("monte_carlo: start has wrong dimension");
        cfg.monte_carlo.starts.push_back(std::move(x));
      }
    }
  }

  if (doc.contains("costs")) {
    const json& cj = doc.at("costs");
    check_keys(cj, {"grid", "runs", "steps", "seed"}, "costs");
    cfg.costs.grid = cj.contains("grid") ? parse_grid(cj.at("grid"), nx, "costs.grid") : cfg.grid;
    cfg.costs.runs = positive(cj, "runs", cfg.costs.runs, "costs");
    cfg.costs.steps = positive(cj, "steps", cfg.costs.steps, "costs");
    cfg.costs.seed = cj.value("seed", cfg.costs.seed);
  } else {
    cfg.costs.grid = cfg.grid;
  }

  cfg.output_dir = doc.value("output_dir", "out/" + cfg.name);
  cfg.effective = doc;
  cfg.config_hash = fnv1a64(doc.dump());
  const json design_key = {{"system", cfg.system},
                           {"weights", cfg.weights},
                           {"horizon", cfg.horizon},
                           {"fallback", to_string(cfg.design.tightening.fallback)},
                           {"terminal_image", to_string(cfg.design.terminal_image)}};
  cfg.design_hash = fnv1a64(design_key.dump());
  return cfg;
}

}  // namespace

ScenarioConfig parse_scenario(const json& j, const std::string& profile) {
  try {
    return parse_impl(j, profile, std::filesystem::current_path());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::string& path, const std::string& profile) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return parse_impl(std::move(doc), profile, std::filesystem::path(path).parent_path());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

namespace {

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void save_artifact(const std::string& path, const ScenarioConfig& cfg, const OfflineDesign& design) {
  write_json(path, {{"schema", kArtifactSchema},
                    {"version", kSchemaVersion},
                    {"scenario", cfg.name},
                    {"config_hash", hash_hex(cfg.config_hash)},
                    {"design_hash", hash_hex(cfg.design_hash)},
                    {"git_revision", git_revision()},
                    {"design", design}});
}

OfflineDesign load_artifact(const std::string& path, const ScenarioConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open artifact '" + path + "'");
  try {
    const json j = json::parse(in);
    if (j.value("schema", "") != kArtifactSchema || j.value("version", 0) != kSchemaVersion) {
      throw ConfigError("'" + path + "' is not a supported design artifact");
    }
    const std::string expected = hash_hex(cfg.design_hash);
    const std::string found = j.value("design_hash", "");
    if (found != expected) {
      throw ConfigError("artifact '" + path + "' was designed for configuration " + found + ", config has " +
                        expected);
    }
    return j.at("design").get<OfflineDesign>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("artifact '" + path + "' is malformed: " + e.what());
  }
}

json summary_header(const ScenarioConfig& cfg, const std::string& command) {
  return {{"schema", kSummarySchema},
          {"version", kSchemaVersion},
          {"command", command},
          {"scenario", cfg.name},
          {"config_hash", hash_hex(cfg.config_hash)},
          {"design_hash", hash_hex(cfg.design_hash)},
          {"git_revision", git_revision()}};
}

void write_roa_csv(const std::string& path, const RoaReport& r) {
  auto out = open_out(path);
  out << "point";
  for (int i = 0; i < r.nx; ++i) out << ",x" << i;
  for (const auto& c : r.controllers) out << ",feasible_" << c << ",seconds_" << c;
  out << "\n";
  const int np = r.grid.size();
  for (int p = 0; p < np; ++p) {
    const VectorXd x = r.grid.point(p, r.nx);
    out << p;
    for (int i = 0; i < r.nx; ++i) out << "," << x[i];
    for (std::size_t c = 0; c < r.controllers.size(); ++c) {
      out << "," << int(r.feasible[c][static_cast<std::size_t>(p)]) << "," << r.seconds[c][static_cast<std::size_t>(p)];
    }
    out << "\n";
  }
}

void write_costs_csv(const std::string& path, const std::vector<CostPoint>& points, const std::string& a,
                     const std::string& b) {
  auto out = open_out(path);
  const int nx = points.empty() ? 0 : static_cast<int>(points.front().x0.size());
  out << "point";
  for (int i = 0; i < nx; ++i) out << ",x" << i;
  out << ",feasible_" << a << ",feasible_" << b << ",mean_cost_" << a << ",mean_cost_" << b << ",ratio,n_runs\n";
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto& cp = points[p];
    out << p;
    for (int i = 0; i < nx; ++i) out << "," << cp.x0[i];
    out << "," << int(cp.feasible_a) << "," << int(cp.feasible_b) << "," << cp.mean_a << "," << cp.mean_b << ","
        << cp.ratio << "," << cp.runs << "\n";
  }
}

void write_timing_csv(const std::string& path, const std::vector<TimingStats>& stats) {
  auto out = open_out(path);
  out << "controller,samples,mean_s,median_s,p95_s,variables,equalities,inequalities\n";
  for (const auto& s : stats) {
    out << s.controller << "," << s.samples << "," << s.mean << "," << s.median << "," << s.p95 << ","
        << s.size.variables << "," << s.size.equalities << "," << s.size.inequalities << "\n";
  }
}

void write_trace_csv(const std::string& path, const ClosedLoopTrace& tr) {
  auto out = open_out(path);
  const auto nx = tr.x.rows(), nu = tr.u.rows(), nw = tr.w.rows();
  out << "k";
  for (Eigen::Index i = 0; i < nx; ++i) out << ",x" << i;
  for (Eigen::Index i = 0; i < nu; ++i) out << ",u" << i;
  for (Eigen::Index i = 0; i < nw; ++i) out << ",w" << i;
  out << ",stage_cost,objective,solve_seconds,status\n";
  for (int k = 0; k <= tr.steps(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < nx; ++i) out << "," << tr.x(i, k);
    if (k < tr.steps()) {
      for (Eigen::Index i = 0; i < nu; ++i) out << "," << tr.u(i, k);
      for (Eigen::Index i = 0; i < nw; ++i) out << "," << tr.w(i, k);
      out << "," << tr.stage_cost[k] << "," << tr.objective[k] << "," << tr.solve_seconds[k] << ","
          << to_string(tr.status[static_cast<std::size_t>(k)]);
    } else {
      out << std::string(static_cast<std::size_t>(nu + nw + 4), ',');
    }
    out << "\n";
  }
}

}  // namespace octmpc
