// Command-line front end: design | simulate | roa | bench.

#include "octmpc/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>

using namespace octmpc;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kInfeasible = 3, kProperty = 4, kSolver = 5 };

struct Options {
  std::string config;
  std::string artifact;
  std::string out;
  std::string profile = "full";
  int jobs = 0;
  std::optional<std::uint64_t> seed;
};

struct Context {
  ScenarioConfig cfg;
  std::string out;
  std::string artifact;
};

Context load(const Options& o) {
  Context c;
  c.cfg = load_scenario(o.config, o.profile);
  if (o.seed) {
    c.cfg.monte_carlo.seed = *o.seed;
    c.cfg.costs.seed = *o.seed;
  }
  c.out = o.out.empty() ? c.cfg.output_dir : o.out;
  c.artifact = o.artifact.empty() ? (std::filesystem::path(c.out) / "design.json").string() : o.artifact;
  return c;
}

std::string path_in(const Context& c, const std::string& file) { return (std::filesystem::path(c.out) / file).string(); }

struct Controllers {
  std::vector<std::unique_ptr<MpcController>> owned;
  std::vector<const MpcController*> list;
  const MpcController* find(ControllerKind k) const {
    for (const auto* c : list) {
      if (c->kind() == k) return c;
    }
    return nullptr;
  }
};

Controllers build_controllers(const Context& c, const OfflineDesign& d) {
  Controllers out;
  for (auto kind : c.cfg.controllers) {
    out.owned.push_back(std::make_unique<MpcController>(make_controller(kind, c.cfg.system, c.cfg.weights, d)));
    out.list.push_back(out.owned.back().get());
  }
  return out;
}

int cmd_design(const Options& o) {
  const Context c = load(o);
  const OfflineDesign d = design_offline(c.cfg.system, c.cfg.weights, c.cfg.horizon, c.cfg.design);
  save_artifact(c.artifact, c.cfg, d);
  json s = summary_header(c.cfg, "design");
  s["artifact"] = c.artifact;
  s["t_norm"] = d.t.t.norm();
  s["t_tmpc_norm"] = d.t_tmpc.t.norm();
  s["socp_status"] = d.socp_status;
  s["socp_iterations"] = d.socp_iterations;
  s["terminal_set_rows"] = d.terminal.X_T.num_rows();
  s["fpd_terminal_set_rows"] = d.fpd_terminal_set.num_rows();
  s["design_seconds"] = d.design_seconds;
  write_json(path_in(c, "design_summary.json"), s);
  std::printf("scenario        %s (config %s)\n", c.cfg.name.c_str(), hash_hex(c.cfg.config_hash).c_str());
  std::printf("||t||_2         %.6g\n", d.t.t.norm());
  std::printf("||t_tmpc||_2    %.6g\n", d.t_tmpc.t.norm());
  std::printf("solver status   %s (%d iterations)\n", d.socp_status.c_str(), d.socp_iterations);
  std::printf("terminal rows   %d\n", d.terminal.X_T.num_rows());
  std::printf("artifact        %s\n", c.artifact.c_str());
  return kOk;
}

// Feasible starts for a controller: configured ones, else grid points in a
// seeded order.
std::vector<VectorXd> pick_starts(const Context& c, const MpcController& ctrl, int count) {
  if (!c.cfg.monte_carlo.starts.empty()) return c.cfg.monte_carlo.starts;
  const int np = c.cfg.grid.size();
  std::vector<int> order(static_cast<std::size_t>(np));
  for (int i = 0; i < np; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(c.cfg.monte_carlo.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<VectorXd> out;
  for (int p : order) {
    if (static_cast<int>(out.size()) == count) break;
    const VectorXd x = c.cfg.grid.point(p, c.cfg.system.nx());
    if (ctrl.step(x).feasible) out.push_back(x);
  }
  return out;
}

int cmd_simulate(const Options& o) {
  const Context c = load(o);
  const OfflineDesign d = load_artifact(c.artifact, c.cfg);
  const Controllers cs = build_controllers(c, d);
  const auto& mc = c.cfg.monte_carlo;
  json s = summary_header(c.cfg, "simulate");
  int exit_code = kOk;
  int total_violations = 0;
  for (const auto* ctrl : cs.list) {
    const auto starts = pick_starts(c, *ctrl, mc.runs);
    if (starts.empty()) throw ConfigError("no feasible start for " + ctrl->name());
    json cj;
    int violations = 0, steps = 0, reduced = 0;
    double worst = -std::numeric_limits<double>::infinity(), dyn = 0.0, limsup = 0.0;
    for (std::size_t m = 0; m < mc.modes.size(); ++m) {
      const auto mode = mc.modes[m];
      const auto source = mode == DisturbanceMode::kVertex ? DisturbanceSource::vertex(c.cfg.system.W)
                                                            : DisturbanceSource::uniform(c.cfg.system.W);
      for (int r = 0; r < mc.runs; ++r) {
        const VectorXd& x0 = starts[static_cast<std::size_t>(r) % starts.size()];
        const std::string file = "traces/" + ctrl->name() + "_" + to_string(mode) + "_" + std::to_string(r) + ".csv";
        const SimulationOptions opt{mc.steps, derive_seed(mc.seed, static_cast<std::uint64_t>(r), m), 0.0};
        ClosedLoopTrace tr;
        try {
          tr = simulate(*ctrl, c.cfg.system, c.cfg.weights, x0, source, opt);
        } catch (const SimulationError& e) {
          write_trace_csv(path_in(c, file), e.trace());
          std::fprintf(stderr, "error: %s (partial trace %s)\n", e.what(), file.c_str());
          s["infeasible_run"] = {{"controller", ctrl->name()}, {"trace", file}, {"step", e.step()}};
          write_json(path_in(c, "simulate_summary.json"), s);
          return kInfeasible;
        }
        write_trace_csv(path_in(c, file), tr);
        for (int k = 0; k < tr.steps(); ++k) {
          violations += c.cfg.system.constraint_violation(tr.x.col(k), tr.u.col(k)) > 1e-6;
        }
        worst = std::max(worst, constraint_violation(c.cfg.system, tr));
        dyn = std::max(dyn, dynamics_error(c.cfg.system, tr));
        steps += tr.steps();
        reduced += tr.reduced_accuracy_steps;
        for (int k = tr.steps() / 2; k <= tr.steps(); ++k) limsup = std::max(limsup, tr.x.col(k).lpNorm<Eigen::Infinity>());
      }
    }
    cj["runs"] = mc.runs * static_cast<int>(mc.modes.size());
    cj["steps"] = steps;
    cj["violations"] = violations;
    cj["max_constraint_value"] = worst;
    cj["max_dynamics_error"] = dyn;
    cj["reduced_accuracy_steps"] = reduced;
    cj["late_state_bound"] = limsup;
    s["controllers"][ctrl->name()] = cj;
    total_violations += violations;
    std::printf("%-8s runs %4d  steps %6d  violations %d  max(Fx+Gu-b) %.3g  late |x|inf <= %.3g\n",
                ctrl->name().c_str(), cj["runs"].get<int>(), steps, violations, worst, limsup);
  }
  s["violations"] = total_violations;
  write_json(path_in(c, "simulate_summary.json"), s);
  if (total_violations > 0) exit_code = kProperty;
  return exit_code;
}

json roa_json(const RoaReport& r) {
  json j;
  for (std::size_t i = 0; i < r.controllers.size(); ++i) {
    j["counts"][r.controllers[i]] = r.counts[i];
    j["percent"][r.controllers[i]] = r.percent[i];
  }
  j["points"] = r.grid.size();
  j["nesting_violations"] = json::array();
  for (const auto& v : r.violations) {
    j["nesting_violations"].push_back({{"point", v.point}, {"inner", v.inner}, {"outer", v.outer}});
  }
  return j;
}

int cmd_roa(const Options& o) {
  const Context c = load(o);
  const OfflineDesign d = load_artifact(c.artifact, c.cfg);
  const Controllers cs = build_controllers(c, d);
  const RoaReport r = estimate_roa(cs.list, c.cfg.grid, o.jobs);
  write_roa_csv(path_in(c, "roa.csv"), r);
  json s = summary_header(c.cfg, "roa");
  s["roa"] = roa_json(r);
  write_json(path_in(c, "roa_summary.json"), s);
  for (std::size_t i = 0; i < r.controllers.size(); ++i) {
    std::printf("%-8s feasible %6d / %d  (%.1f%%)\n", r.controllers[i].c_str(), r.counts[i], r.grid.size(), r.percent[i]);
  }
  std::printf("nesting violations: %zu\n", r.violations.size());
  return r.violations.empty() ? kOk : kProperty;
}

int cmd_bench(const Options& o) {
  const Context c = load(o);
  const OfflineDesign d = load_artifact(c.artifact, c.cfg);
  const Controllers cs = build_controllers(c, d);
  json s = summary_header(c.cfg, "bench");

  // timing over grid points feasible for every controller, solved sequentially
  const RoaReport r = estimate_roa(cs.list, c.cfg.grid, o.jobs);
  std::vector<VectorXd> common;
  for (int p = 0; p < r.grid.size(); ++p) {
    bool all = true;
    for (const auto& f : r.feasible) all = all && f[static_cast<std::size_t>(p)];
    if (all) common.push_back(r.grid.point(p, r.nx));
  }
  const auto stats = timing_report(cs.list, common);
  write_timing_csv(path_in(c, "timing.csv"), stats);
  for (const auto& t : stats) {
    s["timing"][t.controller] = {{"samples", t.samples},        {"mean_s", t.mean},
                                 {"median_s", t.median},        {"p95_s", t.p95},
                                 {"variables", t.size.variables}, {"constraints", t.size.constraints()}};
    std::printf("%-8s n %5d  mean %.3f ms  median %.3f ms  p95 %.3f ms  vars %d  cons %d\n", t.controller.c_str(),
                t.samples, 1e3 * t.mean, 1e3 * t.median, 1e3 * t.p95, t.size.variables, t.size.constraints());
  }
  const auto* oct = cs.find(ControllerKind::kOct);
  const auto* tmpc = cs.find(ControllerKind::kTmpc);
  const auto* fpd = cs.find(ControllerKind::kFpd);
  if (oct && fpd) {
    double mo = 0.0, mf = 0.0;
    for (const auto& t : stats) {
      if (t.controller == "oct") mo = t.mean;
      if (t.controller == "fpd") mf = t.mean;
    }
    s["fpd_over_oct_time"] = mo > 0.0 ? mf / mo : 0.0;
    std::printf("mean time fpd / oct = %.2f\n", mo > 0.0 ? mf / mo : 0.0);
  }
  if (oct && tmpc) {
    std::vector<VectorXd> starts;
    for (int p = 0; p < c.cfg.costs.grid.size(); ++p) starts.push_back(c.cfg.costs.grid.point(p, c.cfg.system.nx()));
    const auto pts = compare_costs(*tmpc, *oct, c.cfg.system, c.cfg.weights, starts, c.cfg.costs.runs,
                                   c.cfg.costs.steps, c.cfg.costs.seed, o.jobs);
    write_costs_csv(path_in(c, "costs.csv"), pts, "tmpc", "oct");
    int both = 0, within = 0, only_one = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& p : pts) {
      if (p.feasible_a && p.feasible_b) {
        ++both;
        within += std::abs(p.ratio - 1.0) <= 0.03;
        lo = std::min(lo, p.ratio);
        hi = std::max(hi, p.ratio);
      } else if (p.feasible_a || p.feasible_b) {
        ++only_one;
      }
    }
    s["costs"] = {{"points_both_feasible", both},
                  {"points_one_feasible", only_one},
                  {"within_3_percent", within},
                  {"min_ratio", both ? lo : 0.0},
                  {"max_ratio", hi},
                  {"runs", c.cfg.costs.runs},
                  {"steps", c.cfg.costs.steps}};
    std::printf("cost ratio tmpc/oct: %d points, %d within 3%%, range [%.4f, %.4f]\n", both, within, both ? lo : 0.0,
                hi);
  }
  write_json(path_in(c, "bench_summary.json"), s);
  return kOk;
}

int run(const std::string& cmd, const Options& o) {
  try {
    if (cmd == "design") return cmd_design(o);
    if (cmd == "simulate") return cmd_simulate(o);
    if (cmd == "roa") return cmd_roa(o);
    return cmd_bench(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DesignError& e) {
    std::fprintf(stderr, "design error: %s\n", e.what());
    switch (e.kind) {
      case DesignError::Kind::kInvalidInput:
        return kConfig;
      case DesignError::Kind::kSolverFailure:
        return kSolver;
      default:
        return kInfeasible;
    }
  } catch (const SimulationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInfeasible;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimized constraint tightening MPC: offline design, simulation and benchmarks"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"design", "compute the offline design and write the artifact"},
      {"simulate", "closed-loop Monte-Carlo runs, one trace CSV per run"},
      {"roa", "feasibility grid sweep (roa.csv); exit 4 on a nesting violation"},
      {"bench", "solve-time statistics (timing.csv) and closed-loop cost ratios (costs.csv)"}};
  for (const auto& [name, text] : help) {
    auto* sub = app.add_subcommand(name, text);
    sub->add_option("--config", o.config, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (default: output_dir of the scenario)");
    sub->add_option("--profile", o.profile, "scenario profile")->check(CLI::IsMember({"ci", "full"}));
    if (name != "design") {
      sub->add_option("--artifact", o.artifact, "design artifact (default: <out>/design.json)");
      sub->add_option("--jobs", o.jobs, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
      sub->add_option("--seed", seed, "override the Monte-Carlo and cost seeds");
    } else {
      sub->add_option("--artifact", o.artifact, "artifact path (default: <out>/design.json)");
    }
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    if (name != "design" && sub->count("--seed")) o.seed = seed;
    return run(name, o);
  }
  return kConfig;
}
