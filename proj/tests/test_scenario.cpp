#include "octmpc/scenario.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace octmpc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json scalar_doc() {
  std::ifstream in(std::string(OCTMPC_SCENARIO_DIR) + "/scalar.json");
  return json::parse(in);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("octmpc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(OCTMPC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Scenario, ParsesBundledScalar) {
  const auto cfg = parse_scenario(scalar_doc());
  EXPECT_EQ(cfg.name, "scalar");
  EXPECT_EQ(cfg.horizon, 3);
  EXPECT_EQ(cfg.system.nx(), 1);
  EXPECT_EQ(cfg.controllers.size(), 3u);
  EXPECT_EQ(cfg.grid.size(), 101);
  EXPECT_EQ(cfg.output_dir, "out/scalar");
}

TEST(Scenario, EveryBundledScenarioLoads) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(OCTMPC_SCENARIO_DIR)) {
    if (e.path().extension() != ".json" || e.path().parent_path().filename() == "plants") continue;
    EXPECT_NO_THROW(load_scenario(e.path().string())) << e.path();
    EXPECT_NO_THROW(load_scenario(e.path().string(), "ci")) << e.path();
    ++n;
  }
  EXPECT_GE(n, 4);
}

TEST(Scenario, UnknownKeysAreRejected) {
  auto j = scalar_doc();
  j["horizn"] = 4;
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["system"]["C"] = json::array({json::array({1})});
  EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(Scenario, StructuralErrors) {
  auto j = scalar_doc();
  j["schema"] = "other";
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["version"] = 2;
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j.erase("grid");
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["system"]["B"] = json::array({json::array({1, 2})});
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["system"]["disturbance"] = {{"D", {{1}, {-1}}}, {"d", {1, 1}}};
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["grid"]["lower"] = {6};
  EXPECT_THROW(parse_scenario(j), ConfigError);
  j = scalar_doc();
  j["weights"]["R"] = {{-1}};
  EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(Scenario, ProfilesMergeOverBase) {
  auto j = scalar_doc();
  j["profiles"] = {{"ci", {{"grid", {{"counts", {11}}}}, {"horizon", 2}}}};
  const auto base = parse_scenario(j);
  const auto ci = parse_scenario(j, "ci");
  EXPECT_EQ(base.grid.size(), 101);
  EXPECT_EQ(ci.grid.size(), 11);
  EXPECT_EQ(ci.horizon, 2);
  EXPECT_NE(base.config_hash, ci.config_hash);
  EXPECT_NE(base.design_hash, ci.design_hash);
  EXPECT_THROW(parse_scenario(j, "nightly"), ConfigError);
}

TEST(Scenario, DesignHashIgnoresSimulationSettings) {
  auto j = scalar_doc();
  const auto a = parse_scenario(j);
  j["monte_carlo"]["runs"] = 3;
  const auto b = parse_scenario(j);
  EXPECT_NE(a.config_hash, b.config_hash);
  EXPECT_EQ(a.design_hash, b.design_hash);
}

TEST(Scenario, ContinuousTimeIsDiscretized) {
  auto j = scalar_doc();
  j["system"]["time"] = "continuous";
  j["system"]["sampling_time"] = 0.5;
  j["system"]["A"] = {{-1}};
  const auto cfg = parse_scenario(j);
  EXPECT_NEAR(cfg.system.A(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(cfg.system.B(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(cfg.system.Bw(0, 0), 0.5, 1e-15);
}

TEST(Scenario, ArtifactRoundTripAndMismatch) {
  const auto dir = scratch("artifact");
  const auto cfg = parse_scenario(scalar_doc());
  const auto d = design_offline(cfg.system, cfg.weights, cfg.horizon, cfg.design);
  save_artifact((dir / "design.json").string(), cfg, d);
  const auto back = load_artifact((dir / "design.json").string(), cfg);
  EXPECT_LE((back.t.t - d.t.t).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((back.terminal.K_f - d.terminal.K_f).cwiseAbs().maxCoeff(), 1e-15);

  auto j = scalar_doc();
  j["horizon"] = 4;
  EXPECT_THROW(load_artifact((dir / "design.json").string(), parse_scenario(j)), ConfigError);
}

TEST(Scenario, CsvHeaders) {
  const auto dir = scratch("csv");
  const auto cfg = parse_scenario(scalar_doc());
  const auto d = design_offline(cfg.system, cfg.weights, cfg.horizon, cfg.design);
  const auto oct = make_controller(ControllerKind::kOct, cfg.system, cfg.weights, d);
  const auto tmpc = make_controller(ControllerKind::kTmpc, cfg.system, cfg.weights, d);

  GridSpec g{{0}, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0), {3}};
  write_roa_csv((dir / "a" / "roa.csv").string(), estimate_roa({&tmpc, &oct}, g, 1));
  EXPECT_EQ(first_line(dir / "a" / "roa.csv"), "point,x0,feasible_tmpc,seconds_tmpc,feasible_oct,seconds_oct");

  const auto costs = compare_costs(tmpc, oct, cfg.system, cfg.weights, {Eigen::VectorXd::Zero(1)}, 2, 5, 1, 1);
  write_costs_csv((dir / "costs.csv").string(), costs, "tmpc", "oct");
  EXPECT_EQ(first_line(dir / "costs.csv"),
            "point,x0,feasible_tmpc,feasible_oct,mean_cost_tmpc,mean_cost_oct,ratio,n_runs");

  write_timing_csv((dir / "timing.csv").string(), timing_report({&oct}, {Eigen::VectorXd::Zero(1)}));
  EXPECT_EQ(first_line(dir / "timing.csv"), "controller,samples,mean_s,median_s,p95_s,variables,equalities,inequalities");

  const auto tr = simulate(oct, cfg.system, cfg.weights, Eigen::VectorXd::Constant(1, 1.0),
                           DisturbanceSource::zero(1), {4, 1, 0.0});
  write_trace_csv((dir / "trace.csv").string(), tr);
  EXPECT_EQ(first_line(dir / "trace.csv"), "k,x0,u0,w0,stage_cost,objective,solve_seconds,status");
  std::ifstream in(dir / "trace.csv");
  int lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  EXPECT_EQ(lines, 1 + tr.steps() + 1);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string cfg = std::string(OCTMPC_SCENARIO_DIR) + "/scalar.json";
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(run_cli("design --config " + cfg + out), 0);
  EXPECT_TRUE(fs::exists(dir / "design.json"));
  EXPECT_TRUE(fs::exists(dir / "design_summary.json"));
  EXPECT_EQ(run_cli("simulate --profile ci --config " + cfg + out + " --artifact " + (dir / "design.json").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "simulate_summary.json"));

  // the scalar OCT region exceeds the FPD region at N = 3, reported as a property violation
  EXPECT_EQ(run_cli("roa --config " + cfg + out), 4);
  EXPECT_TRUE(fs::exists(dir / "roa.csv"));

  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("roa --config " + cfg + " --profile nightly" + out), 2);

  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli("design --config " + (dir / "broken.json").string() + out), 2);

  auto j = scalar_doc();
  j["horizon"] = 4;
  std::ofstream(dir / "other.json") << j.dump();
  EXPECT_EQ(run_cli("simulate --config " + (dir / "other.json").string() + out + " --artifact " +
                    (dir / "design.json").string()),
            2);
}
