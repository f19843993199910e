#pragma once

#include "octmpc/controllers.hpp"
#include "octmpc/lti_model.hpp"
#include "octmpc/offline_design.hpp"
#include "octmpc/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace octmpc {

inline constexpr const char* kScenarioSchema = "octmpc-scenario";
inline constexpr const char* kArtifactSchema = "octmpc-design";
inline constexpr const char* kSummarySchema = "octmpc-summary";
inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MonteCarloSpec {
  int runs = 50;
  int steps = 60;
  std::uint64_t seed = 1;
  std::vector<DisturbanceMode> modes{DisturbanceMode::kUniform, DisturbanceMode::kVertex};
  std::vector<Eigen::VectorXd> starts;  // empty: sampled from the OCT-feasible grid points
};

struct CostSpec {
  GridSpec grid;
  int runs = 50;
  int steps = 60;
  std::uint64_t seed = 1;
};

struct ScenarioConfig {
  std::string name;
  LinearSystem system;
  CostWeights weights;
  int horizon = 0;
  std::vector<ControllerKind> controllers;
  DesignOptions design;
  GridSpec grid;
  MonteCarloSpec monte_carlo;
  CostSpec costs;
  std::string output_dir;

  nlohmann::json effective;  // config after applying the profile
  std::uint64_t config_hash = 0;
  std::uint64_t design_hash = 0;  // system, weights, horizon and design options only
};

std::uint64_t fnv1a64(std::string_view data);
std::string hash_hex(std::uint64_t h);

/// Parses and validates a scenario. `profile` selects an entry of the
/// optional "profiles" object, merged over the base document.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::string& profile = "");
/// Reads a JSON file; relative "system_file" references resolve against its directory.
ScenarioConfig load_scenario(const std::string& path, const std::string& profile = "");

std::string git_revision();

void save_artifact(const std::string& path, const ScenarioConfig& cfg, const OfflineDesign& design);
/// Throws ConfigError when the artifact was produced from a different design configuration.
OfflineDesign load_artifact(const std::string& path, const ScenarioConfig& cfg);

/// Common header of every JSON summary.
nlohmann::json summary_header(const ScenarioConfig& cfg, const std::string& command);

void write_roa_csv(const std::string& path, const RoaReport& report);
void write_costs_csv(const std::string& path, const std::vector<CostPoint>& points, const std::string& a,
                     const std::string& b);
void write_timing_csv(const std::string& path, const std::vector<TimingStats>& stats);
void write_trace_csv(const std::string& path, const ClosedLoopTrace& trace);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace octmpc
