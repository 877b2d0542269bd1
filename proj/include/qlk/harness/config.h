#pragma once

// JSON configuration shared by every CLI command. Unknown keys are errors so
// typos surface instead of silently falling back to defaults.

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "qlk/harness/experiments.h"

namespace qlk::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AppConfig {
  GridParams grid;
  RewardParams rewards;
  TrainConfig train;
  // Rollout-capped by default so runs are reproducible; set rollout_cap to
  // null in a config file to use the wall-clock allowance instead.
  PlannerConfig planner{.rollout_cap = 2000};
  std::vector<int> support_levels{1, 2};
  std::vector<double> support_lambdas{1.0, 3.0, 5.0};
  WorldParams world;
  TerminationRules rules;
  BaselineParams baseline;
  ScenarioDefaults scenario;
  int max_steps = 120;
  std::string qtables_path = "qtables.bin";
  std::uint64_t seed = 1;

  // `run` uses this scenario verbatim when present instead of generating
  // one from the seed.
  std::optional<ScenarioConfig> scenario_override;

  struct Belief {
    std::vector<int> opponent_counts{1, 2};
    int runs = 100;
    std::vector<double> lambdas{1.0, 3.0, 5.0};
    std::vector<bool> info_gain{true, false};
    std::vector<std::int64_t> budgets{2000};
    int steps = 12;
  } belief;

  struct LaneChange {
    std::vector<int> scenarios{1, 2, 6};
    std::vector<std::string> planners{"ours", "ours-no-ig", "baseline"};
    int runs = 50;
    std::int64_t budget = 2000;
  } lane_change;

  std::shared_ptr<const ProfileSupport> support() const;
  EpisodeSettings episode() const;
  BeliefExperiment belief_experiment() const;
  LaneChangeExperiment lane_change_experiment() const;
  void validate() const;
};

// `path` == "default" yields the built-in defaults.
AppConfig load_config(const std::string& path);
AppConfig parse_config(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const AppConfig& cfg);

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& s);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

}  // namespace qlk::harness
