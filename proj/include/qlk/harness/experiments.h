#pragma once

// Batch runners for the belief-accuracy and lane-change protocols.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qlk/harness/scenario.h"

namespace qlk::harness {

struct LaneChangeRow {
  std::string scenario;  // "1-opponent", ...
  std::string planner;   // "ours", "ours-no-ig", "baseline"
  int runs = 0;
  std::optional<double> mean_time_to_merge_s;  // over merged episodes
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double merge_rate = 0.0;
};

struct BeliefRow {
  int opponents = 1;
  std::int64_t budget = 0;  // rollouts per step
  bool with_info_gain = true;
  std::string k_combination;  // e.g. "1-2"; "all" for the aggregate
  int runs = 0;
  double accuracy = 0.0;
};

struct MetricsTable {
  std::vector<LaneChangeRow> lane_change;
  std::vector<BeliefRow> belief;
};

void write_lane_change_csv(const std::vector<LaneChangeRow>& rows,
                           std::ostream& out);
void write_belief_csv(const std::vector<BeliefRow>& rows, std::ostream& out);

struct EpisodeSettings {
  GridParams grid;
  RewardParams rewards;
  WorldParams world;
  TerminationRules rules;
  int max_steps = 120;
};

// Planner names accepted by make_policy: "ours", "ours-no-ig", "baseline".
std::unique_ptr<EgoPolicy> make_policy(const std::string& name,
                                       const PlannerConfig& planner,
                                       const BaselineParams& baseline,
                                       const WorldParams& world,
                                       std::shared_ptr<const QHierarchy> tables,
                                       std::shared_ptr<const ProfileSupport> support);

struct LaneChangeExperiment {
  std::vector<int> scenarios{1, 2, 6};
  std::vector<std::string> planners{"ours", "ours-no-ig", "baseline"};
  int runs = 50;
  std::uint64_t master_seed = 1;
  PlannerConfig planner;
  BaselineParams baseline;
  ScenarioDefaults scenario;
  EpisodeSettings episode;
};

std::vector<LaneChangeRow> eval_lane_change(
    const LaneChangeExperiment& exp, std::shared_ptr<const QHierarchy> tables,
    std::shared_ptr<const ProfileSupport> support);

// Seed of episode `index` of scenario `opponents`; identical across planners.
std::uint64_t lane_change_seed(std::uint64_t master, int opponents, int index);

struct BeliefExperiment {
  std::vector<int> opponent_counts{1, 2};
  int runs = 100;  // per k-combination
  std::vector<double> lambdas{1.0, 3.0, 5.0};
  std::vector<bool> info_gain{true, false};
  std::vector<std::int64_t> budgets{2000};
  int steps = 12;
  std::uint64_t master_seed = 1;
  PlannerConfig planner;
  ScenarioDefaults scenario;
  EpisodeSettings episode;
};

// Fraction of scripted opponents whose final belief puts more than 0.5 on
// their true level. Throws if any opponent is not scripted.
double belief_accuracy(const ScenarioConfig& scenario,
                       const std::map<int, Belief>& beliefs,
                       std::shared_ptr<const ProfileSupport> support);

// One belief episode; returns the per-opponent accuracy fraction.
double run_belief_episode(const ScenarioConfig& scenario,
                          const PlannerConfig& planner,
                          const EpisodeSettings& episode,
                          std::shared_ptr<const QHierarchy> tables,
                          std::shared_ptr<const ProfileSupport> support);

std::vector<BeliefRow> eval_belief_accuracy(
    const BeliefExperiment& exp, std::shared_ptr<const QHierarchy> tables,
    std::shared_ptr<const ProfileSupport> support);

}  // namespace qlk::harness
