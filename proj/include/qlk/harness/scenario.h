#pragma once

// Scenario construction, the simulated environment the planners drive, and
// the conservative gap-acceptance baseline.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "qlk/harness/world.h"
#include "qlk/planner.h"

namespace qlk::harness {

struct OpponentSpec {
  Behavior behavior;
  double start_x_m = 0.0;
  double start_v_mps = 3.0;
};

struct ScenarioConfig {
  double road_length_m = 200.0;
  double blockage_position_m = 100.0;
  EgoPose ego_start;  // x = 0, ego lane, standing
  std::vector<OpponentSpec> opponents;
  double traffic_init_v_mps = 3.0;
  std::uint64_t seed = 0;

  void validate(int k_max) const;
};

World make_world(const ScenarioConfig& cfg, const GridParams& grid);

struct TerminationRules {
  bool stop_on_merge = true;
  bool blockage_timeout = true;
  double blockage_timeout_gap_m = 10.0;  // bumper gap to the stopped vehicle
  double stopped_limit_s = 15.0;
};

// Outcome judge shared by every environment.
std::optional<Outcome> judge(const World& w, const TerminationRules& rules,
                             const WorldParams& p);

class SimEnvironment : public Environment {
 public:
  SimEnvironment(const ScenarioConfig& cfg, GridParams grid,
                 RewardParams rewards, WorldParams world, TerminationRules rules,
                 std::shared_ptr<const QHierarchy> tables);

  WorldSnapshot snapshot() const override { return world_.snapshot(); }
  double execute(EgoAction action) override;
  std::optional<Outcome> status() const override;

  const World& world() const { return world_; }

 private:
  GridParams grid_;
  RewardParams rewards_;
  WorldParams params_;
  TerminationRules rules_;
  std::shared_ptr<const QHierarchy> tables_;
  World world_;
  Rng rng_;
};

struct BaselineParams {
  double front_gap_m = 12.0;
  double rear_gap_m = 8.0;
  double max_closing_mps = 1.0;
  double blockage_brake_m = 15.0;
  double cruise_mps = 3.0;

  void validate() const;
};

struct TargetLaneGaps {
  double front_m = std::numeric_limits<double>::infinity();
  double rear_m = std::numeric_limits<double>::infinity();
  double rear_closing_mps = 0.0;
};

TargetLaneGaps target_lane_gaps(const WorldSnapshot& s, double vehicle_length_m);
// Bumper gap from the ego to the nearest stopped vehicle ahead on its lane.
double blockage_gap(const WorldSnapshot& s, double vehicle_length_m);

EgoAction baseline_gap_acceptance(const WorldSnapshot& s,
                                  const BaselineParams& b,
                                  const WorldParams& p);

class BaselinePolicy : public EgoPolicy {
 public:
  BaselinePolicy(BaselineParams b, WorldParams p);
  std::string name() const override { return "baseline"; }
  void observe(const WorldSnapshot& snapshot) override { last_ = snapshot; }
  EgoAction act() override;

 private:
  BaselineParams b_;
  WorldParams p_;
  WorldSnapshot last_;
};

// --- generators --------------------------------------------------------------

struct ScenarioDefaults {
  IDMParams idm;
  double vehicle_length_m = 4.5;
  double idm_v0_min = 2.0;
  double idm_v0_max = 5.0;
  double yielding_probability = 0.5;
  // Lane-change scenarios: one opponent starts in [lo, hi] around the ego;
  // two opponents start one behind, one ahead; larger counts form a platoon
  // whose rearmost car starts in [platoon_lo, platoon_hi].
  double single_lo_m = -8.0;
  double single_hi_m = 8.0;
  double behind_lo_m = -10.0;
  double behind_hi_m = -4.0;
  double ahead_lo_m = 4.0;
  double ahead_hi_m = 10.0;
  double platoon_lo_m = -40.0;
  double platoon_hi_m = -20.0;
  // Belief scenarios: a single scripted opponent starts in the single band;
  // with two, one starts in the near band and one in the far band, both
  // behind the ego so each is overtaken by or overtakes the ego in turn.
  double belief_single_lo_m = -20.0;
  double belief_single_hi_m = -12.0;
  double belief_near_lo_m = -20.0;
  double belief_near_hi_m = -12.0;
  double belief_far_lo_m = -30.0;
  double belief_far_hi_m = -22.0;
};

ScenarioConfig lane_change_scenario(int opponents, std::uint64_t seed,
                                    const ScenarioDefaults& d);

// Scripted ql-k opponents with the given profiles, placed near the ego.
ScenarioConfig belief_scenario(std::span<const ScriptedQLK> profiles,
                               std::uint64_t seed, const ScenarioDefaults& d);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace qlk::harness
