#pragma once

// Deterministic 1-D-per-lane world that stands in for the driving simulator,
// plus the opponent behaviour models that move inside it.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "qlk/grid_env.h"
#include "qlk/levelk.h"
#include "qlk/planner.h"
#include "qlk/quantal.h"

namespace qlk::harness {

using Rng = std::mt19937_64;

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);

struct IDMParams {
  double v0 = 4.0;  // desired speed (m/s)
  double T_headway = 1.0;
  double a_max = 1.5;
  double b_comfort = 2.0;
  double s0 = 3.0;
  double delta = 4.0;
  double follow_gap_min_m = 5.0;
  double follow_gap_max_m = 10.0;

  void validate() const;
  double b_hard() const { return 2.0 * b_comfort; }
};

// Bumper-to-bumper gap; +infinity means no lead vehicle.
double idm_acceleration(double gap_m, double v, double lead_v,
                        const IDMParams& p);

struct ScriptedQLK {
  int k = 1;
  double lambda = 1.0;
  bool operator==(const ScriptedQLK&) const = default;
};

struct IDMDriver {
  IDMParams params;
  bool yielding = false;
};

using Behavior = std::variant<ScriptedQLK, IDMDriver>;

struct WorldParams {
  double vehicle_length_m = 4.5;
  double indicate_offset_m = 0.5;
  double ego_speed_step_mps = 1.0;
  double yield_range_m = 10.0;

  void validate() const;
};

struct WorldOpponent {
  int id = 0;
  double x_m = 0.0;  // vehicle center, target lane
  double v_mps = 0.0;
  Behavior behavior;
};

// World ids: the blockage is 0, opponents count up from 1.
inline constexpr int kBlockageId = 0;

struct World {
  double time_s = 0.0;
  EgoPose ego;
  double blockage_x_m = 100.0;
  std::vector<WorldOpponent> opponents;
  bool collided = false;
  double stopped_s = 0.0;  // consecutive time at standstill
  std::optional<double> merged_at_s;
  // Discrete actions taken by scripted opponents on the last step.
  std::vector<std::pair<int, HumanAction>> last_scripted_actions;

  WorldSnapshot snapshot() const;
};

// Lateral displacement of the ego from its own lane center toward the
// target lane; the full lane offset once merged.
double lateral_offset(const EgoPose& ego, const WorldParams& p);
bool merged(const EgoPose& ego);

// True if the ego counts as this opponent's lead vehicle.
bool ego_is_lead_for(const World& w, const WorldOpponent& opp,
                     const WorldParams& p);

// IDM acceleration of a car-following opponent, taking the ego as its lead
// when ego_is_lead_for holds (and the ego is nearer than the same-lane lead).
double yielding_controller(const World& w, std::size_t opponent,
                           const WorldParams& p);

// Ego plus opponent `opponent` in an ego-centred grid frame without clipping
// to the window; index it with pair_state_index(view, 0, grid).
GridState opponent_view(const World& w, std::size_t opponent,
                        const GridParams& grid);

HumanAction scripted_qlk_step(const GridState& view, std::size_t slot,
                              const QHierarchy& tables, int k, double lambda,
                              Rng& rng);

// Advances the world by one step of grid.step_duration_s. Scripted
// opponents need `tables`.
void world_step(World& w, EgoAction ego_action, const WorldParams& p,
                const GridParams& grid, const QHierarchy* tables, Rng& rng);

// True iff two centers moving linearly from separation d0 to d1 come within
// `length` of each other.
bool intervals_overlap_during(double d0, double d1, double length);

}  // namespace qlk::harness
