#include "qlk/grid_env.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace qlk {

namespace {

constexpr std::array<std::string_view, kNumEgoActions> kEgoActionNames = {
    "Accelerate", "Decelerate", "Maintain", "IndicateIntent", "LaneChange"};
constexpr std::array<std::string_view, kNumHumanActions> kHumanActionNames = {
    "Accelerate", "Decelerate", "Maintain"};

std::int64_t phys_code(const AgentPhysState& s, const GridParams& p) {
  return (static_cast<std::int64_t>(s.cell) * p.lanes +
          static_cast<int>(s.lane)) *
             (p.max_vel + 1) +
         s.vel;
}

AgentPhysState phys_from_code(std::int64_t code, const GridParams& p) {
  AgentPhysState s;
  s.vel = static_cast<int>(code % (p.max_vel + 1));
  code /= (p.max_vel + 1);
  s.lane = static_cast<Lane>(code % p.lanes);
  s.cell = static_cast<int>(code / p.lanes);
  return s;
}

void check_indexable(const AgentPhysState& s, const GridParams& p,
                     const char* who) {
  if (!in_window(s, p) || s.vel < 0 || s.vel > p.max_vel) {
    throw std::out_of_range(std::string(who) + " outside grid: cell " +
                            std::to_string(s.cell) + ", vel " +
                            std::to_string(s.vel));
  }
}

}  // namespace

std::string_view to_string(EgoAction a) {
  return kEgoActionNames[static_cast<int>(a)];
}

std::string_view to_string(HumanAction a) {
  return kHumanActionNames[static_cast<int>(a)];
}

std::optional<EgoAction> parse_ego_action(std::string_view s) {
  for (int i = 0; i < kNumEgoActions; ++i) {
    if (kEgoActionNames[i] == s) return static_cast<EgoAction>(i);
  }
  return std::nullopt;
}

std::optional<HumanAction> parse_human_action(std::string_view s) {
  for (int i = 0; i < kNumHumanActions; ++i) {
    if (kHumanActionNames[i] == s) return static_cast<HumanAction>(i);
  }
  return std::nullopt;
}

void GridParams::validate() const {
  if (length_cells < 4) {
    throw std::invalid_argument("length_cells must be >= 4, got " +
                                std::to_string(length_cells));
  }
  if (lanes != 2) {
    throw std::invalid_argument("lanes must be 2, got " +
                                std::to_string(lanes));
  }
  if (max_vel < 1) {
    throw std::invalid_argument("max_vel must be >= 1, got " +
                                std::to_string(max_vel));
  }
  if (!(cell_length_m > 0.0) || !(step_duration_s > 0.0)) {
    throw std::invalid_argument(
        "cell_length_m and step_duration_s must be positive");
  }
  if (vehicle_cells < 1 || vehicle_cells >= length_cells) {
    throw std::invalid_argument("vehicle_cells must be in [1, length_cells)");
  }
}

void RewardParams::validate() const {
  if (!(off_lane_penalty < 0.0)) {
    throw std::invalid_argument("off_lane_penalty must be negative");
  }
  if (!(collision_penalty < off_lane_penalty)) {
    throw std::invalid_argument(
        "collision_penalty must be below off_lane_penalty");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1)");
  }
  if (!(progress_weight >= 0.0)) {
    throw std::invalid_argument("progress_weight must be non-negative");
  }
}

int apply_velocity(int vel, HumanAction a, int max_vel) {
  switch (a) {
    case HumanAction::kAccelerate:
      return std::min(vel + 1, max_vel);
    case HumanAction::kDecelerate:
      return std::max(vel - 1, 0);
    case HumanAction::kMaintain:
      break;
  }
  return vel;
}

int apply_velocity(int vel, EgoAction a, int max_vel) {
  switch (a) {
    case EgoAction::kAccelerate:
      return std::min(vel + 1, max_vel);
    case EgoAction::kDecelerate:
      return std::max(vel - 1, 0);
    default:
      break;
  }
  return vel;
}

bool sweeps_within(int d0, int d1, int extent) {
  if (d0 == 0 || d1 == 0 || (d0 < 0) != (d1 < 0)) return true;
  return std::min(std::abs(d0), std::abs(d1)) < extent;
}

bool in_window(const AgentPhysState& s, const GridParams& params) {
  return s.cell >= 0 && s.cell < params.length_cells;
}

StepOutcome step(const GridState& state, EgoAction ego_action,
                 std::span<const HumanAction> human_actions,
                 const GridParams& params, const RewardParams& rewards) {
  if (human_actions.size() != state.agents.size()) {
    throw ContractViolation("step: " + std::to_string(human_actions.size()) +
                            " human actions for " +
                            std::to_string(state.agents.size()) + " agents");
  }
  StepOutcome out;
  GridState& next = out.next_state;
  next = state;

  const bool changing_lane =
      ego_action == EgoAction::kLaneChange && state.ego.lane != Lane::kTarget;
  next.ego.vel = apply_velocity(state.ego.vel, ego_action, params.max_vel);
  next.ego.cell = state.ego.cell + next.ego.vel;
  if (ego_action == EgoAction::kIndicateIntent) {
    next.indicating = true;
  } else if (ego_action == EgoAction::kLaneChange) {
    next.ego.lane = Lane::kTarget;
    next.indicating = false;
  }

  // During a lane change the ego sweeps both lanes for the whole step.
  auto ego_sweeps_lane = [&](Lane lane) {
    return lane == state.ego.lane || (changing_lane && lane == Lane::kTarget);
  };

  bool collided = false;
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    AgentPhysState& a = next.agents[i];
    a.vel = apply_velocity(a.vel, human_actions[i], params.max_vel);
    a.cell += a.vel;
    if (ego_sweeps_lane(a.lane) &&
        sweeps_within(state.agents[i].cell - state.ego.cell,
                      a.cell - next.ego.cell, params.vehicle_cells)) {
      collided = true;
    }
  }
  for (const CellPos& o : state.obstacles) {
    if (ego_sweeps_lane(o.lane) &&
        sweeps_within(o.cell - state.ego.cell, o.cell - next.ego.cell,
                      params.vehicle_cells)) {
      collided = true;
    }
  }

  out.collided = collided;
  out.ego_on_target = next.ego.lane == Lane::kTarget;
  out.off_lane_reward = out.ego_on_target ? 0.0 : rewards.off_lane_penalty;
  out.collision_reward = collided ? rewards.collision_penalty : 0.0;
  out.reward = out.off_lane_reward + out.collision_reward;
  return out;
}

std::int64_t num_states(const GridParams& params, int roster) {
  const std::int64_t per_entity = static_cast<std::int64_t>(
                                      params.length_cells) *
                                  params.lanes * (params.max_vel + 1);
  std::int64_t n = 2;
  for (int i = 0; i <= roster; ++i) n *= per_entity;
  return n;
}

std::int64_t enumerate_state_index(const GridState& state,
                                   const GridParams& params, int roster) {
  if (static_cast<int>(state.agents.size()) != roster) {
    throw ContractViolation("enumerate_state_index: expected " +
                            std::to_string(roster) + " agents, got " +
                            std::to_string(state.agents.size()));
  }
  if (!state.obstacles.empty()) {
    throw ContractViolation(
        "enumerate_state_index: indexed states carry no obstacles");
  }
  const std::int64_t per_entity = static_cast<std::int64_t>(
                                      params.length_cells) *
                                  params.lanes * (params.max_vel + 1);
  check_indexable(state.ego, params, "ego");
  std::int64_t index = phys_code(state.ego, params);
  for (const auto& a : state.agents) {
    check_indexable(a, params, "agent");
    index = index * per_entity + phys_code(a, params);
  }
  return index * 2 + (state.indicating ? 1 : 0);
}

GridState state_from_index(std::int64_t index, const GridParams& params,
                           int roster) {
  if (index < 0 || index >= num_states(params, roster)) {
    throw std::out_of_range("state index " + std::to_string(index) +
                            " out of range");
  }
  const std::int64_t per_entity = static_cast<std::int64_t>(
                                      params.length_cells) *
                                  params.lanes * (params.max_vel + 1);
  GridState s;
  s.indicating = (index % 2) == 1;
  index /= 2;
  s.agents.resize(roster);
  for (int i = roster - 1; i >= 0; --i) {
    s.agents[i] = phys_from_code(index % per_entity, params);
    index /= per_entity;
  }
  s.ego = phys_from_code(index, params);
  return s;
}

GridState canonical_pair(const GridState& state, std::size_t slot,
                         const GridParams& params) {
  if (slot >= state.agents.size()) {
    throw ContractViolation("canonical_pair: slot out of range");
  }
  GridState pair;
  pair.ego = state.ego;
  pair.indicating = state.indicating;
  pair.agents.push_back(state.agents[slot]);
  AgentPhysState& agent = pair.agents.front();
  agent.vel = std::clamp(agent.vel, 0, params.max_vel);
  pair.ego.vel = std::clamp(pair.ego.vel, 0, params.max_vel);

  const int last = params.length_cells - 1;
  const int lo = std::min(pair.ego.cell, agent.cell);
  const int hi = std::max(pair.ego.cell, agent.cell);
  if (hi - lo <= last) {
    const int shift = (last - (hi - lo)) / 2 - lo;
    pair.ego.cell += shift;
    agent.cell += shift;
  } else if (pair.ego.cell <= agent.cell) {
    pair.ego.cell = 0;
    agent.cell = last;
  } else {
    pair.ego.cell = last;
    agent.cell = 0;
  }
  return pair;
}

std::int64_t pair_state_index(const GridState& state, std::size_t slot,
                              const GridParams& params) {
  return enumerate_state_index(canonical_pair(state, slot, params), params, 1);
}

int velocity_level(double v_mps, const GridParams& params) {
  const double cells_per_step = v_mps * params.step_duration_s /
                                params.cell_length_m;
  return std::clamp(static_cast<int>(std::lround(cells_per_step)), 0,
                    params.max_vel);
}

GridMapping map_from_world(std::span<const WorldVehicle> world,
                           const EgoPose& ego, const GridParams& params,
                           std::optional<double> frame_center_x) {
  const double center_x = frame_center_x.value_or(ego.x_m);
  const double half_window_m =
      0.5 * params.length_cells * params.cell_length_m;
  const int center = params.center_cell();

  GridMapping m;
  m.state.ego.cell =
      center +
      static_cast<int>(std::lround((ego.x_m - center_x) / params.cell_length_m));
  m.state.ego.lane = ego.lane;
  m.state.ego.vel = velocity_level(ego.v_mps, params);
  m.state.indicating = ego.indicating && ego.lane != Lane::kTarget;

  for (const WorldVehicle& v : world) {
    if (v.lane != 0 && v.lane != 1) continue;
    const double dx = v.x_m - center_x;
    if (std::abs(dx) > half_window_m) continue;
    const int cell =
        center + static_cast<int>(std::lround(dx / params.cell_length_m));
    if (cell < 0 || cell >= params.length_cells) continue;
    const Lane lane = static_cast<Lane>(v.lane);
    if (v.is_static) {
      m.state.obstacles.push_back({cell, lane});
      continue;
    }
    m.state.agents.push_back({cell, lane, velocity_level(v.v_mps, params)});
    m.id_map.push_back(v.id);
  }
  return m;
}

}  // namespace qlk
