#include "qlk/harness/world.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qlk::harness {

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

void IDMParams::validate() const {
  if (!(v0 > 0 && T_headway > 0 && a_max > 0 && b_comfort > 0 && s0 > 0 &&
        delta > 0)) {
    throw std::invalid_argument("IDM parameters must all be positive");
  }
  if (!(follow_gap_min_m > 0 && follow_gap_max_m >= follow_gap_min_m)) {
    throw std::invalid_argument("IDM follow gap band is invalid");
  }
}

double idm_acceleration(double gap_m, double v, double lead_v,
                        const IDMParams& p) {
  if (!(gap_m > 0.0)) return -p.b_hard();
  const double free_term = 1.0 - std::pow(v / p.v0, p.delta);
  double a = p.a_max * free_term;
  if (std::isfinite(gap_m)) {
    const double s_star =
        p.s0 + std::max(0.0, v * p.T_headway +
                                 v * (v - lead_v) /
                                     (2.0 * std::sqrt(p.a_max * p.b_comfort)));
    a -= p.a_max * (s_star / gap_m) * (s_star / gap_m);
  }
  return std::clamp(a, -p.b_hard(), p.a_max);
}

void WorldParams::validate() const {
  if (!(vehicle_length_m > 0 && indicate_offset_m > 0 &&
        ego_speed_step_mps > 0 && yield_range_m >= 0)) {
    throw std::invalid_argument("world parameters must be positive");
  }
}

WorldSnapshot World::snapshot() const {
  WorldSnapshot s;
  s.time_s = time_s;
  s.ego = ego;
  s.vehicles.push_back({kBlockageId, blockage_x_m, 0, 0.0, true});
  for (const WorldOpponent& o : opponents) {
    s.vehicles.push_back({o.id, o.x_m, 1, o.v_mps, false});
  }
  return s;
}

bool merged(const EgoPose& ego) { return ego.lane == Lane::kTarget; }

double lateral_offset(const EgoPose& ego, const WorldParams& p) {
  if (merged(ego)) return std::numeric_limits<double>::infinity();
  return ego.indicating ? p.indicate_offset_m : 0.0;
}

bool ego_is_lead_for(const World& w, const WorldOpponent& opp,
                     const WorldParams& p) {
  const double ahead = w.ego.x_m - opp.x_m;
  if (ahead < 0.0) return false;
  if (merged(w.ego)) return true;
  const auto* idm = std::get_if<IDMDriver>(&opp.behavior);
  return idm && idm->yielding &&
         lateral_offset(w.ego, p) >= p.indicate_offset_m &&
         ahead <= p.yield_range_m;
}

double yielding_controller(const World& w, std::size_t opponent,
                           const WorldParams& p) {
  const WorldOpponent& me = w.opponents.at(opponent);
  const auto* idm = std::get_if<IDMDriver>(&me.behavior);
  if (!idm) throw std::invalid_argument("opponent is not an IDM driver");

  double lead_dx = std::numeric_limits<double>::infinity();
  double lead_v = 0.0;
  for (std::size_t j = 0; j < w.opponents.size(); ++j) {
    if (j == opponent) continue;
    const WorldOpponent& o = w.opponents[j];
    const double dx = o.x_m - me.x_m;
    // Coincident centers resolve toward the lower id as the leader.
    const bool ahead = dx > 0.0 || (dx == 0.0 && o.id < me.id);
    if (ahead && dx < lead_dx) {
      lead_dx = dx;
      lead_v = o.v_mps;
    }
  }
  if (ego_is_lead_for(w, me, p)) {
    const double dx = w.ego.x_m - me.x_m;
    if (dx < lead_dx) {
      lead_dx = dx;
      lead_v = w.ego.v_mps;
    }
  }
  const double gap = std::isfinite(lead_dx) ? lead_dx - p.vehicle_length_m
                                            : lead_dx;
  return idm_acceleration(gap, me.v_mps, lead_v, idm->params);
}

GridState opponent_view(const World& w, std::size_t opponent,
                        const GridParams& grid) {
  const WorldOpponent& o = w.opponents.at(opponent);
  GridState s;
  s.ego = {grid.center_cell(), w.ego.lane, velocity_level(w.ego.v_mps, grid)};
  s.indicating = w.ego.indicating && !merged(w.ego);
  s.agents.push_back(
      {grid.center_cell() +
           static_cast<int>(std::lround((o.x_m - w.ego.x_m) / grid.cell_length_m)),
       Lane::kTarget, velocity_level(o.v_mps, grid)});
  return s;
}

HumanAction scripted_qlk_step(const GridState& view, std::size_t slot,
                              const QHierarchy& tables, int k, double lambda,
                              Rng& rng) {
  const PolicyDist p = quantal_policy(tables.human_level(k),
                                      pair_state_index(view, slot, tables.grid),
                                      lambda);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int a = 0; a < kNumHumanActions - 1; ++a) {
    acc += p[a];
    if (u < acc) return static_cast<HumanAction>(a);
  }
  return static_cast<HumanAction>(kNumHumanActions - 1);
}

bool intervals_overlap_during(double d0, double d1, double length) {
  if ((d0 <= 0.0 && d1 >= 0.0) || (d0 >= 0.0 && d1 <= 0.0)) return true;
  return std::min(std::abs(d0), std::abs(d1)) < length;
}

void world_step(World& w, EgoAction ego_action, const WorldParams& p,
                const GridParams& grid, const QHierarchy* tables, Rng& rng) {
  const double dt = grid.step_duration_s;
  const double quantum = grid.cell_length_m / dt;
  const double v_cap = grid.max_vel * quantum;

  // Opponents decide on the pre-step world.
  std::vector<double> new_v(w.opponents.size());
  w.last_scripted_actions.clear();
  for (std::size_t i = 0; i < w.opponents.size(); ++i) {
    const WorldOpponent& o = w.opponents[i];
    if (const auto* q = std::get_if<ScriptedQLK>(&o.behavior)) {
      if (!tables) throw std::invalid_argument("scripted opponents need Q-tables");
      const HumanAction a = scripted_qlk_step(opponent_view(w, i, grid), 0,
                                              *tables, q->k, q->lambda, rng);
      w.last_scripted_actions.emplace_back(o.id, a);
      const int level = apply_velocity(velocity_level(o.v_mps, grid), a,
                                       grid.max_vel);
      new_v[i] = level * quantum;
    } else {
      new_v[i] =
          std::max(0.0, o.v_mps + yielding_controller(w, i, p) * dt);
    }
  }

  EgoPose ego = w.ego;
  const bool from_ego_lane = ego.lane == Lane::kEgo;
  switch (ego_action) {
    case EgoAction::kAccelerate:
      ego.v_mps = std::min(v_cap, ego.v_mps + p.ego_speed_step_mps);
      break;
    case EgoAction::kDecelerate:
      ego.v_mps = std::max(0.0, ego.v_mps - p.ego_speed_step_mps);
      break;
    case EgoAction::kMaintain:
      break;
    case EgoAction::kIndicateIntent:
      if (from_ego_lane) ego.indicating = true;
      break;
    case EgoAction::kLaneChange:
      ego.lane = Lane::kTarget;
      ego.indicating = false;
      break;
  }
  const bool sweeps_ego_lane = from_ego_lane;
  const bool sweeps_target = !from_ego_lane || ego.lane == Lane::kTarget;
  ego.x_m += ego.v_mps * dt;

  bool collided = false;
  if (sweeps_ego_lane) {
    collided |= intervals_overlap_during(w.ego.x_m - w.blockage_x_m,
                                         ego.x_m - w.blockage_x_m,
                                         p.vehicle_length_m);
  }
  for (std::size_t i = 0; i < w.opponents.size(); ++i) {
    WorldOpponent& o = w.opponents[i];
    const double x1 = o.x_m + new_v[i] * dt;
    if (sweeps_target) {
      collided |= intervals_overlap_during(w.ego.x_m - o.x_m, ego.x_m - x1,
                                           p.vehicle_length_m);
    }
    o.x_m = x1;
    o.v_mps = new_v[i];
  }

  w.ego = ego;
  w.time_s += dt;
  w.collided = w.collided || collided;
  w.stopped_s = ego.v_mps == 0.0 ? w.stopped_s + dt : 0.0;
  if (merged(ego) && !w.merged_at_s) w.merged_at_s = w.time_s;
}

}  // namespace qlk::harness
