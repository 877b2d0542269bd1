#include "qlk/harness/scenario.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qlk::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

IDMDriver random_idm(const ScenarioDefaults& d, Rng& rng) {
  IDMDriver drv;
  drv.params = d.idm;
  drv.params.v0 = uniform(rng, d.idm_v0_min, d.idm_v0_max);
  drv.yielding = uniform01(rng) < d.yielding_probability;
  return drv;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ (index * 0xd1b54a32d192ed03ULL));
}

void ScenarioConfig::validate(int k_max) const {
  if (!(blockage_position_m > ego_start.x_m)) {
    throw std::invalid_argument("blockage must lie ahead of the ego start");
  }
  if (!(road_length_m > blockage_position_m)) {
    throw std::invalid_argument("road must extend past the blockage");
  }
  if (ego_start.v_mps < 0.0 || traffic_init_v_mps < 0.0) {
    throw std::invalid_argument("speeds must be non-negative");
  }
  for (const OpponentSpec& o : opponents) {
    if (o.start_v_mps < 0.0) {
      throw std::invalid_argument("opponent speed must be non-negative");
    }
    if (const auto* q = std::get_if<ScriptedQLK>(&o.behavior)) {
      if (q->k < 1 || q->k > k_max) {
        throw std::invalid_argument("scripted opponent level " +
                                    std::to_string(q->k) + " outside 1.." +
                                    std::to_string(k_max));
      }
      if (!(q->lambda > 0.0)) {
        throw std::invalid_argument("scripted opponent lambda must be > 0");
      }
    } else {
      std::get<IDMDriver>(o.behavior).params.validate();
    }
  }
}

World make_world(const ScenarioConfig& cfg, const GridParams& grid) {
  World w;
  w.ego = cfg.ego_start;
  w.blockage_x_m = cfg.blockage_position_m;
  const double quantum = grid.cell_length_m / grid.step_duration_s;
  int id = kBlockageId + 1;
  for (const OpponentSpec& o : cfg.opponents) {
    WorldOpponent wo{id++, o.start_x_m, o.start_v_mps, o.behavior};
    // Scripted opponents move in whole velocity levels.
    if (std::holds_alternative<ScriptedQLK>(o.behavior)) {
      wo.v_mps = velocity_level(o.start_v_mps, grid) * quantum;
    }
    w.opponents.push_back(std::move(wo));
  }
  return w;
}

std::optional<Outcome> judge(const World& w, const TerminationRules& rules,
                             const WorldParams& p) {
  if (w.collided) return Outcome::kCollision;
  const bool is_merged = merged(w.ego);
  if (is_merged && rules.stop_on_merge) return Outcome::kMerged;
  if (!is_merged && rules.blockage_timeout) {
    const double gap = w.blockage_x_m - w.ego.x_m - p.vehicle_length_m;
    if (gap <= rules.blockage_timeout_gap_m) return Outcome::kTimeout;
    if (w.stopped_s > rules.stopped_limit_s) return Outcome::kTimeout;
  }
  return std::nullopt;
}

SimEnvironment::SimEnvironment(const ScenarioConfig& cfg, GridParams grid,
                               RewardParams rewards, WorldParams world,
                               TerminationRules rules,
                               std::shared_ptr<const QHierarchy> tables)
    : grid_(grid),
      rewards_(rewards),
      params_(world),
      rules_(rules),
      tables_(std::move(tables)),
      world_(make_world(cfg, grid)),
      rng_(derive_seed(cfg.seed, 0x5eed)) {
  grid_.validate();
  params_.validate();
  cfg.validate(tables_ ? tables_->k_max() : 1 << 30);
  for (const auto& o : cfg.opponents) {
    if (std::holds_alternative<ScriptedQLK>(o.behavior) && !tables_) {
      throw std::invalid_argument("scripted opponents need Q-tables");
    }
  }
}

double SimEnvironment::execute(EgoAction action) {
  world_step(world_, action, params_, grid_, tables_.get(), rng_);
  double r = 0.0;
  if (!merged(world_.ego)) r += rewards_.off_lane_penalty;
  if (world_.collided) r += rewards_.collision_penalty;
  return r;
}

std::optional<Outcome> SimEnvironment::status() const {
  return judge(world_, rules_, params_);
}

void BaselineParams::validate() const {
  if (!(front_gap_m >= 0 && rear_gap_m >= 0 && max_closing_mps >= 0 &&
        blockage_brake_m >= 0 && cruise_mps >= 0)) {
    throw std::invalid_argument("baseline thresholds must be non-negative");
  }
}

TargetLaneGaps target_lane_gaps(const WorldSnapshot& s,
                                double vehicle_length_m) {
  TargetLaneGaps g;
  double rear_dx = std::numeric_limits<double>::infinity();
  for (const WorldVehicle& v : s.vehicles) {
    if (v.is_static || v.lane != 1) continue;
    const double dx = v.x_m - s.ego.x_m;
    if (dx >= 0.0) {
      g.front_m = std::min(g.front_m, dx - vehicle_length_m);
    } else if (-dx < rear_dx) {
      rear_dx = -dx;
      g.rear_m = -dx - vehicle_length_m;
      g.rear_closing_mps = v.v_mps - s.ego.v_mps;
    }
  }
  return g;
}

double blockage_gap(const WorldSnapshot& s, double vehicle_length_m) {
  double gap = std::numeric_limits<double>::infinity();
  for (const WorldVehicle& v : s.vehicles) {
    if (!v.is_static || v.lane != static_cast<int>(s.ego.lane)) continue;
    const double dx = v.x_m - s.ego.x_m;
    if (dx > 0.0) gap = std::min(gap, dx - vehicle_length_m);
  }
  return gap;
}

EgoAction baseline_gap_acceptance(const WorldSnapshot& s,
                                  const BaselineParams& b,
                                  const WorldParams& p) {
  if (!merged(s.ego)) {
    const TargetLaneGaps g = target_lane_gaps(s, p.vehicle_length_m);
    if (g.front_m >= b.front_gap_m && g.rear_m >= b.rear_gap_m &&
        g.rear_closing_mps <= b.max_closing_mps) {
      return EgoAction::kLaneChange;
    }
    // Brakes when holding speed would bring the blockage within range.
    const double ahead = blockage_gap(s, p.vehicle_length_m) - s.ego.v_mps;
    if (ahead <= b.blockage_brake_m) return EgoAction::kDecelerate;
  }
  if (s.ego.v_mps < b.cruise_mps) return EgoAction::kAccelerate;
  return EgoAction::kMaintain;
}

BaselinePolicy::BaselinePolicy(BaselineParams b, WorldParams p)
    : b_(b), p_(p) {
  b_.validate();
}

EgoAction BaselinePolicy::act() {
  return baseline_gap_acceptance(last_, b_, p_);
}

ScenarioConfig lane_change_scenario(int opponents, std::uint64_t seed,
                                    const ScenarioDefaults& d) {
  if (opponents < 0) throw std::invalid_argument("negative opponent count");
  ScenarioConfig cfg;
  cfg.seed = seed;
  Rng rng(derive_seed(seed, 1));
  const double v = cfg.traffic_init_v_mps;
  auto add = [&](double x) {
    cfg.opponents.push_back({random_idm(d, rng), x, v});
  };
  if (opponents == 1) {
    add(uniform(rng, d.single_lo_m, d.single_hi_m));
  } else if (opponents == 2) {
    add(uniform(rng, d.behind_lo_m, d.behind_hi_m));
    add(uniform(rng, d.ahead_lo_m, d.ahead_hi_m));
  } else if (opponents > 2) {
    double x = uniform(rng, d.platoon_lo_m, d.platoon_hi_m);
    for (int i = 0; i < opponents; ++i) {
      add(x);
      x += d.vehicle_length_m + uniform(rng, d.idm.follow_gap_min_m, d.idm.follow_gap_max_m);
    }
  }
  return cfg;
}

ScenarioConfig belief_scenario(std::span<const ScriptedQLK> profiles,
                               std::uint64_t seed, const ScenarioDefaults& d) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  Rng rng(derive_seed(seed, 2));
  const double v = cfg.traffic_init_v_mps;
  if (profiles.size() == 1) {
    cfg.opponents.push_back(
        {profiles[0], uniform(rng, d.belief_single_lo_m, d.belief_single_hi_m), v});
  } else {
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const bool near = i % 2 == 0;
      const double x = near ? uniform(rng, d.belief_near_lo_m, d.belief_near_hi_m)
                            : uniform(rng, d.belief_far_lo_m, d.belief_far_hi_m);
      cfg.opponents.push_back({profiles[i], x, v});
    }
  }
  return cfg;
}

}  // namespace qlk::harness
