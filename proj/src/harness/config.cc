#include "qlk/harness/config.h"

#include <fstream>
#include <set>

namespace qlk::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<Section> sub(const char* key) {
    const json* j = raw(key);
    if (!j) return std::nullopt;
    return Section(*j, where(key));
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + where(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_idm(Section s, IDMParams& p) {
  s.get("v0", p.v0);
  s.get("T_headway", p.T_headway);
  s.get("a_max", p.a_max);
  s.get("b_comfort", p.b_comfort);
  s.get("s0", p.s0);
  s.get("delta", p.delta);
  s.get("follow_gap_min_m", p.follow_gap_min_m);
  s.get("follow_gap_max_m", p.follow_gap_max_m);
  s.finish();
}

ordered_json idm_json(const IDMParams& p) {
  return {{"v0", p.v0},
          {"T_headway", p.T_headway},
          {"a_max", p.a_max},
          {"b_comfort", p.b_comfort},
          {"s0", p.s0},
          {"delta", p.delta},
          {"follow_gap_min_m", p.follow_gap_min_m},
          {"follow_gap_max_m", p.follow_gap_max_m}};
}

template <class F>
void wrap(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ordered_json scenario_to_json(const ScenarioConfig& s) {
  ordered_json opps = ordered_json::array();
  for (const OpponentSpec& o : s.opponents) {
    ordered_json j;
    if (const auto* q = std::get_if<ScriptedQLK>(&o.behavior)) {
      j = {{"behavior", "qlk"}, {"k", q->k}, {"lambda", q->lambda}};
    } else {
      const auto& d = std::get<IDMDriver>(o.behavior);
      j = {{"behavior", "idm"}, {"yielding", d.yielding}, {"idm", idm_json(d.params)}};
    }
    j["start_x_m"] = o.start_x_m;
    j["start_v_mps"] = o.start_v_mps;
    opps.push_back(std::move(j));
  }
  return {{"road_length_m", s.road_length_m},
          {"blockage_position_m", s.blockage_position_m},
          {"ego_start",
           {{"x_m", s.ego_start.x_m},
            {"lane", static_cast<int>(s.ego_start.lane)},
            {"v_mps", s.ego_start.v_mps}}},
          {"traffic_init_v_mps", s.traffic_init_v_mps},
          {"seed", s.seed},
          {"opponents", std::move(opps)}};
}

namespace {

ScenarioConfig read_scenario(Section s) {
  ScenarioConfig c;
  s.get("road_length_m", c.road_length_m);
  s.get("blockage_position_m", c.blockage_position_m);
  s.get("traffic_init_v_mps", c.traffic_init_v_mps);
  s.get("seed", c.seed);
  if (auto e = s.sub("ego_start")) {
    e->get("x_m", c.ego_start.x_m);
    int lane = static_cast<int>(c.ego_start.lane);
    e->get("lane", lane);
    if (lane != 0 && lane != 1) throw ConfigError(e->where("lane") + " must be 0 or 1");
    c.ego_start.lane = static_cast<Lane>(lane);
    e->get("v_mps", c.ego_start.v_mps);
    e->finish();
  }
  if (const json* opps = s.raw("opponents")) {
    if (!opps->is_array()) throw ConfigError(s.where("opponents") + " must be an array");
    for (std::size_t i = 0; i < opps->size(); ++i) {
      Section o((*opps)[i], s.where("opponents[" + std::to_string(i) + "]"));
      std::string behavior;
      o.get("behavior", behavior);
      OpponentSpec spec;
      spec.start_v_mps = c.traffic_init_v_mps;
      o.get("start_x_m", spec.start_x_m);
      o.get("start_v_mps", spec.start_v_mps);
      if (behavior == "qlk") {
        ScriptedQLK q;
        o.get("k", q.k);
        o.get("lambda", q.lambda);
        spec.behavior = q;
      } else if (behavior == "idm") {
        IDMDriver d;
        o.get("yielding", d.yielding);
        if (auto p = o.sub("idm")) read_idm(*p, d.params);
        spec.behavior = d;
      } else {
        throw ConfigError(o.where("behavior") + " must be \"qlk\" or \"idm\"");
      }
      o.finish();
      c.opponents.push_back(std::move(spec));
    }
  }
  s.finish();
  return c;
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  return read_scenario(Section(j, "scenario"));
}

AppConfig parse_config(const json& j) {
  AppConfig c;
  Section root(j, "");
  if (auto s = root.sub("grid")) {
    s->get("length_cells", c.grid.length_cells);
    s->get("lanes", c.grid.lanes);
    s->get("cell_length_m", c.grid.cell_length_m);
    s->get("max_vel", c.grid.max_vel);
    s->get("step_duration_s", c.grid.step_duration_s);
    s->get("vehicle_cells", c.grid.vehicle_cells);
    s->finish();
  }
  if (auto s = root.sub("rewards")) {
    s->get("off_lane_penalty", c.rewards.off_lane_penalty);
    s->get("collision_penalty", c.rewards.collision_penalty);
    s->get("gamma", c.rewards.gamma);
    s->get("progress_weight", c.rewards.progress_weight);
    s->finish();
  }
  if (auto s = root.sub("train")) {
    s->get("k_max", c.train.k_max);
    s->get("gamma", c.train.gamma);
    s->get("tol", c.train.tol);
    s->get("max_iters", c.train.max_iters);
    s->finish();
  }
  if (auto s = root.sub("planner")) {
    s->get("horizon", c.planner.horizon);
    s->get("time_allowance_s", c.planner.time_allowance_s);
    s->get("exploration_c", c.planner.exploration_c);
    s->get("gamma", c.planner.gamma);
    s->get("info_gain_phi", c.planner.info_gain_phi);
    s->get_optional("rollout_cap", c.planner.rollout_cap);
    std::optional<std::vector<std::string>> actions;
    s->get_optional("ego_actions", actions);
    if (actions) {
      c.planner.ego_actions.clear();
      for (const std::string& a : *actions) {
        const auto parsed = parse_ego_action(a);
        if (!parsed) throw ConfigError("planner.ego_actions: unknown action '" + a + "'");
        c.planner.ego_actions.push_back(*parsed);
      }
    }
    s->finish();
  }
  if (auto s = root.sub("support")) {
    s->get("levels", c.support_levels);
    s->get("lambdas", c.support_lambdas);
    s->finish();
  }
  if (auto s = root.sub("world")) {
    s->get("vehicle_length_m", c.world.vehicle_length_m);
    s->get("indicate_offset_m", c.world.indicate_offset_m);
    s->get("ego_speed_step_mps", c.world.ego_speed_step_mps);
    s->get("yield_range_m", c.world.yield_range_m);
    s->finish();
  }
  if (auto s = root.sub("termination")) {
    s->get("blockage_timeout_gap_m", c.rules.blockage_timeout_gap_m);
    s->get("stopped_limit_s", c.rules.stopped_limit_s);
    s->finish();
  }
  if (auto s = root.sub("baseline")) {
    s->get("front_gap_m", c.baseline.front_gap_m);
    s->get("rear_gap_m", c.baseline.rear_gap_m);
    s->get("max_closing_mps", c.baseline.max_closing_mps);
    s->get("blockage_brake_m", c.baseline.blockage_brake_m);
    s->get("cruise_mps", c.baseline.cruise_mps);
    s->finish();
  }
  if (auto s = root.sub("traffic")) {
    ScenarioDefaults& d = c.scenario;
    if (auto p = s->sub("idm")) read_idm(*p, d.idm);
    s->get("vehicle_length_m", d.vehicle_length_m);
    s->get("idm_v0_min", d.idm_v0_min);
    s->get("idm_v0_max", d.idm_v0_max);
    s->get("yielding_probability", d.yielding_probability);
    s->get("single_lo_m", d.single_lo_m);
    s->get("single_hi_m", d.single_hi_m);
    s->get("behind_lo_m", d.behind_lo_m);
    s->get("behind_hi_m", d.behind_hi_m);
    s->get("ahead_lo_m", d.ahead_lo_m);
    s->get("ahead_hi_m", d.ahead_hi_m);
    s->get("platoon_lo_m", d.platoon_lo_m);
    s->get("platoon_hi_m", d.platoon_hi_m);
    s->get("belief_single_lo_m", d.belief_single_lo_m);
    s->get("belief_single_hi_m", d.belief_single_hi_m);
    s->get("belief_near_lo_m", d.belief_near_lo_m);
    s->get("belief_near_hi_m", d.belief_near_hi_m);
    s->get("belief_far_lo_m", d.belief_far_lo_m);
    s->get("belief_far_hi_m", d.belief_far_hi_m);
    s->finish();
  }
  root.get("max_steps", c.max_steps);
  root.get("qtables", c.qtables_path);
  root.get("seed", c.seed);
  if (auto s = root.sub("scenario")) c.scenario_override = read_scenario(*s);
  if (auto s = root.sub("eval_belief")) {
    s->get("opponent_counts", c.belief.opponent_counts);
    s->get("runs", c.belief.runs);
    s->get("lambdas", c.belief.lambdas);
    s->get("info_gain", c.belief.info_gain);
    s->get("budgets", c.belief.budgets);
    s->get("steps", c.belief.steps);
    s->finish();
  }
  if (auto s = root.sub("eval_lane_change")) {
    s->get("scenarios", c.lane_change.scenarios);
    s->get("planners", c.lane_change.planners);
    s->get("runs", c.lane_change.runs);
    s->get("budget", c.lane_change.budget);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

AppConfig load_config(const std::string& path) {
  if (path == "default") return AppConfig{};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_config(j);
}

void AppConfig::validate() const {
  wrap([&] {
    grid.validate();
    rewards.validate();
    train.validate();
    planner.validate();
    world.validate();
    baseline.validate();
    scenario.idm.validate();
    (void)support();
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (belief.runs < 1 || lane_change.runs < 1) {
      throw std::invalid_argument("experiment runs must be >= 1");
    }
    if (belief.steps < 1) throw std::invalid_argument("eval_belief.steps must be >= 1");
    if (lane_change.budget < 1) throw std::invalid_argument("eval_lane_change.budget must be >= 1");
    for (std::int64_t b : belief.budgets) {
      if (b < 1) throw std::invalid_argument("eval_belief.budgets must be >= 1");
    }
    for (const std::string& p : lane_change.planners) {
      if (p != "ours" && p != "ours-no-ig" && p != "baseline") {
        throw std::invalid_argument("unknown planner '" + p + "'");
      }
    }
    for (int k : support_levels) {
      if (k > train.k_max) {
        throw std::invalid_argument("support level " + std::to_string(k) +
                                    " exceeds train.k_max");
      }
    }
    if (scenario_override) scenario_override->validate(train.k_max);
  });
}

std::shared_ptr<const ProfileSupport> AppConfig::support() const {
  std::vector<HiddenProfile> profiles;
  for (int k : support_levels) {
    for (double l : support_lambdas) profiles.push_back({k, l});
  }
  return std::make_shared<const ProfileSupport>(std::move(profiles));
}

EpisodeSettings AppConfig::episode() const {
  return {grid, rewards, world, rules, max_steps};
}

BeliefExperiment AppConfig::belief_experiment() const {
  BeliefExperiment e;
  e.opponent_counts = belief.opponent_counts;
  e.runs = belief.runs;
  e.lambdas = belief.lambdas;
  e.info_gain = belief.info_gain;
  e.budgets = belief.budgets;
  e.steps = belief.steps;
  e.master_seed = seed;
  e.planner = planner;
  e.scenario = scenario;
  e.episode = episode();
  return e;
}

LaneChangeExperiment AppConfig::lane_change_experiment() const {
  LaneChangeExperiment e;
  e.scenarios = lane_change.scenarios;
  e.planners = lane_change.planners;
  e.runs = lane_change.runs;
  e.master_seed = seed;
  e.planner = planner;
  e.planner.rollout_cap = lane_change.budget;
  e.baseline = baseline;
  e.scenario = scenario;
  e.episode = episode();
  return e;
}

ordered_json config_to_json(const AppConfig& c) {
  ordered_json actions = ordered_json::array();
  for (EgoAction a : c.planner.ego_actions) actions.push_back(to_string(a));
  const ScenarioDefaults& d = c.scenario;
  ordered_json j = {
      {"grid",
       {{"length_cells", c.grid.length_cells},
        {"lanes", c.grid.lanes},
        {"cell_length_m", c.grid.cell_length_m},
        {"max_vel", c.grid.max_vel},
        {"step_duration_s", c.grid.step_duration_s},
        {"vehicle_cells", c.grid.vehicle_cells}}},
      {"rewards",
       {{"off_lane_penalty", c.rewards.off_lane_penalty},
        {"collision_penalty", c.rewards.collision_penalty},
        {"gamma", c.rewards.gamma},
        {"progress_weight", c.rewards.progress_weight}}},
      {"train",
       {{"k_max", c.train.k_max},
        {"gamma", c.train.gamma},
        {"tol", c.train.tol},
        {"max_iters", c.train.max_iters}}},
      {"planner",
       {{"horizon", c.planner.horizon},
        {"time_allowance_s", c.planner.time_allowance_s},
        {"exploration_c", c.planner.exploration_c},
        {"gamma", c.planner.gamma},
        {"info_gain_phi", c.planner.info_gain_phi},
        {"rollout_cap", c.planner.rollout_cap ? ordered_json(*c.planner.rollout_cap)
                                              : ordered_json(nullptr)},
        {"ego_actions", actions}}},
      {"support", {{"levels", c.support_levels}, {"lambdas", c.support_lambdas}}},
      {"world",
       {{"vehicle_length_m", c.world.vehicle_length_m},
        {"indicate_offset_m", c.world.indicate_offset_m},
        {"ego_speed_step_mps", c.world.ego_speed_step_mps},
        {"yield_range_m", c.world.yield_range_m}}},
      {"termination",
       {{"blockage_timeout_gap_m", c.rules.blockage_timeout_gap_m},
        {"stopped_limit_s", c.rules.stopped_limit_s}}},
      {"baseline",
       {{"front_gap_m", c.baseline.front_gap_m},
        {"rear_gap_m", c.baseline.rear_gap_m},
        {"max_closing_mps", c.baseline.max_closing_mps},
        {"blockage_brake_m", c.baseline.blockage_brake_m},
        {"cruise_mps", c.baseline.cruise_mps}}},
      {"traffic",
       {{"idm", idm_json(d.idm)},
        {"vehicle_length_m", d.vehicle_length_m},
        {"idm_v0_min", d.idm_v0_min},
        {"idm_v0_max", d.idm_v0_max},
        {"yielding_probability", d.yielding_probability},
        {"single_lo_m", d.single_lo_m},
        {"single_hi_m", d.single_hi_m},
        {"behind_lo_m", d.behind_lo_m},
        {"behind_hi_m", d.behind_hi_m},
        {"ahead_lo_m", d.ahead_lo_m},
        {"ahead_hi_m", d.ahead_hi_m},
        {"platoon_lo_m", d.platoon_lo_m},
        {"platoon_hi_m", d.platoon_hi_m},
        {"belief_single_lo_m", d.belief_single_lo_m},
        {"belief_single_hi_m", d.belief_single_hi_m},
        {"belief_near_lo_m", d.belief_near_lo_m},
        {"belief_near_hi_m", d.belief_near_hi_m},
        {"belief_far_lo_m", d.belief_far_lo_m},
        {"belief_far_hi_m", d.belief_far_hi_m}}},
      {"max_steps", c.max_steps},
      {"qtables", c.qtables_path},
      {"seed", c.seed},
      {"eval_belief",
       {{"opponent_counts", c.belief.opponent_counts},
        {"runs", c.belief.runs},
        {"lambdas", c.belief.lambdas},
        {"info_gain", c.belief.info_gain},
        {"budgets", c.belief.budgets},
        {"steps", c.belief.steps}}},
      {"eval_lane_change",
       {{"scenarios", c.lane_change.scenarios},
        {"planners", c.lane_change.planners},
        {"runs", c.lane_change.runs},
        {"budget", c.lane_change.budget}}}};
  if (c.scenario_override) j["scenario"] = scenario_to_json(*c.scenario_override);
  return j;
}

}  // namespace qlk::harness
