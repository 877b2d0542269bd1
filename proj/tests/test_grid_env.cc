#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "qlk/grid_env.h"

using namespace qlk;

namespace {

GridParams unit_footprint() {
  GridParams p;
  p.vehicle_cells = 1;
  return p;
}

GridState ego_at(int cell, Lane lane, int vel) {
  GridState s;
  s.ego = {cell, lane, vel};
  return s;
}

// Brute-force collision check: sample both trajectories at fine time steps
// and report whether the centers ever come within `extent` cells (or cross).
bool sampled_crossing(double e0, double e1, double a0, double a1, int extent) {
  const int n = 1000;
  double prev = a0 - e0;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double d = (a0 + t * (a1 - a0)) - (e0 + t * (e1 - e0));
    if (std::abs(d) < extent - 1e-9 || (prev < 0) != (d < 0)) return true;
    prev = d;
  }
  return false;
}

}  // namespace

TEST_CASE("maintain advances by velocity and pays the off-lane penalty") {
  GridParams p;
  RewardParams r;
  const auto out = step(ego_at(5, Lane::kEgo, 2), EgoAction::kMaintain, {}, p, r);
  CHECK(out.next_state.ego.cell == 7);
  CHECK(out.next_state.ego.vel == 2);
  CHECK(out.reward == r.off_lane_penalty);
  CHECK_FALSE(out.collided);
}

TEST_CASE("velocity clamps at both ends") {
  GridParams p;
  RewardParams r;
  auto out = step(ego_at(2, Lane::kEgo, p.max_vel), EgoAction::kAccelerate, {}, p, r);
  CHECK(out.next_state.ego.vel == p.max_vel);
  out = step(ego_at(2, Lane::kEgo, 0), EgoAction::kDecelerate, {}, p, r);
  CHECK(out.next_state.ego.vel == 0);
  CHECK(out.next_state.ego.cell == 2);
}

TEST_CASE("same-cell arrival collides") {
  GridParams p = unit_footprint();
  RewardParams r;
  GridState s = ego_at(6, Lane::kTarget, 2);
  s.agents.push_back({7, Lane::kTarget, 1});
  const HumanAction h[] = {HumanAction::kMaintain};
  const auto out = step(s, EgoAction::kMaintain, h, p, r);
  CHECK(out.next_state.ego.cell == 8);
  CHECK(out.next_state.agents[0].cell == 8);
  CHECK(out.collided);
  CHECK(out.reward == doctest::Approx(r.collision_penalty));
}

TEST_CASE("passing through a slower agent collides and matches a sampled oracle") {
  GridParams p = unit_footprint();
  RewardParams r;
  for (int agent_cell = 5; agent_cell <= 11; ++agent_cell) {
    for (int agent_vel = 0; agent_vel <= 1; ++agent_vel) {
      GridState s = ego_at(5, Lane::kEgo, 3);
      s.agents.push_back({agent_cell, Lane::kEgo, agent_vel});
      if (agent_cell == 5) continue;  // starting overlap is not a valid state
      const HumanAction h[] = {HumanAction::kMaintain};
      const auto out = step(s, EgoAction::kMaintain, h, p, r);
      const bool oracle = sampled_crossing(5, 8, agent_cell, agent_cell + agent_vel, 1);
      CHECK_MESSAGE(out.collided == oracle, "agent at " << agent_cell << " vel " << agent_vel);
    }
  }
}

TEST_CASE("footprint sweep agrees with a sampled oracle") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> cell(-8, 8), vel(0, 3), ext(1, 4);
  for (int t = 0; t < 2000; ++t) {
    const int a0 = cell(rng);
    if (a0 == 0) continue;
    const int ve = vel(rng), va = vel(rng), extent = ext(rng);
    const int d0 = a0, d1 = a0 + va - ve;
    bool oracle = false;
    for (int i = 0; i <= 1000 && !oracle; ++i) {
      const double x = i / 1000.0;
      const double d = d0 + x * (d1 - d0);
      if (std::abs(d) < extent - 1e-9 || std::abs(d) < 1e-12) oracle = true;
    }
    if ((d0 < 0) != (d1 < 0)) oracle = true;
    CHECK(sweeps_within(d0, d1, extent) == oracle);
  }
}

TEST_CASE("indicate sets the flag, lane change moves to the target lane") {
  GridParams p;
  RewardParams r;
  auto out = step(ego_at(4, Lane::kEgo, 1), EgoAction::kIndicateIntent, {}, p, r);
  CHECK(out.next_state.indicating);
  CHECK(out.next_state.ego.lane == Lane::kEgo);
  out = step(out.next_state, EgoAction::kLaneChange, {}, p, r);
  CHECK_FALSE(out.next_state.indicating);
  CHECK(out.next_state.ego.lane == Lane::kTarget);
  CHECK(out.ego_on_target);
  CHECK(out.reward == 0.0);
}

TEST_CASE("lane change sweeps the target lane") {
  GridParams p;
  RewardParams r;
  GridState s = ego_at(10, Lane::kEgo, 1);
  s.agents.push_back({10, Lane::kTarget, 1});
  const HumanAction h[] = {HumanAction::kMaintain};
  CHECK(step(s, EgoAction::kLaneChange, h, p, r).collided);
  CHECK_FALSE(step(s, EgoAction::kMaintain, h, p, r).collided);
}

TEST_CASE("obstacles collide with the ego") {
  GridParams p;
  RewardParams r;
  GridState s = ego_at(10, Lane::kEgo, 2);
  s.obstacles.push_back({14, Lane::kEgo});
  CHECK(step(s, EgoAction::kMaintain, {}, p, r).collided);
  CHECK_FALSE(step(s, EgoAction::kDecelerate, {}, p, r).collided);
}

TEST_CASE("action list length mismatch is a contract violation") {
  GridParams p;
  RewardParams r;
  GridState s = ego_at(10, Lane::kEgo, 2);
  s.agents.push_back({2, Lane::kTarget, 1});
  CHECK_THROWS_AS(step(s, EgoAction::kMaintain, {}, p, r), ContractViolation);
}

TEST_CASE("step is deterministic and reward decomposes") {
  GridParams p;
  RewardParams r;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    GridState s = state_from_index(rng() % num_states(p, 1), p, 1);
    const EgoAction a = kAllEgoActions[rng() % 5];
    const HumanAction h[] = {kAllHumanActions[rng() % 3]};
    const auto x = step(s, a, h, p, r);
    const auto y = step(s, a, h, p, r);
    CHECK(x.next_state == y.next_state);
    CHECK(x.reward == y.reward);
    CHECK(x.reward == x.off_lane_reward + x.collision_reward);
    CHECK(x.off_lane_reward == (x.ego_on_target ? 0.0 : r.off_lane_penalty));
    CHECK(x.collision_reward == (x.collided ? r.collision_penalty : 0.0));
    CHECK(x.next_state.ego.vel >= 0);
    CHECK(x.next_state.ego.vel <= p.max_vel);
  }
}

TEST_CASE("state count matches direct enumeration") {
  GridParams p;
  std::int64_t count = 0;
  for (int ec = 0; ec < p.length_cells; ++ec)
    for (int el = 0; el < p.lanes; ++el)
      for (int ev = 0; ev <= p.max_vel; ++ev)
        for (int ac = 0; ac < p.length_cells; ++ac)
          for (int al = 0; al < p.lanes; ++al)
            for (int av = 0; av <= p.max_vel; ++av)
              for (int ind = 0; ind < 2; ++ind) ++count;
  CHECK(num_states(p, 1) == count);
}

TEST_CASE("state index is a bijection over the full default space") {
  GridParams p;
  const std::int64_t n = num_states(p, 1);
  std::vector<char> seen(n, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    const GridState s = state_from_index(i, p, 1);
    const std::int64_t j = enumerate_state_index(s, p, 1);
    REQUIRE(j == i);
    seen[j] = 1;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](char c) { return c == 1; }));
}

TEST_CASE("indexing rejects states outside the grid") {
  GridParams p;
  GridState s = ego_at(p.length_cells, Lane::kEgo, 0);
  s.agents.push_back({0, Lane::kTarget, 0});
  CHECK_THROWS(enumerate_state_index(s, p, 1));
  CHECK_THROWS(state_from_index(num_states(p, 1), p, 1));
}

TEST_CASE("canonical pair is shift invariant") {
  GridParams p;
  GridState a = ego_at(5, Lane::kEgo, 1);
  a.agents.push_back({8, Lane::kTarget, 2});
  GridState b = a;
  b.ego.cell += 4;
  b.agents[0].cell += 4;
  CHECK(pair_state_index(a, 0, p) == pair_state_index(b, 0, p));
  GridState far = a;
  far.agents[0].cell = 60;
  const GridState c = canonical_pair(far, 0, p);
  CHECK(c.ego.cell == 0);
  CHECK(c.agents[0].cell == p.length_cells - 1);
}

TEST_CASE("world mapping centers the ego and drops distant vehicles") {
  GridParams p;
  const EgoPose ego{50.0, Lane::kEgo, 3.0, false};
  const std::vector<WorldVehicle> world = {
      {1, 71.0, 1, 3.0, false},   // 21 m ahead: outside the 20 m half window
      {2, 50.0, 1, 3.4, false},   // beside the ego
      {3, 44.0, 2, 3.0, false},   // unknown lane
      {4, 60.0, 0, 0.0, true},    // static obstacle
  };
  const GridMapping m = map_from_world(world, ego, p);
  CHECK(m.state.ego.cell == p.center_cell());
  REQUIRE(m.state.agents.size() == 1);
  CHECK(m.id_map == std::vector<int>{2});
  CHECK(m.state.agents[0].cell == p.center_cell());
  CHECK(m.state.agents[0].lane == Lane::kTarget);
  // 3.4 m/s over 2 m cells and 1 s steps is 1.7 cells, which rounds to 2.
  CHECK(m.state.agents[0].vel == 2);
  REQUIRE(m.state.obstacles.size() == 1);
  CHECK(m.state.obstacles[0].cell == p.center_cell() + 5);
}

TEST_CASE("velocity levels round and clamp") {
  GridParams p;
  CHECK(velocity_level(3.4, p) == 2);
  CHECK(velocity_level(0.9, p) == 0);
  CHECK(velocity_level(1.0, p) == 1);
  CHECK(velocity_level(40.0, p) == p.max_vel);
  CHECK(velocity_level(-1.0, p) == 0);
}

TEST_CASE("action names round-trip") {
  for (EgoAction a : kAllEgoActions) CHECK(parse_ego_action(to_string(a)) == a);
  for (HumanAction a : kAllHumanActions) CHECK(parse_human_action(to_string(a)) == a);
  CHECK_FALSE(parse_ego_action("Jump").has_value());
}

TEST_CASE("parameter validation") {
  GridParams p;
  p.length_cells = 3;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = GridParams{};
  p.lanes = 3;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  RewardParams r;
  r.collision_penalty = -0.5;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = RewardParams{};
  r.gamma = 1.0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}
