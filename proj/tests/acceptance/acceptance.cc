// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass a list of criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../oracles.h"
#include "qlk/harness/config.h"
#include "qlk/harness/episode_log.h"
#include "qlk/harness/experiments.h"

using namespace qlk;
using namespace qlk::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const AppConfig& config() {
  static const AppConfig c = load_config("default");
  return c;
}

std::shared_ptr<const QHierarchy> tables() {
  static const auto t = std::make_shared<const QHierarchy>(
      train_hierarchy(config().train, config().grid, config().rewards));
  return t;
}

// 1 ---------------------------------------------------------------------------
Verdict quantal_properties() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> val(-100.0, 100.0), lam(0.01, 20.0);
  int bad_norm = 0, bad_uniform = 0, bad_shift = 0, bad_mono = 0;
  for (int t = 0; t < 1000; ++t) {
    const double q[] = {val(rng), val(rng), val(rng)};
    const double lambda = lam(rng);
    const PolicyDist p = quantal_policy(q, lambda);
    if (std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-9) ++bad_norm;
    for (double x : quantal_policy(q, 0.0)) {
      if (std::abs(x - 1.0 / 3.0) > 1e-12) ++bad_uniform;
    }
    const double c = val(rng);
    const double shifted[] = {q[0] + c, q[1] + c, q[2] + c};
    const PolicyDist ps = quantal_policy(shifted, lambda);
    for (int a = 0; a < 3; ++a) {
      if (std::abs(ps[a] - p[a]) > 1e-12) ++bad_shift;
    }
    // Odds between the two first actions must grow with lambda. Lambdas are
    // scaled so the odds stay representable.
    int hi = 0, lo = 1;
    if (q[lo] > q[hi]) std::swap(hi, lo);
    if (q[hi] - q[lo] < 1e-9) continue;
    const double range = *std::max_element(q, q + 3) - *std::min_element(q, q + 3);
    const double l1 = std::uniform_real_distribution<double>(0.01, 30.0)(rng) / range;
    const double l2 = l1 * std::uniform_real_distribution<double>(1.01, 2.0)(rng);
    const PolicyDist a = quantal_policy(q, l1);
    const PolicyDist b = quantal_policy(q, l2);
    if (!(b[hi] / b[lo] > a[hi] / a[lo])) ++bad_mono;
  }
  Verdict v;
  v.pass = bad_norm == 0 && bad_uniform == 0 && bad_shift == 0 && bad_mono == 0;
  v.detail = "1000 vectors; violations norm=" + std::to_string(bad_norm) +
             " uniform=" + std::to_string(bad_uniform) +
             " shift=" + std::to_string(bad_shift) +
             " monotone=" + std::to_string(bad_mono);
  return v;
}

// 2 ---------------------------------------------------------------------------
Verdict value_iteration_correctness() {
  const AppConfig& c = config();
  const QHierarchy& h = *tables();
  // Re-solve every human level against the policy it was trained on and
  // check the residual of the converged values.
  double worst_residual = 0.0, worst_consistency = 0.0;
  for (int k = 0; k <= h.k_max(); ++k) {
    const OpponentPolicy opp =
        k == 0 ? OpponentPolicy::frozen(Role::kEgo) : argmax_policy(h.ego[k - 1]);
    const ValueFunction v = value_iteration(opp, k, c.grid, c.rewards, c.train);
    worst_residual = std::max(worst_residual,
                              bellman_residual(v, opp, c.grid, c.rewards, c.train.gamma));
    for (std::int64_t s = 0; s < h.human[k].states(); ++s) {
      const auto row = h.human[k].row(s);
      worst_consistency = std::max(
          worst_consistency,
          std::abs(*std::max_element(row.begin(), row.end()) - v.values[s]));
    }
  }

  GridParams small = c.grid;
  small.length_cells = 6;
  small.max_vel = 1;
  TrainConfig tc = c.train;
  tc.k_max = 1;
  const QHierarchy sh = train_hierarchy(tc, small, c.rewards);
  const TrainingGame game(small, c.rewards, tc.gamma);
  // Largest |Q - oracle| over every state and action for a depth-d oracle
  // whose level-0 ego policy is also solved to depth d.
  auto oracle_gap = [&](int depth) {
    oracle::TrainingExpectimax ego0(game, Role::kEgo, std::nullopt);
    oracle::TrainingExpectimax::PolicyFn ego_policy(game.states());
    for (std::int64_t s = 0; s < game.states(); ++s) {
      std::vector<double> q(kNumEgoActions);
      for (int a = 0; a < kNumEgoActions; ++a) q[a] = ego0.q(s, a, depth);
      ego_policy[s] = oracle::argmax_uniform(q, kTieTolerance);
    }
    oracle::TrainingExpectimax human1(game, Role::kHuman, ego_policy);
    double worst = 0.0;
    for (std::int64_t s = 0; s < game.states(); ++s) {
      for (int a = 0; a < kNumHumanActions; ++a) {
        worst = std::max(worst, std::abs(human1.q(s, a, depth) - sh.human[1].at(s, a)));
      }
    }
    return worst;
  };
  const double worst_oracle = oracle_gap(20);
  // Reported only: separates horizon truncation from solver error.
  const double deep_oracle = oracle_gap(400);
  Verdict v;
  v.pass = worst_residual <= 1e-6 && worst_consistency <= 1e-6 && worst_oracle <= 1e-4;
  v.detail = "residual " + fmt("%.2e", worst_residual) + ", max Q vs V " +
             fmt("%.2e", worst_consistency) + ", reduced-grid depth-20 oracle gap " +
             fmt("%.2e", worst_oracle) + " (depth-400 gap " + fmt("%.2e", deep_oracle) + ")";
  return v;
}

// 3 ---------------------------------------------------------------------------
Verdict belief_bayes() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> val(-2.0, 2.0), unit(0.05, 1.0);
  const auto support =
      std::make_shared<const ProfileSupport>(ProfileSupport::default_support());
  double worst = 0.0;
  int cases = 0;
  while (cases < 1000) {
    QHierarchy h;
    for (int k = 0; k <= 2; ++k) {
      QTable t;
      t.level = k;
      t.q = {val(rng), val(rng), val(rng)};
      h.human.push_back(t);
    }
    std::vector<double> prior(support->size());
    double z = 0.0;
    for (double& p : prior) z += (p = unit(rng));
    for (double& p : prior) p /= z;
    const auto obs = static_cast<HumanAction>(rng() % 3);
    std::vector<double> like(support->size());
    bool floored = false;
    for (std::size_t i = 0; i < support->size(); ++i) {
      const auto& pr = (*support)[i];
      like[i] = quantal_policy(h.human[pr.k].row(0), pr.lambda)[static_cast<int>(obs)];
      floored |= like[i] < kLikelihoodFloor;
    }
    if (floored) continue;
    const std::vector<double> ref = oracle::joint_bayes(prior, like);
    const Belief post = belief_update(Belief(support, prior), 0, obs, h);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(post[i] - ref[i]));
    ++cases;
  }
  return {worst <= 1e-12, "1000 cases, max deviation " + fmt("%.2e", worst)};
}

// 4 ---------------------------------------------------------------------------
Verdict search_vs_expectimax() {
  const auto t = tables();
  const auto support =
      std::make_shared<const ProfileSupport>(ProfileSupport::default_support());
  std::mt19937_64 rng(4242);
  const std::vector<std::vector<EgoAction>> action_sets = {
      {EgoAction::kDecelerate, EgoAction::kMaintain, EgoAction::kLaneChange},
      {EgoAction::kAccelerate, EgoAction::kIndicateIntent, EgoAction::kLaneChange},
      {EgoAction::kAccelerate, EgoAction::kDecelerate, EgoAction::kMaintain}};
  int agree = 0;
  double worst_miss = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    PlannerConfig cfg = config().planner;
    cfg.horizon = 2;
    cfg.rollout_cap = 20000;
    // UCT needs an exploration constant on the scale of the return range.
    cfg.exploration_c = 0.5 * std::abs(config().rewards.collision_penalty);
    cfg.ego_actions = action_sets[inst % action_sets.size()];
    GridState s;
    s.ego = {10, rng() % 4 == 0 ? Lane::kTarget : Lane::kEgo, static_cast<int>(rng() % 4)};
    s.indicating = s.ego.lane == Lane::kEgo && rng() % 2 == 0;
    const int n = 1 + static_cast<int>(rng() % 2);
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) {
      int cell;
      do {
        cell = 10 + (i == 0 ? -1 : 1) * static_cast<int>(1 + rng() % 7);
      } while (cell == 10);
      s.agents.push_back({cell, Lane::kTarget, static_cast<int>(rng() % 4)});
      ids.push_back(i + 1);
    }
    const OpponentSet opp = select_opponents(s, ids);
    std::vector<Belief> beliefs;
    for (std::size_t i = 0; i < opp.slots.size(); ++i) {
      std::vector<double> p(support->size());
      double z = 0.0;
      for (double& x : p) z += (x = 0.1 + (rng() % 1000) / 1000.0);
      for (double& x : p) x /= z;
      beliefs.emplace_back(support, p);
    }
    SearchTree tree(t, cfg, s, opp.slots, beliefs, rng());
    const EgoAction got = tree.search();
    const oracle::SearchExpectimax ex(*t, cfg, opp.slots);
    const auto vals = ex.action_values(s, beliefs, cfg.horizon);
    EgoAction best = cfg.ego_actions.front();
    for (EgoAction a : cfg.ego_actions) {
      if (vals[static_cast<int>(a)] > vals[static_cast<int>(best)]) best = a;
    }
    // Exactly tied oracle values count as one argmax set.
    const double margin = vals[static_cast<int>(best)] - vals[static_cast<int>(got)];
    if (got == best || margin <= 1e-9) {
      ++agree;
    } else {
      worst_miss = std::max(worst_miss, margin);
    }
  }
  return {agree >= 95, std::to_string(agree) + "/100 instances match; largest oracle gap on a miss " +
                           fmt("%.2g", worst_miss)};
}

// 5 ---------------------------------------------------------------------------
Verdict anytime_contract() {
  const AppConfig& c = config();
  const auto support = c.support();
  int within_total = 0, calls_total = 0;
  std::string detail;
  for (double budget : {0.1, 0.5, 1.0}) {
    const int calls = 100;
    int within = 0;
    double worst = 0.0;
    for (int i = 0; i < calls; ++i) {
      PlannerConfig pc = c.planner;
      pc.rollout_cap.reset();
      pc.time_allowance_s = budget;
      pc.rng_seed = static_cast<std::uint64_t>(i);
      const ScenarioConfig sc = lane_change_scenario(2, lane_change_seed(c.seed, 2, i), c.scenario);
      const World w = make_world(sc, c.grid);
      Planner planner(tables(), pc, support);
      planner.observe(w.snapshot());
      const auto t0 = Clock::now();
      planner.act();
      const double dt = seconds_since(t0);
      worst = std::max(worst, dt);
      within += dt <= budget * 1.1 ? 1 : 0;
    }
    within_total += within;
    calls_total += calls;
    if (within < 99) detail += "FAIL@";
    detail += fmt("T=%.1fs: ", budget) + std::to_string(within) + "/100 within 10% (worst " +
              fmt("%.3fs", worst) + "); ";
  }
  return {detail.find("FAIL@") == std::string::npos, detail};
}

// 6 ---------------------------------------------------------------------------
Verdict belief_experiment() {
  const AppConfig& c = config();
  BeliefExperiment exp = c.belief_experiment();
  exp.runs = 100;
  exp.lambdas = {1.0, 3.0, 5.0};
  exp.info_gain = {true, false};
  const auto rows = eval_belief_accuracy(exp, tables(), c.support());
  std::map<std::pair<int, bool>, double> agg;
  for (const auto& r : rows) {
    if (r.k_combination == "all") agg[{r.opponents, r.with_info_gain}] = r.accuracy;
  }
  const double one_ig = agg[{1, true}], one_no = agg[{1, false}];
  const double two_ig = agg[{2, true}], two_no = agg[{2, false}];
  Verdict v;
  v.pass = one_ig >= 0.75 && one_ig >= one_no && two_ig >= 0.70;
  v.detail = "1 opponent: " + fmt("%.3f", one_ig) + " with / " + fmt("%.3f", one_no) +
             " without info gain; 2 opponents: " + fmt("%.3f", two_ig) + " with / " +
             fmt("%.3f", two_no) + " without";
  return v;
}

// 7, 8 ------------------------------------------------------------------------
const std::vector<LaneChangeRow>& lane_change_rows() {
  static const std::vector<LaneChangeRow> rows = [] {
    LaneChangeExperiment exp = config().lane_change_experiment();
    exp.runs = 50;
    exp.scenarios = {1, 2, 6};
    exp.planners = {"ours", "ours-no-ig", "baseline"};
    return eval_lane_change(exp, tables(), config().support());
  }();
  return rows;
}

const LaneChangeRow& row(const std::string& scenario, const std::string& planner) {
  for (const auto& r : lane_change_rows()) {
    if (r.scenario == scenario && r.planner == planner) return r;
  }
  throw std::logic_error("missing lane-change row " + scenario + "/" + planner);
}

double ttm(const LaneChangeRow& r) {
  return r.mean_time_to_merge_s.value_or(std::numeric_limits<double>::infinity());
}

Verdict lane_change_experiment() {
  const auto& ours1 = row("1-opponent", "ours");
  const auto& base1 = row("1-opponent", "baseline");
  const auto& ours6 = row("6-opponent", "ours");
  const auto& base6 = row("6-opponent", "baseline");
  Verdict v;
  v.pass = ours1.merge_rate >= 0.9 && ttm(ours1) < ttm(base1) &&
           base6.timeout_rate > ours6.timeout_rate;
  v.detail = "1 opponent: merge " + fmt("%.2f", ours1.merge_rate) + ", time to merge " +
             fmt("%.2f s", ttm(ours1)) + " vs baseline " + fmt("%.2f s", ttm(base1)) +
             "; 6 opponents: timeout ours " + fmt("%.2f", ours6.timeout_rate) +
             " vs baseline " + fmt("%.2f", base6.timeout_rate) + " (collisions ours " +
             fmt("%.2f", ours6.collision_rate) + ")";
  return v;
}

Verdict ablation() {
  const auto& ig = row("2-opponent", "ours");
  const auto& no = row("2-opponent", "ours-no-ig");
  return {ttm(ig) <= ttm(no), "2 opponents: time to merge " + fmt("%.2f s", ttm(ig)) +
                                  " with vs " + fmt("%.2f s", ttm(no)) + " without info gain"};
}

// 9 ---------------------------------------------------------------------------
std::string run_log_bytes(std::uint64_t seed) {
  const AppConfig& c = config();
  const ScenarioConfig sc = lane_change_scenario(2, seed, c.scenario);
  SimEnvironment env(sc, c.grid, c.rewards, c.world, c.rules, tables());
  PlannerConfig pc = c.planner;
  pc.rng_seed = seed;
  pc.rollout_cap = 2000;
  const EpisodeLog log = plan_episode(env, tables(), pc, c.support(), c.max_steps);
  std::ostringstream os;
  write_episode_log(log, {{"seed", seed}}, os);
  return os.str();
}

Verdict determinism() {
  const AppConfig& c = config();
  std::ostringstream a(std::ios::binary), b(std::ios::binary);
  write_qtables(train_hierarchy(c.train, c.grid, c.rewards), a);
  write_qtables(train_hierarchy(c.train, c.grid, c.rewards), b);
  const bool tables_equal = a.str() == b.str();
  const bool logs_equal = run_log_bytes(11) == run_log_bytes(11);
  return {tables_equal && logs_equal,
          std::string("Q-table bytes ") + (tables_equal ? "identical" : "differ") +
              ", episode logs " + (logs_equal ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all = {
      {1, "quantal policy properties", quantal_properties},
      {2, "value iteration correctness", value_iteration_correctness},
      {3, "belief update equals brute-force Bayes", belief_bayes},
      {4, "search matches expectimax", search_vs_expectimax},
      {5, "anytime time allowance", anytime_contract},
      {6, "belief accuracy", belief_experiment},
      {7, "lane-change outcomes", lane_change_experiment},
      {8, "information-gain ablation", ablation},
      {9, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double dt = seconds_since(t0);
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << " - "
              << v.detail << fmt(" [%.1f s]", dt) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
