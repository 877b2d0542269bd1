#include "qlk/harness/experiments.h"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>
#include <stdexcept>

namespace qlk::harness {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// All level tuples of length n over `levels`, lexicographic.
std::vector<std::vector<int>> level_combinations(const std::vector<int>& levels,
                                                 int n) {
  std::vector<std::vector<int>> out{{}};
  for (int i = 0; i < n; ++i) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out) {
      for (int k : levels) {
        auto c = prefix;
        c.push_back(k);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::string combo_name(const std::vector<int>& ks) {
  std::string s;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(ks[i]);
  }
  return s;
}

}  // namespace

void write_lane_change_csv(const std::vector<LaneChangeRow>& rows,
                           std::ostream& out) {
  out << "scenario,planner,runs,mean_time_to_merge_s,collision_rate,"
         "timeout_rate\n";
  for (const LaneChangeRow& r : rows) {
    out << r.scenario << ',' << r.planner << ',' << r.runs << ','
        << (r.mean_time_to_merge_s ? format_double(*r.mean_time_to_merge_s)
                                   : std::string())
        << ',' << format_double(r.collision_rate) << ','
        << format_double(r.timeout_rate) << '\n';
  }
}

void write_belief_csv(const std::vector<BeliefRow>& rows, std::ostream& out) {
  out << "opponents,budget,with_info_gain,k_combination,runs,accuracy\n";
  for (const BeliefRow& r : rows) {
    out << r.opponents << ',' << r.budget << ','
        << (r.with_info_gain ? "true" : "false") << ',' << r.k_combination
        << ',' << r.runs << ',' << format_double(r.accuracy) << '\n';
  }
}

std::unique_ptr<EgoPolicy> make_policy(
    const std::string& name, const PlannerConfig& planner,
    const BaselineParams& baseline, const WorldParams& world,
    std::shared_ptr<const QHierarchy> tables,
    std::shared_ptr<const ProfileSupport> support) {
  if (name == "baseline") return std::make_unique<BaselinePolicy>(baseline, world);
  if (name == "ours" || name == "ours-no-ig") {
    PlannerConfig cfg = planner;
    if (name == "ours-no-ig") cfg.info_gain_phi = 0.0;
    return std::make_unique<Planner>(std::move(tables), cfg, std::move(support));
  }
  throw std::invalid_argument("unknown planner '" + name + "'");
}

std::uint64_t lane_change_seed(std::uint64_t master, int opponents, int index) {
  return derive_seed(master, static_cast<std::uint64_t>(opponents) * 1000003ULL +
                                 static_cast<std::uint64_t>(index));
}

std::vector<LaneChangeRow> eval_lane_change(
    const LaneChangeExperiment& exp, std::shared_ptr<const QHierarchy> tables,
    std::shared_ptr<const ProfileSupport> support) {
  if (exp.runs < 1) throw std::invalid_argument("runs must be >= 1");
  std::vector<LaneChangeRow> rows;
  for (int n : exp.scenarios) {
    for (const std::string& planner_name : exp.planners) {
      LaneChangeRow row;
      row.scenario = std::to_string(n) + "-opponent";
      row.planner = planner_name;
      row.runs = exp.runs;
      double ttm_sum = 0.0;
      int merged_n = 0, collisions = 0, timeouts = 0;
      for (int i = 0; i < exp.runs; ++i) {
        const std::uint64_t seed = lane_change_seed(exp.master_seed, n, i);
        const ScenarioConfig sc = lane_change_scenario(n, seed, exp.scenario);
        SimEnvironment env(sc, exp.episode.grid, exp.episode.rewards,
                           exp.episode.world, exp.episode.rules, tables);
        PlannerConfig pc = exp.planner;
        pc.rng_seed = seed;
        auto policy = make_policy(planner_name, pc, exp.baseline,
                                  exp.episode.world, tables, support);
        const EpisodeLog log = run_episode(env, *policy, exp.episode.max_steps);
        switch (log.outcome) {
          case Outcome::kMerged:
            ++merged_n;
            ttm_sum += *log.time_to_merge_s;
            break;
          case Outcome::kCollision:
            ++collisions;
            break;
          case Outcome::kTimeout:
            ++timeouts;
            break;
        }
      }
      if (merged_n > 0) row.mean_time_to_merge_s = ttm_sum / merged_n;
      row.collision_rate = static_cast<double>(collisions) / exp.runs;
      row.timeout_rate = static_cast<double>(timeouts) / exp.runs;
      row.merge_rate = static_cast<double>(merged_n) / exp.runs;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double belief_accuracy(const ScenarioConfig& scenario,
                       const std::map<int, Belief>& beliefs,
                       std::shared_ptr<const ProfileSupport> support) {
  if (scenario.opponents.empty()) {
    throw std::invalid_argument("belief accuracy needs at least one opponent");
  }
  int accurate = 0;
  int id = kBlockageId + 1;
  for (const OpponentSpec& o : scenario.opponents) {
    const auto* q = std::get_if<ScriptedQLK>(&o.behavior);
    if (!q) {
      throw std::invalid_argument(
          "belief accuracy is undefined for non-scripted opponents");
    }
    const auto it = beliefs.find(id++);
    const Belief b = it != beliefs.end() ? it->second : Belief::uniform(support);
    if (b.level_probability(q->k) > 0.5) ++accurate;
  }
  return static_cast<double>(accurate) / scenario.opponents.size();
}

double run_belief_episode(const ScenarioConfig& scenario,
                          const PlannerConfig& planner,
                          const EpisodeSettings& episode,
                          std::shared_ptr<const QHierarchy> tables,
                          std::shared_ptr<const ProfileSupport> support) {
  TerminationRules rules = episode.rules;
  rules.stop_on_merge = false;
  rules.blockage_timeout = false;
  SimEnvironment env(scenario, episode.grid, episode.rewards, episode.world,
                     rules, tables);
  Planner p(tables, planner, support);
  run_episode(env, p, episode.max_steps);
  return belief_accuracy(scenario, *p.beliefs(), support);
}

std::vector<BeliefRow> eval_belief_accuracy(
    const BeliefExperiment& exp, std::shared_ptr<const QHierarchy> tables,
    std::shared_ptr<const ProfileSupport> support) {
  if (exp.runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (exp.lambdas.empty()) throw std::invalid_argument("lambdas must not be empty");
  std::set<int> level_set;
  for (const HiddenProfile& h : support->profiles()) level_set.insert(h.k);
  const std::vector<int> levels(level_set.begin(), level_set.end());

  EpisodeSettings episode = exp.episode;
  episode.max_steps = exp.steps;

  std::vector<BeliefRow> rows;
  for (int n : exp.opponent_counts) {
    const auto combos = level_combinations(levels, n);
    for (std::int64_t budget : exp.budgets) {
      for (bool ig : exp.info_gain) {
        PlannerConfig pc = exp.planner;
        pc.rollout_cap = budget;
        if (!ig) pc.info_gain_phi = 0.0;
        double total = 0.0;
        for (std::size_t c = 0; c < combos.size(); ++c) {
          double acc = 0.0;
          for (int i = 0; i < exp.runs; ++i) {
            const std::uint64_t seed = derive_seed(
                exp.master_seed,
                (static_cast<std::uint64_t>(n) * 1000 + c) * 1000003ULL + i);
            Rng rng(derive_seed(seed, 3));
            std::vector<ScriptedQLK> profiles;
            for (int k : combos[c]) {
              const auto li = std::min(
                  exp.lambdas.size() - 1,
                  static_cast<std::size_t>(uniform01(rng) * exp.lambdas.size()));
              profiles.push_back({k, exp.lambdas[li]});
            }
            const ScenarioConfig sc = belief_scenario(profiles, seed, exp.scenario);
            pc.rng_seed = seed;
            acc += run_belief_episode(sc, pc, episode, tables, support);
          }
          acc /= exp.runs;
          total += acc;
          rows.push_back({n, budget, ig, combo_name(combos[c]), exp.runs, acc});
        }
        rows.push_back({n, budget, ig, "all",
                        exp.runs * static_cast<int>(combos.size()),
                        total / combos.size()});
      }
    }
  }
  return rows;
}

}  // namespace qlk::harness
