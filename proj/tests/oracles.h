#pragma once

// Brute-force reference solvers shared by the unit tests and the acceptance
// binary. They only use the model definitions (grid step, training-game
// transition, belief update) and solve by plain recursion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "qlk/grid_env.h"
#include "qlk/levelk.h"
#include "qlk/planner.h"
#include "qlk/quantal.h"

namespace qlk::oracle {

// Finite-horizon expectimax for one seat of the training game. The other
// seat is frozen (empty policy) or plays `other_policy(s)`.
class TrainingExpectimax {
 public:
  using PolicyFn = std::vector<std::vector<double>>;  // per state, per action

  TrainingExpectimax(const TrainingGame& game, Role self,
                     std::optional<PolicyFn> other_policy)
      : game_(game), self_(self), other_(std::move(other_policy)) {}

  double q(std::int64_t s, int a, int depth) {
    if (depth <= 0) return 0.0;
    double acc = 0.0;
    auto add = [&](double p, std::optional<int> b) {
      const auto t = game_.transition(s, self_, a, b);
      double cont = game_.gamma() * t.terminal_value;
      if (t.next >= 0) cont = game_.gamma() * value(t.next, depth - 1);
      acc += p * (t.reward + cont);
    };
    if (!other_) {
      add(1.0, std::nullopt);
    } else {
      const auto& dist = (*other_)[s];
      for (std::size_t b = 0; b < dist.size(); ++b) {
        if (dist[b] > 0.0) add(dist[b], static_cast<int>(b));
      }
    }
    return acc;
  }

  double value(std::int64_t s, int depth) {
    if (depth <= 0) return 0.0;
    const auto key = std::make_pair(s, depth);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions(self_); ++a) best = std::max(best, q(s, a, depth));
    memo_[key] = best;
    return best;
  }

 private:
  const TrainingGame& game_;
  Role self_;
  std::optional<PolicyFn> other_;
  std::map<std::pair<std::int64_t, int>, double> memo_;
};

// Uniform over actions within `tie` of the best.
inline std::vector<double> argmax_uniform(const std::vector<double>& q,
                                          double tie) {
  const double best = *std::max_element(q.begin(), q.end());
  std::vector<double> p(q.size(), 0.0);
  int n = 0;
  for (double x : q) n += x >= best - tie ? 1 : 0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (q[a] >= best - tie) p[a] = 1.0 / n;
  }
  return p;
}

// Expected discounted return of each ego action over `depth` steps of the
// search model: opponents (at `slots`) sample from their belief-weighted
// quantal policies, other agents maintain, beliefs advance by Bayes along each
// branch and rewards carry the information-gain bonus. Collisions end a
// branch.
class SearchExpectimax {
 public:
  SearchExpectimax(const QHierarchy& tables, const PlannerConfig& cfg,
                   std::vector<std::size_t> slots)
      : t_(tables), cfg_(cfg), slots_(std::move(slots)) {}

  std::array<double, kNumEgoActions> action_values(
      const GridState& x, const std::vector<Belief>& beliefs, int depth) const {
    std::array<double, kNumEgoActions> out;
    out.fill(-std::numeric_limits<double>::infinity());
    for (EgoAction a : cfg_.ego_actions) {
      out[static_cast<int>(a)] = q(x, beliefs, a, depth);
    }
    return out;
  }

  double value(const GridState& x, const std::vector<Belief>& beliefs,
               int depth) const {
    if (depth <= 0) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (EgoAction a : cfg_.ego_actions) best = std::max(best, q(x, beliefs, a, depth));
    return best;
  }

  double q(const GridState& x, const std::vector<Belief>& beliefs, EgoAction a,
           int depth) const {
    const std::size_t n = slots_.size();
    std::vector<std::int64_t> idx(n);
    std::vector<PolicyDist> pol(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = pair_state_index(x, slots_[i], t_.grid);
      pol[i] = predictive_policy(beliefs[i], t_, idx[i]);
    }
    double acc = 0.0;
    std::vector<int> choice(n, 0);
    const int combos = static_cast<int>(std::pow(kNumHumanActions, n));
    for (int c = 0; c < combos; ++c) {
      int rem = c;
      double p = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        choice[i] = rem % kNumHumanActions;
        rem /= kNumHumanActions;
        p *= pol[i][choice[i]];
      }
      if (p == 0.0) continue;
      std::vector<HumanAction> joint(x.agents.size(), HumanAction::kMaintain);
      std::vector<Belief> next_b;
      for (std::size_t i = 0; i < n; ++i) {
        const auto h = static_cast<HumanAction>(choice[i]);
        joint[slots_[i]] = h;
        next_b.push_back(belief_update(beliefs[i], idx[i], h, t_));
      }
      const StepOutcome out = step(x, a, joint, t_.grid, t_.rewards);
      double r = out.reward;
      if (cfg_.info_gain_phi != 0.0) {
        double gain = 0.0;
        for (std::size_t i = 0; i < n; ++i) gain += entropy(beliefs[i]) - entropy(next_b[i]);
        r += cfg_.info_gain_phi * gain;
      }
      const double cont =
          out.collided ? 0.0 : value(out.next_state, next_b, depth - 1);
      acc += p * (r + cfg_.gamma * cont);
    }
    return acc;
  }

 private:
  const QHierarchy& t_;
  const PlannerConfig& cfg_;
  std::vector<std::size_t> slots_;
};

// Brute-force Bayes over an explicit joint table of (profile, observation).
inline std::vector<double> joint_bayes(const std::vector<double>& prior,
                                       const std::vector<double>& likelihood) {
  std::vector<double> joint(prior.size());
  double evidence = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    joint[i] = prior[i] * likelihood[i];
    evidence += joint[i];
  }
  for (double& j : joint) j /= evidence;
  return joint;
}

}  // namespace qlk::oracle
