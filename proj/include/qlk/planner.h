#pragma once

// Online game-theoretic planner: anytime MCTS over the grid model with
// belief-weighted quantal level-k opponents and an information-gain bonus.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qlk/grid_env.h"
#include "qlk/levelk.h"
#include "qlk/quantal.h"

namespace qlk {

struct PlannerConfig {
  int horizon = 4;
  double time_allowance_s = 1.0;
  double exploration_c = 2.0;
  double gamma = 0.95;
  double info_gain_phi = 5.0;
  std::uint64_t rng_seed = 0;
  // Fixed number of rollouts per search instead of the wall-clock budget.
  std::optional<std::int64_t> rollout_cap;
  std::vector<EgoAction> ego_actions{kAllEgoActions.begin(),
                                     kAllEgoActions.end()};

  void validate() const;
};

enum class OpponentRationale : std::uint8_t { kNone, kNearestOnly, kBothSides };

struct OpponentSet {
  std::vector<int> ids;            // world ids, nearest first
  std::vector<std::size_t> slots;  // matching indices into GridState::agents
  OpponentRationale rationale = OpponentRationale::kNone;
};

OpponentSet select_opponents(const GridState& state, std::span<const int> id_map);

struct SearchNode {
  GridState x;
  std::vector<Belief> beliefs;  // aligned with the tree's opponents
  int depth = 0;
  std::int64_t visits = 0;
  std::array<std::int64_t, kNumEgoActions> action_visits{};
  std::array<double, kNumEgoActions> values{};
  std::vector<EgoAction> unsampled;
  std::map<std::uint32_t, std::unique_ptr<SearchNode>> children;
  double reward = 0.0;  // environment reward + phi * info gain on arrival
  bool terminal = false;

  // Per-opponent pair index at x and belief-weighted policy, cached at
  // creation.
  std::vector<std::int64_t> opponent_index;
  std::vector<PolicyDist> opponent_policy;

  std::size_t subtree_size() const;
};

std::uint32_t child_key(EgoAction a_e, std::span<const HumanAction> a_o);

class SearchTree {
 public:
  SearchTree(std::shared_ptr<const QHierarchy> tables, PlannerConfig cfg,
             GridState root_state, std::vector<std::size_t> opponent_slots,
             std::vector<Belief> beliefs, std::uint64_t seed);

  // Runs the configured budget (rollout_cap or wall clock) and returns the
  // best root action. Throws if no rollout completed.
  EgoAction search();
  void run_rollouts(std::int64_t n);
  EgoAction best_action() const;

  double rollout(SearchNode& node);
  SearchNode& expand(SearchNode& node, EgoAction a_e,
                     std::span<const HumanAction> a_o);

  // Promotes the child reached by (executed, opponent actions) if its state
  // equals `observation`; returns false (tree untouched) otherwise.
  bool reroot(EgoAction executed, std::span<const HumanAction> opponent_actions,
              const GridState& observation);

  const SearchNode& root() const { return *root_; }
  SearchNode& mutable_root() { return *root_; }
  std::span<const std::size_t> opponent_slots() const { return slots_; }
  std::int64_t last_search_rollouts() const { return last_rollouts_; }
  const PlannerConfig& config() const { return cfg_; }

 private:
  void init_node(SearchNode& node) const;
  EgoAction select_action(SearchNode& node);
  HumanAction sample(const PolicyDist& p);
  double uniform01();

  std::shared_ptr<const QHierarchy> tables_;
  PlannerConfig cfg_;
  std::vector<std::size_t> slots_;
  std::unique_ptr<SearchNode> root_;
  std::mt19937_64 rng_;
  std::int64_t last_rollouts_ = 0;
};

// Recovers each tracked agent's discrete action between two grid states of
// the same frame. Entry i refers to prev.agents[i]; empty when that agent is
// missing from `next`.
std::vector<std::optional<HumanAction>> infer_opponent_actions(
    const GridState& prev, std::span<const int> prev_ids, const GridState& next,
    std::span<const int> next_ids, const GridParams& params);

// --- stepwise interface ----------------------------------------------------

struct WorldSnapshot {
  double time_s = 0.0;
  EgoPose ego;
  std::vector<WorldVehicle> vehicles;
};

struct StepDiagnostics {
  GridState grid;
  std::vector<int> grid_ids;
  std::vector<int> opponent_ids;
  std::map<int, HumanAction> inferred;
  std::int64_t rollouts = 0;
  std::array<double, kNumEgoActions> root_values{};
  std::array<std::int64_t, kNumEgoActions> root_visits{};
  bool reused_subtree = false;
};

class EgoPolicy {
 public:
  virtual ~EgoPolicy() = default;
  virtual std::string name() const = 0;
  virtual void observe(const WorldSnapshot& snapshot) = 0;
  virtual EgoAction act() = 0;
  virtual const StepDiagnostics* diagnostics() const { return nullptr; }
  virtual const std::map<int, Belief>* beliefs() const { return nullptr; }
};

class Planner : public EgoPolicy {
 public:
  Planner(std::shared_ptr<const QHierarchy> tables, PlannerConfig cfg,
          std::shared_ptr<const ProfileSupport> support);

  std::string name() const override { return "qlk-mcts"; }
  void observe(const WorldSnapshot& snapshot) override;
  EgoAction act() override;
  const StepDiagnostics* diagnostics() const override { return &diag_; }
  const std::map<int, Belief>* beliefs() const override { return &beliefs_; }

  const SearchTree* tree() const { return tree_.get(); }

 private:
  Belief belief_for(int id) const;
  void rebuild_tree(const GridMapping& mapping, const OpponentSet& opponents,
                    double frame_center_x);
  bool try_reuse(const WorldSnapshot& snapshot,
                 const std::map<int, HumanAction>& inferred);

  std::shared_ptr<const QHierarchy> tables_;
  PlannerConfig cfg_;
  std::shared_ptr<const ProfileSupport> support_;
  std::map<int, Belief> beliefs_;
  std::unique_ptr<SearchTree> tree_;
  std::vector<int> tree_ids_;      // world ids of tree_->root().x.agents
  std::vector<int> opponent_ids_;  // world ids of the tree's opponents
  double frame_center_x_ = 0.0;    // world x of the tree's frame center
  // Ego-centred mapping of the previous observation; beliefs are updated on
  // the state each opponent acted from.
  std::optional<GridMapping> prev_mapping_;
  double prev_ego_x_ = 0.0;
  std::optional<EgoAction> last_action_;
  std::int64_t step_ = 0;
  StepDiagnostics diag_;
};

// --- episodes ----------------------------------------------------------------

enum class Outcome : std::uint8_t { kMerged, kCollision, kTimeout };
std::string_view to_string(Outcome o);

class Environment {
 public:
  virtual ~Environment() = default;
  virtual WorldSnapshot snapshot() const = 0;
  // Applies the ego action for one step and returns the ego's reward.
  virtual double execute(EgoAction action) = 0;
  virtual std::optional<Outcome> status() const = 0;
};

struct StepRecord {
  int step = 0;
  WorldSnapshot world;
  EgoAction action = EgoAction::kMaintain;
  double reward = 0.0;
  std::optional<StepDiagnostics> search;
  std::vector<std::pair<int, Belief>> beliefs;
};

struct EpisodeLog {
  std::string planner;
  std::vector<StepRecord> steps;
  WorldSnapshot final_world;
  Outcome outcome = Outcome::kTimeout;
  std::optional<double> time_to_merge_s;
};

EpisodeLog run_episode(Environment& env, EgoPolicy& policy, int max_steps);
EpisodeLog plan_episode(Environment& env,
                        std::shared_ptr<const QHierarchy> tables,
                        const PlannerConfig& cfg,
                        std::shared_ptr<const ProfileSupport> support,
                        int max_steps);

}  // namespace qlk
