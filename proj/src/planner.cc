#include "qlk/planner.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace qlk {

namespace {

constexpr std::size_t kMaxTreeOpponents = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!rollout_cap && !(time_allowance_s > 0.0)) {
    throw std::invalid_argument(
        "time_allowance_s must be positive unless rollout_cap is set");
  }
  if (rollout_cap && *rollout_cap < 1) {
    throw std::invalid_argument("rollout_cap must be >= 1");
  }
  if (!(info_gain_phi >= 0.0)) {
    throw std::invalid_argument("info_gain_phi must be >= 0");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("planner gamma must lie in (0, 1]");
  }
  if (!(exploration_c >= 0.0)) {
    throw std::invalid_argument("exploration_c must be >= 0");
  }
  if (ego_actions.empty()) {
    throw std::invalid_argument("ego_actions must not be empty");
  }
  for (std::size_t i = 0; i < ego_actions.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (ego_actions[i] == ego_actions[j]) {
        throw std::invalid_argument("ego_actions contains duplicates");
      }
    }
  }
}

OpponentSet select_opponents(const GridState& state,
                             std::span<const int> id_map) {
  if (id_map.size() != state.agents.size()) {
    throw ContractViolation("select_opponents: id_map does not match agents");
  }
  struct Candidate {
    int distance;
    int id;
    std::size_t slot;
    int offset;
  };
  std::vector<Candidate> c;
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const int offset = state.agents[i].cell - state.ego.cell;
    c.push_back({std::abs(offset), id_map[i], i, offset});
  }
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.distance, a.id) < std::tie(b.distance, b.id);
  });

  OpponentSet out;
  if (c.empty()) return out;
  out.ids.push_back(c[0].id);
  out.slots.push_back(c[0].slot);
  out.rationale = OpponentRationale::kNearestOnly;
  if (c.size() == 1) return out;
  const bool same_side = (c[0].offset > 0 && c[1].offset > 0) ||
                         (c[0].offset < 0 && c[1].offset < 0);
  if (!same_side) {
    out.ids.push_back(c[1].id);
    out.slots.push_back(c[1].slot);
    out.rationale = OpponentRationale::kBothSides;
  }
  return out;
}

std::size_t SearchNode::subtree_size() const {
  std::size_t n = 1;
  for (const auto& [key, child] : children) n += child->subtree_size();
  return n;
}

std::uint32_t child_key(EgoAction a_e, std::span<const HumanAction> a_o) {
  std::uint32_t key = static_cast<std::uint32_t>(a_e);
  for (HumanAction a : a_o) {
    key = key * kNumHumanActions + static_cast<std::uint32_t>(a);
  }
  return key;
}

SearchTree::SearchTree(std::shared_ptr<const QHierarchy> tables,
                       PlannerConfig cfg, GridState root_state,
                       std::vector<std::size_t> opponent_slots,
                       std::vector<Belief> beliefs, std::uint64_t seed)
    : tables_(std::move(tables)),
      cfg_(std::move(cfg)),
      slots_(std::move(opponent_slots)),
      rng_(seed) {
  if (!tables_) throw std::invalid_argument("SearchTree needs Q-tables");
  cfg_.validate();
  std::sort(cfg_.ego_actions.begin(), cfg_.ego_actions.end());
  if (slots_.size() != beliefs.size()) {
    throw ContractViolation("one belief per opponent required");
  }
  if (slots_.size() > kMaxTreeOpponents) {
    throw ContractViolation("too many tree opponents");
  }
  for (std::size_t s : slots_) {
    if (s >= root_state.agents.size()) {
      throw ContractViolation("opponent slot out of range");
    }
  }
  root_ = std::make_unique<SearchNode>();
  root_->x = std::move(root_state);
  root_->beliefs = std::move(beliefs);
  init_node(*root_);
}

void SearchTree::init_node(SearchNode& node) const {
  node.unsampled = cfg_.ego_actions;
  node.opponent_index.clear();
  node.opponent_policy.clear();
  if (node.terminal) return;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const std::int64_t idx = pair_state_index(node.x, slots_[i], tables_->grid);
    node.opponent_index.push_back(idx);
    node.opponent_policy.push_back(
        predictive_policy(node.beliefs[i], *tables_, idx));
  }
}

double SearchTree::uniform01() {
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

HumanAction SearchTree::sample(const PolicyDist& p) {
  const double u = uniform01();
  double acc = 0.0;
  for (int a = 0; a < kNumHumanActions - 1; ++a) {
    acc += p[a];
    if (u < acc) return static_cast<HumanAction>(a);
  }
  return static_cast<HumanAction>(kNumHumanActions - 1);
}

EgoAction SearchTree::select_action(SearchNode& node) {
  if (!node.unsampled.empty()) {
    const std::size_t i = std::min(
        node.unsampled.size() - 1,
        static_cast<std::size_t>(uniform01() * node.unsampled.size()));
    const EgoAction a = node.unsampled[i];
    node.unsampled.erase(node.unsampled.begin() + static_cast<std::ptrdiff_t>(i));
    return a;
  }
  const double log_n = std::log(static_cast<double>(node.visits));
  EgoAction best = cfg_.ego_actions.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (EgoAction a : cfg_.ego_actions) {
    const int i = static_cast<int>(a);
    const double score =
        node.values[i] +
        cfg_.exploration_c *
            std::sqrt(log_n / static_cast<double>(node.action_visits[i]));
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

SearchNode& SearchTree::expand(SearchNode& node, EgoAction a_e,
                               std::span<const HumanAction> a_o) {
  if (a_o.size() != slots_.size()) {
    throw ContractViolation("expand: one action per opponent required");
  }
  const std::uint32_t key = child_key(a_e, a_o);
  if (node.children.contains(key)) {
    throw ContractViolation("expand: child already exists");
  }
  std::vector<HumanAction> joint(node.x.agents.size(), HumanAction::kMaintain);
  for (std::size_t i = 0; i < slots_.size(); ++i) joint[slots_[i]] = a_o[i];
  StepOutcome out = step(node.x, a_e, joint, tables_->grid, tables_->rewards);

  auto child = std::make_unique<SearchNode>();
  child->x = std::move(out.next_state);
  child->depth = node.depth + 1;
  child->terminal = out.collided;
  child->beliefs.reserve(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    child->beliefs.push_back(belief_update(node.beliefs[i],
                                           node.opponent_index[i], a_o[i],
                                           *tables_));
  }
  child->reward = out.reward;
  if (cfg_.info_gain_phi != 0.0) {
    child->reward += cfg_.info_gain_phi * info_gain(node.beliefs, child->beliefs);
  }
  init_node(*child);
  SearchNode& ref = *child;
  node.children.emplace(key, std::move(child));
  return ref;
}

double SearchTree::rollout(SearchNode& node) {
  if (node.depth >= cfg_.horizon || node.terminal) return 0.0;
  const EgoAction a_e = select_action(node);
  std::array<HumanAction, kMaxTreeOpponents> buf{};
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    buf[i] = sample(node.opponent_policy[i]);
  }
  const std::span<const HumanAction> a_o(buf.data(), slots_.size());
  const auto it = node.children.find(child_key(a_e, a_o));
  SearchNode& child =
      it == node.children.end() ? expand(node, a_e, a_o) : *it->second;
  const double ret = child.reward + cfg_.gamma * rollout(child);
  const int a = static_cast<int>(a_e);
  node.visits += 1;
  node.action_visits[a] += 1;
  node.values[a] += (ret - node.values[a]) /
                    static_cast<double>(node.action_visits[a]);
  return ret;
}

void SearchTree::run_rollouts(std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    rollout(*root_);
    ++last_rollouts_;
  }
}

EgoAction SearchTree::search() {
  last_rollouts_ = 0;
  if (cfg_.rollout_cap) {
    run_rollouts(*cfg_.rollout_cap);
  } else {
    using Clock = std::chrono::steady_clock;
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(cfg_.time_allowance_s));
    while (Clock::now() < deadline) {
      rollout(*root_);
      ++last_rollouts_;
    }
  }
  if (last_rollouts_ == 0) {
    throw std::runtime_error("search completed no rollouts; allowance too small");
  }
  return best_action();
}

EgoAction SearchTree::best_action() const {
  std::optional<EgoAction> best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (EgoAction a : cfg_.ego_actions) {
    const int i = static_cast<int>(a);
    if (root_->action_visits[i] == 0) continue;
    if (!best || root_->values[i] > best_value) {
      best = a;
      best_value = root_->values[i];
    }
  }
  if (!best) throw std::runtime_error("no root action has been sampled");
  return *best;
}

bool SearchTree::reroot(EgoAction executed,
                        std::span<const HumanAction> opponent_actions,
                        const GridState& observation) {
  if (opponent_actions.size() != slots_.size()) return false;
  const auto it = root_->children.find(child_key(executed, opponent_actions));
  // A collided child is absorbing for the model; the real world may have
  // carried on, so such a child is never promoted.
  if (it == root_->children.end() || it->second->terminal ||
      !(it->second->x == observation)) {
    return false;
  }
  std::unique_ptr<SearchNode> child = std::move(it->second);
  const int shift = child->depth;
  std::vector<SearchNode*> stack{child.get()};
  while (!stack.empty()) {
    SearchNode* n = stack.back();
    stack.pop_back();
    n->depth -= shift;
    for (auto& [key, c] : n->children) stack.push_back(c.get());
  }
  root_ = std::move(child);
  return true;
}

std::vector<std::optional<HumanAction>> infer_opponent_actions(
    const GridState& prev, std::span<const int> prev_ids, const GridState& next,
    std::span<const int> next_ids, const GridParams& params) {
  if (prev_ids.size() != prev.agents.size() ||
      next_ids.size() != next.agents.size()) {
    throw ContractViolation("infer_opponent_actions: id maps do not match");
  }
  std::vector<std::optional<HumanAction>> out(prev.agents.size());
  for (std::size_t i = 0; i < prev.agents.size(); ++i) {
    const auto found = std::find(next_ids.begin(), next_ids.end(), prev_ids[i]);
    if (found == next_ids.end()) continue;
    const AgentPhysState& before = prev.agents[i];
    const AgentPhysState& after = next.agents[found - next_ids.begin()];
    auto distance = [&](HumanAction a) {
      const int vel = apply_velocity(before.vel, a, params.max_vel);
      return std::abs(before.cell + vel - after.cell) + std::abs(vel - after.vel);
    };
    HumanAction best = HumanAction::kMaintain;
    int best_d = distance(best);
    for (HumanAction a : {HumanAction::kAccelerate, HumanAction::kDecelerate}) {
      const int d = distance(a);
      if (d < best_d) {
        best = a;
        best_d = d;
      }
    }
    out[i] = best;
  }
  return out;
}

Planner::Planner(std::shared_ptr<const QHierarchy> tables, PlannerConfig cfg,
                 std::shared_ptr<const ProfileSupport> support)
    : tables_(std::move(tables)),
      cfg_(std::move(cfg)),
      support_(std::move(support)) {
  if (!tables_ || !support_) {
    throw std::invalid_argument("Planner needs Q-tables and a profile support");
  }
  cfg_.validate();
  if (support_->max_level() > tables_->k_max()) {
    throw std::invalid_argument("profile support references level " +
                                std::to_string(support_->max_level()) +
                                " but tables stop at k_max = " +
                                std::to_string(tables_->k_max()));
  }
}

Belief Planner::belief_for(int id) const {
  const auto it = beliefs_.find(id);
  return it != beliefs_.end() ? it->second : Belief::uniform(support_);
}

void Planner::rebuild_tree(const GridMapping& mapping,
                           const OpponentSet& opponents,
                           double frame_center_x) {
  std::vector<Belief> beliefs;
  for (int id : opponents.ids) beliefs.push_back(belief_for(id));
  tree_ = std::make_unique<SearchTree>(
      tables_, cfg_, mapping.state, opponents.slots, std::move(beliefs),
      splitmix64(cfg_.rng_seed ^ splitmix64(static_cast<std::uint64_t>(step_))));
  tree_ids_ = mapping.id_map;
  opponent_ids_ = opponents.ids;
  frame_center_x_ = frame_center_x;
}

void Planner::observe(const WorldSnapshot& snapshot) {
  const GridParams& grid = tables_->grid;
  diag_ = StepDiagnostics{};
  const GridMapping centered =
      map_from_world(snapshot.vehicles, snapshot.ego, grid);

  std::map<int, HumanAction> inferred_by_id;
  if (prev_mapping_ && last_action_) {
    // Infer in the previous ego-centred frame so both states share a grid.
    const GridMapping next_in_prev =
        map_from_world(snapshot.vehicles, snapshot.ego, grid, prev_ego_x_);
    const GridState& prev = prev_mapping_->state;
    const auto inferred =
        infer_opponent_actions(prev, prev_mapping_->id_map, next_in_prev.state,
                               next_in_prev.id_map, grid);
    for (std::size_t i = 0; i < inferred.size(); ++i) {
      if (!inferred[i]) continue;
      const int id = prev_mapping_->id_map[i];
      beliefs_.insert_or_assign(
          id, belief_update(belief_for(id), pair_state_index(prev, i, grid),
                            *inferred[i], *tables_));
      inferred_by_id[id] = *inferred[i];
    }
  }
  diag_.inferred = inferred_by_id;
  prev_mapping_ = centered;
  prev_ego_x_ = snapshot.ego.x_m;

  if (tree_ && last_action_ && try_reuse(snapshot, inferred_by_id)) return;

  const OpponentSet opponents = select_opponents(centered.state, centered.id_map);
  rebuild_tree(centered, opponents, snapshot.ego.x_m);
  diag_.grid = centered.state;
  diag_.grid_ids = centered.id_map;
  diag_.opponent_ids = opponents.ids;
}

bool Planner::try_reuse(const WorldSnapshot& snapshot,
                        const std::map<int, HumanAction>& inferred) {
  const GridMapping in_frame = map_from_world(
      snapshot.vehicles, snapshot.ego, tables_->grid, frame_center_x_);
  if (in_frame.id_map != tree_ids_) return false;
  const OpponentSet opponents =
      select_opponents(in_frame.state, in_frame.id_map);
  if (opponents.ids != opponent_ids_) return false;
  std::vector<HumanAction> acts;
  for (int id : opponent_ids_) {
    const auto it = inferred.find(id);
    if (it == inferred.end()) return false;
    acts.push_back(it->second);
  }
  const auto key = child_key(*last_action_, acts);
  const auto& children = tree_->root().children;
  const auto child = children.find(key);
  if (child == children.end()) return false;
  // The subtree is only valid if it was grown from the beliefs we now hold.
  for (std::size_t i = 0; i < opponent_ids_.size(); ++i) {
    if (!(child->second->beliefs[i] == belief_for(opponent_ids_[i]))) {
      return false;
    }
  }
  if (!tree_->reroot(*last_action_, acts, in_frame.state)) return false;
  diag_.grid = in_frame.state;
  diag_.grid_ids = in_frame.id_map;
  diag_.opponent_ids = opponent_ids_;
  diag_.reused_subtree = true;
  return true;
}

EgoAction Planner::act() {
  if (!tree_) throw std::logic_error("Planner::act called before observe");
  const EgoAction a = tree_->search();
  last_action_ = a;
  ++step_;
  diag_.rollouts = tree_->last_search_rollouts();
  diag_.root_values = tree_->root().values;
  diag_.root_visits = tree_->root().action_visits;
  return a;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kMerged:
      return "Merged";
    case Outcome::kCollision:
      return "Collision";
    case Outcome::kTimeout:
      break;
  }
  return "Timeout";
}

EpisodeLog run_episode(Environment& env, EgoPolicy& policy, int max_steps) {
  EpisodeLog log;
  log.planner = policy.name();
  for (int step = 0;; ++step) {
    if (const auto status = env.status()) {
      log.outcome = *status;
      break;
    }
    if (step >= max_steps) {
      log.outcome = Outcome::kTimeout;
      break;
    }
    StepRecord rec;
    rec.step = step;
    rec.world = env.snapshot();
    policy.observe(rec.world);
    rec.action = policy.act();
    if (const StepDiagnostics* d = policy.diagnostics()) rec.search = *d;
    if (const auto* b = policy.beliefs()) {
      rec.beliefs.assign(b->begin(), b->end());
    }
    rec.reward = env.execute(rec.action);
    log.steps.push_back(std::move(rec));
  }
  log.final_world = env.snapshot();
  if (log.outcome == Outcome::kMerged) {
    log.time_to_merge_s = log.final_world.time_s;
  }
  return log;
}

EpisodeLog plan_episode(Environment& env,
                        std::shared_ptr<const QHierarchy> tables,
                        const PlannerConfig& cfg,
                        std::shared_ptr<const ProfileSupport> support,
                        int max_steps) {
  Planner planner(std::move(tables), cfg, std::move(support));
  return run_episode(env, planner, max_steps);
}

}  // namespace qlk
