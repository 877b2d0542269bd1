#include "qlk/levelk.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace qlk {

namespace {

Role other(Role r) { return r == Role::kHuman ? Role::kEgo : Role::kHuman; }

// Flattened expected-backup structure for one (self role, opponent policy)
// game: entries of (s, a) live in [offsets[s*A+a], offsets[s*A+a+1]).
struct BackupModel {
  int actions = 0;
  std::int64_t states = 0;
  std::vector<std::uint32_t> offsets;
  std::vector<double> prob;
  std::vector<double> base;  // immediate reward (+ gamma * exit value)
  std::vector<std::int32_t> next;

  double q(std::int64_t s, int a, std::span<const double> v,
           double gamma) const {
    double acc = 0.0;
    const std::size_t begin = offsets[s * actions + a];
    const std::size_t end = offsets[s * actions + a + 1];
    for (std::size_t e = begin; e < end; ++e) {
      const double cont = next[e] >= 0 ? gamma * v[next[e]] : 0.0;
      acc += prob[e] * (base[e] + cont);
    }
    return acc;
  }

  double best(std::int64_t s, std::span<const double> v, double gamma) const {
    double m = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < actions; ++a) m = std::max(m, q(s, a, v, gamma));
    return m;
  }
};

BackupModel build_model(const TrainingGame& game, Role self,
                        const OpponentPolicy& opponent) {
  if (opponent.role == self) {
    throw ContractViolation("opponent policy must belong to the other seat");
  }
  BackupModel m;
  m.actions = num_actions(self);
  m.states = game.states();
  if (!opponent.is_frozen() &&
      static_cast<std::int64_t>(opponent.probs.size()) !=
          m.states * num_actions(opponent.role)) {
    throw ContractViolation("opponent policy does not cover every state");
  }
  m.offsets.reserve(m.states * m.actions + 1);
  m.offsets.push_back(0);
  const int other_actions = num_actions(opponent.role);
  for (std::int64_t s = 0; s < m.states; ++s) {
    for (int a = 0; a < m.actions; ++a) {
      auto push = [&](double p, const TrainingGame::Transition& t) {
        m.prob.push_back(p);
        m.base.push_back(t.reward + game.gamma() * t.terminal_value);
        m.next.push_back(static_cast<std::int32_t>(t.next));
      };
      if (opponent.is_frozen()) {
        push(1.0, game.transition(s, self, a, std::nullopt));
      } else {
        const auto dist = opponent.at(s);
        for (int b = 0; b < other_actions; ++b) {
          if (dist[b] > 0.0) push(dist[b], game.transition(s, self, a, b));
        }
      }
      m.offsets.push_back(static_cast<std::uint32_t>(m.prob.size()));
    }
  }
  return m;
}

std::string level_name(int level, Role role) {
  return std::string(to_string(role)) + " level " + std::to_string(level);
}

ValueFunction solve(const BackupModel& m, int level, Role role, double gamma,
                    const TrainConfig& cfg) {
  std::vector<double> v(m.states, 0.0);
  std::vector<double> next(m.states, 0.0);
  double diff = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < cfg.max_iters) {
    diff = 0.0;
    for (std::int64_t s = 0; s < m.states; ++s) {
      next[s] = m.best(s, v, gamma);
      diff = std::max(diff, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    ++it;
    if (diff <= cfg.tol) break;
  }
  if (diff > cfg.tol) throw NonConvergenceError(level, role, diff, it);
  ValueFunction out;
  out.level = level;
  out.role = role;
  out.iterations = it;
  out.residual = 0.0;
  for (std::int64_t s = 0; s < m.states; ++s) {
    out.residual = std::max(out.residual, std::abs(m.best(s, v, gamma) - v[s]));
  }
  out.values = std::move(v);
  return out;
}

QTable backup_q(const BackupModel& m, const ValueFunction& v, int level,
                Role role, double gamma) {
  if (static_cast<std::int64_t>(v.values.size()) != m.states) {
    throw ContractViolation("value function size does not match the game");
  }
  QTable t;
  t.level = level;
  t.role = role;
  t.q.resize(m.states * m.actions);
  for (std::int64_t s = 0; s < m.states; ++s) {
    for (int a = 0; a < m.actions; ++a) {
      t.q[s * m.actions + a] = m.q(s, a, v.values, gamma);
    }
  }
  return t;
}

// --- little-endian IO --------------------------------------------------------

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}
void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}
void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}
void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw std::runtime_error(std::string("Q-table file truncated while reading ") +
                               what);
    }
  }
  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::int32_t i32(const char* what) {
    return static_cast<std::int32_t>(u32(what));
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

 private:
  std::istream& in_;
};

constexpr char kMagic[8] = {'Q', 'L', 'K', 'Q', 'T', 'A', 'B', '\0'};

template <typename T>
void require_equal(const char* field, const T& in_file, const T& expected) {
  if (!(in_file == expected)) {
    std::ostringstream os;
    os << "Q-table " << field << " mismatch: file has " << in_file
       << ", expected " << expected;
    throw std::runtime_error(os.str());
  }
}

}  // namespace

int num_actions(Role role) {
  return role == Role::kHuman ? kNumHumanActions : kNumEgoActions;
}

std::string_view to_string(Role role) {
  return role == Role::kHuman ? "human" : "ego";
}

void TrainConfig::validate() const {
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1)");
  }
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

NonConvergenceError::NonConvergenceError(int level, Role role, double residual,
                                         int iterations)
    : std::runtime_error("value iteration for " + level_name(level, role) +
                         " did not converge: residual " +
                         std::to_string(residual) + " after " +
                         std::to_string(iterations) + " iterations"),
      residual_(residual),
      iterations_(iterations) {}

TrainingGame::TrainingGame(GridParams params, RewardParams rewards,
                           double gamma)
    : params_(params),
      rewards_(rewards),
      gamma_(gamma),
      states_(num_states(params, 1)) {
  params_.validate();
  rewards_.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1)");
  }
}

EgoAction training_ego_action(EgoAction a, const GridState& s) {
  if (a == EgoAction::kLaneChange && !s.indicating &&
      s.ego.lane != Lane::kTarget) {
    return EgoAction::kIndicateIntent;
  }
  return a;
}

double TrainingGame::free_value(Role self, const AgentPhysState& phys,
                                bool indicating) const {
  const double off = phys.lane == Lane::kTarget ? 0.0 : rewards_.off_lane_penalty;
  if (self == Role::kEgo) {
    // Alone, the ego merges at once (after signalling if needed).
    if (phys.lane == Lane::kTarget || indicating) return 0.0;
    return rewards_.off_lane_penalty;
  }
  // Alone, a human accelerates to max_vel and stays there; it cannot leave
  // its lane.
  const int vmax = params_.max_vel;
  double v = off / (1.0 - gamma_);
  for (int vel = vmax - 1; vel >= std::clamp(phys.vel, 0, vmax); --vel) {
    const int after = vel + 1;
    v = off - rewards_.progress_weight * (vmax - after) + gamma_ * v;
  }
  return v;
}

TrainingGame::Transition TrainingGame::transition(
    std::int64_t s, Role self, int self_action,
    std::optional<int> other_action) const {
  const GridState start = state_from_index(s, params_, 1);
  GridState work = start;
  EgoAction ego_a = EgoAction::kMaintain;
  HumanAction human_a = HumanAction::kMaintain;
  bool freeze_ego = false;
  bool freeze_human = false;
  if (self == Role::kHuman) {
    human_a = static_cast<HumanAction>(self_action);
    if (other_action) {
      ego_a = training_ego_action(static_cast<EgoAction>(*other_action), start);
    } else {
      freeze_ego = true;
    }
  } else {
    ego_a = training_ego_action(static_cast<EgoAction>(self_action), start);
    if (other_action) {
      human_a = static_cast<HumanAction>(*other_action);
    } else {
      freeze_human = true;
    }
  }
  if (freeze_ego) work.ego.vel = 0;
  if (freeze_human) work.agents[0].vel = 0;

  const HumanAction acts[1] = {human_a};
  StepOutcome out = step(work, ego_a, acts, params_, rewards_);
  GridState& n = out.next_state;
  if (freeze_ego) n.ego.vel = start.ego.vel;
  if (freeze_human) n.agents[0].vel = start.agents[0].vel;

  Transition t;
  const AgentPhysState& human = n.agents[0];
  if (self == Role::kEgo) {
    t.reward = out.reward;
  } else {
    t.reward = (human.lane == Lane::kTarget ? 0.0 : rewards_.off_lane_penalty) +
               out.collision_reward -
               rewards_.progress_weight * (params_.max_vel - human.vel);
  }
  if (out.collided) return t;  // absorbing, nothing further
  if (!in_window(n.ego, params_) || !in_window(human, params_)) {
    t.terminal_value =
        free_value(self, self == Role::kEgo ? n.ego : human, n.indicating);
    return t;
  }
  t.next = enumerate_state_index(n, params_, 1);
  return t;
}

QTable compute_level0(const GridParams& params, const RewardParams& rewards,
                      const TrainConfig& cfg, Role role) {
  cfg.validate();
  const TrainingGame game(params, rewards, cfg.gamma);
  const OpponentPolicy frozen = OpponentPolicy::frozen(other(role));
  const BackupModel m = build_model(game, role, frozen);
  const ValueFunction v = solve(m, 0, role, cfg.gamma, cfg);
  return backup_q(m, v, 0, role, cfg.gamma);
}

ValueFunction value_iteration(const OpponentPolicy& opponent, int level,
                              const GridParams& params,
                              const RewardParams& rewards,
                              const TrainConfig& cfg) {
  cfg.validate();
  const TrainingGame game(params, rewards, cfg.gamma);
  const Role self = other(opponent.role);
  return solve(build_model(game, self, opponent), level, self, cfg.gamma, cfg);
}

QTable compute_q(const ValueFunction& v, const OpponentPolicy& opponent,
                 int level, const GridParams& params,
                 const RewardParams& rewards, double gamma) {
  const TrainingGame game(params, rewards, gamma);
  const Role self = other(opponent.role);
  return backup_q(build_model(game, self, opponent), v, level, self, gamma);
}

double bellman_residual(const ValueFunction& v, const OpponentPolicy& opponent,
                        const GridParams& params, const RewardParams& rewards,
                        double gamma) {
  const TrainingGame game(params, rewards, gamma);
  const BackupModel m = build_model(game, other(opponent.role), opponent);
  double r = 0.0;
  for (std::int64_t s = 0; s < m.states; ++s) {
    r = std::max(r, std::abs(m.best(s, v.values, gamma) - v.values[s]));
  }
  return r;
}

OpponentPolicy argmax_policy(const QTable& table) {
  OpponentPolicy p;
  p.role = table.role;
  const int n = table.actions();
  p.probs.assign(table.q.size(), 0.0);
  for (std::int64_t s = 0; s < table.states(); ++s) {
    const auto row = table.row(s);
    const double best = *std::max_element(row.begin(), row.end());
    int ties = 0;
    for (double q : row) ties += (q >= best - kTieTolerance) ? 1 : 0;
    for (int a = 0; a < n; ++a) {
      if (row[a] >= best - kTieTolerance) p.probs[s * n + a] = 1.0 / ties;
    }
  }
  return p;
}

const QTable& QHierarchy::human_level(int k) const {
  if (k < 0 || k > k_max()) {
    throw std::out_of_range("no human Q-table for level " + std::to_string(k) +
                            " (k_max = " + std::to_string(k_max()) + ")");
  }
  return human[k];
}

QHierarchy train_hierarchy(const TrainConfig& cfg, const GridParams& params,
                           const RewardParams& rewards) {
  cfg.validate();
  const TrainingGame game(params, rewards, cfg.gamma);
  QHierarchy h;
  h.grid = params;
  h.rewards = rewards;
  h.train = cfg;

  auto level = [&](Role self, const OpponentPolicy& opp, int k) {
    const BackupModel m = build_model(game, self, opp);
    const ValueFunction v = solve(m, k, self, cfg.gamma, cfg);
    return backup_q(m, v, k, self, cfg.gamma);
  };

  h.human.push_back(level(Role::kHuman, OpponentPolicy::frozen(Role::kEgo), 0));
  h.ego.push_back(level(Role::kEgo, OpponentPolicy::frozen(Role::kHuman), 0));
  for (int k = 1; k <= cfg.k_max; ++k) {
    h.human.push_back(level(Role::kHuman, argmax_policy(h.ego[k - 1]), k));
    if (k < cfg.k_max) {
      h.ego.push_back(level(Role::kEgo, argmax_policy(h.human[k - 1]), k));
    }
  }
  return h;
}

void write_qtables(const QHierarchy& t, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kQTableFormatVersion);
  put_i32(out, t.grid.length_cells);
  put_i32(out, t.grid.lanes);
  put_i32(out, t.grid.max_vel);
  put_i32(out, t.grid.vehicle_cells);
  put_f64(out, t.grid.cell_length_m);
  put_f64(out, t.grid.step_duration_s);
  put_f64(out, t.rewards.off_lane_penalty);
  put_f64(out, t.rewards.collision_penalty);
  put_f64(out, t.rewards.gamma);
  put_f64(out, t.rewards.progress_weight);
  put_f64(out, t.train.gamma);
  put_f64(out, t.train.tol);
  put_i32(out, t.train.max_iters);
  put_i32(out, t.k_max());
  const std::int64_t states = num_states(t.grid, 1);
  put_u64(out, static_cast<std::uint64_t>(states));
  put_i32(out, kNumHumanActions);
  for (const QTable& q : t.human) {
    if (q.states() != states || q.role != Role::kHuman) {
      throw ContractViolation("save_qtables: table shape does not match grid");
    }
    put_i32(out, q.level);
    for (double x : q.q) put_f64(out, x);
  }
  if (!out) throw std::runtime_error("failed writing Q-table stream");
}

void save_qtables(const QHierarchy& tables, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_qtables(tables, out);
}

QHierarchy read_qtables(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a Q-table file (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  require_equal("format version", version, kQTableFormatVersion);

  QHierarchy t;
  t.grid.length_cells = r.i32("length_cells");
  t.grid.lanes = r.i32("lanes");
  t.grid.max_vel = r.i32("max_vel");
  t.grid.vehicle_cells = r.i32("vehicle_cells");
  t.grid.cell_length_m = r.f64("cell_length_m");
  t.grid.step_duration_s = r.f64("step_duration_s");
  t.rewards.off_lane_penalty = r.f64("off_lane_penalty");
  t.rewards.collision_penalty = r.f64("collision_penalty");
  t.rewards.gamma = r.f64("gamma");
  t.rewards.progress_weight = r.f64("progress_weight");
  t.train.gamma = r.f64("train gamma");
  t.train.tol = r.f64("train tol");
  t.train.max_iters = r.i32("train max_iters");
  t.train.k_max = r.i32("k_max");
  try {
    t.grid.validate();
    t.rewards.validate();
    t.train.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corrupt Q-table header: ") + e.what());
  }
  const std::uint64_t states = r.u64("num_states");
  require_equal("num_states", states,
                static_cast<std::uint64_t>(num_states(t.grid, 1)));
  const std::int32_t actions = r.i32("num_actions");
  require_equal("num_actions", actions, kNumHumanActions);

  for (int k = 0; k <= t.train.k_max; ++k) {
    QTable q;
    q.role = Role::kHuman;
    q.level = r.i32("level id");
    require_equal("level id", q.level, k);
    q.q.resize(states * actions);
    for (double& x : q.q) x = r.f64("q values");
    t.human.push_back(std::move(q));
  }
  return t;
}

QHierarchy load_qtables(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open Q-table file " + path.string());
  return read_qtables(in);
}

void check_compatible(const QHierarchy& t, const GridParams& g,
                      const RewardParams& r) {
  require_equal("length_cells", t.grid.length_cells, g.length_cells);
  require_equal("lanes", t.grid.lanes, g.lanes);
  require_equal("max_vel", t.grid.max_vel, g.max_vel);
  require_equal("vehicle_cells", t.grid.vehicle_cells, g.vehicle_cells);
  require_equal("cell_length_m", t.grid.cell_length_m, g.cell_length_m);
  require_equal("step_duration_s", t.grid.step_duration_s, g.step_duration_s);
  require_equal("off_lane_penalty", t.rewards.off_lane_penalty,
                r.off_lane_penalty);
  require_equal("collision_penalty", t.rewards.collision_penalty,
                r.collision_penalty);
  require_equal("gamma", t.rewards.gamma, r.gamma);
  require_equal("progress_weight", t.rewards.progress_weight,
                r.progress_weight);
}

QHierarchy load_qtables(const std::filesystem::path& path,
                        const GridParams& expected_grid,
                        const RewardParams& expected_rewards) {
  QHierarchy t = load_qtables(path);
  check_compatible(t, expected_grid, expected_rewards);
  return t;
}

void export_qtables_json(const QHierarchy& t, std::ostream& out) {
  out << "{\"canonical\":false,\"k_max\":" << t.k_max()
      << ",\"length_cells\":" << t.grid.length_cells
      << ",\"max_vel\":" << t.grid.max_vel << ",\"levels\":[";
  out << std::setprecision(6);
  for (std::size_t l = 0; l < t.human.size(); ++l) {
    const QTable& q = t.human[l];
    out << (l ? "," : "") << "{\"level\":" << q.level << ",\"q\":[";
    for (std::int64_t s = 0; s < q.states(); ++s) {
      const auto row = q.row(s);
      out << (s ? "," : "") << '[' << row[0] << ',' << row[1] << ',' << row[2]
          << ']';
    }
    out << "]}";
  }
  out << "]}\n";
}

}  // namespace qlk
