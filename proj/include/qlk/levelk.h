#pragma once

// Offline level-k pre-computation on the two-player training game (one
// ego, one human) and persistence of the resulting Q-tables.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlk/grid_env.h"

namespace qlk {

// Which seat of the training pair a table belongs to. Human tables are what
// the online planner consumes; ego tables only exist to train the humans
// above them.
enum class Role : std::uint8_t { kHuman = 0, kEgo = 1 };

int num_actions(Role role);
std::string_view to_string(Role role);

struct TrainConfig {
  int k_max = 2;
  double gamma = 0.95;
  double tol = 1e-6;
  int max_iters = 10000;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Absolute gap under which two action values count as tied.
inline constexpr double kTieTolerance = 1e-5;

// Per-state action distribution of the *other* seat of the training pair.
// An empty table means the other seat is frozen in place (level-0 game).
struct OpponentPolicy {
  Role role = Role::kEgo;
  std::vector<double> probs;  // num_states * num_actions(role), row-major

  static OpponentPolicy frozen(Role role) { return {role, {}}; }
  bool is_frozen() const { return probs.empty(); }
  std::span<const double> at(std::int64_t s) const {
    const int n = num_actions(role);
    return {probs.data() + s * n, static_cast<std::size_t>(n)};
  }
};

struct ValueFunction {
  int level = 0;
  Role role = Role::kHuman;
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;  // sup-norm Bellman residual of `values`
};

struct QTable {
  int level = 0;
  Role role = Role::kHuman;
  std::vector<double> q;  // num_states * num_actions(role), row-major

  int actions() const { return num_actions(role); }
  std::int64_t states() const {
    return static_cast<std::int64_t>(q.size()) / actions();
  }
  std::span<const double> row(std::int64_t s) const {
    return {q.data() + s * actions(), static_cast<std::size_t>(actions())};
  }
  double at(std::int64_t s, int a) const { return q[s * actions() + a]; }
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(int level, Role role, double residual, int iterations);
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

// The training pair: state index space is the roster-1 enumeration of
// grid_env. The ego seat follows a signal-before-merge convention: a
// LaneChange requested while not indicating acts as IndicateIntent.
class TrainingGame {
 public:
  TrainingGame(GridParams params, RewardParams rewards, double gamma);

  struct Transition {
    double reward = 0.0;
    std::int64_t next = -1;       // -1 when the pair leaves the game
    double terminal_value = 0.0;  // value after leaving (0 after a crash)
  };

  // `other_action` empty means the other seat is frozen.
  Transition transition(std::int64_t s, Role self, int self_action,
                        std::optional<int> other_action) const;

  // Value of `self` once alone on an open road.
  double free_value(Role self, const AgentPhysState& phys,
                    bool indicating) const;

  const GridParams& params() const { return params_; }
  const RewardParams& rewards() const { return rewards_; }
  double gamma() const { return gamma_; }
  std::int64_t states() const { return states_; }

 private:
  GridParams params_;
  RewardParams rewards_;
  double gamma_;
  std::int64_t states_;
};

// Training-game ego action after the signal-before-merge convention.
EgoAction training_ego_action(EgoAction a, const GridState& s);

QTable compute_level0(const GridParams& params, const RewardParams& rewards,
                      const TrainConfig& cfg, Role role = Role::kHuman);

ValueFunction value_iteration(const OpponentPolicy& opponent, int level,
                              const GridParams& params,
                              const RewardParams& rewards,
                              const TrainConfig& cfg);

// One expected backup of `v` under the opponent policy; no iteration.
QTable compute_q(const ValueFunction& v, const OpponentPolicy& opponent,
                 int level, const GridParams& params,
                 const RewardParams& rewards, double gamma);

// Perfectly rational policy of `table`, uniform over actions tied within
// kTieTolerance.
OpponentPolicy argmax_policy(const QTable& table);

// Sup-norm of T(v) - v for the game induced by `opponent`.
double bellman_residual(const ValueFunction& v, const OpponentPolicy& opponent,
                        const GridParams& params, const RewardParams& rewards,
                        double gamma);

struct QHierarchy {
  GridParams grid;
  RewardParams rewards;
  TrainConfig train;
  std::vector<QTable> human;  // levels 0..k_max
  std::vector<QTable> ego;    // levels 0..k_max-1, not persisted

  int k_max() const { return static_cast<int>(human.size()) - 1; }
  const QTable& human_level(int k) const;
};

QHierarchy train_hierarchy(const TrainConfig& cfg, const GridParams& params,
                           const RewardParams& rewards);

// Binary layout (all little-endian):
//   "QLKQTAB\0" | u32 version | i32 length_cells, lanes, max_vel,
//   vehicle_cells | f64 cell_length_m, step_duration_s | f64 off_lane,
//   collision, gamma, progress_weight | f64 train gamma, tol | i32 max_iters
//   | i32 k_max | i64 num_states | i32 num_actions
//   | per level: i32 level, f64[num_states * num_actions]
inline constexpr std::uint32_t kQTableFormatVersion = 1;

void save_qtables(const QHierarchy& tables, const std::filesystem::path& path);
void write_qtables(const QHierarchy& tables, std::ostream& out);
QHierarchy load_qtables(const std::filesystem::path& path);
QHierarchy read_qtables(std::istream& in);

// Throws std::runtime_error naming the first field that differs.
void check_compatible(const QHierarchy& tables, const GridParams& grid,
                      const RewardParams& rewards);
QHierarchy load_qtables(const std::filesystem::path& path,
                        const GridParams& expected_grid,
                        const RewardParams& expected_rewards);

// Debug dump; float formatting is not canonical and the output is not meant
// to be read back.
void export_qtables_json(const QHierarchy& tables, std::ostream& out);

}  // namespace qlk
