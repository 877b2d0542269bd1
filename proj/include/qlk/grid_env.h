#pragma once

// Two-lane ego-centric grid world used for level-k training and for tree
// search rollouts. Everything here is a pure function of its inputs.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qlk {

enum class Lane : std::uint8_t { kEgo = 0, kTarget = 1 };

enum class EgoAction : std::uint8_t {
  kAccelerate = 0,
  kDecelerate = 1,
  kMaintain = 2,
  kIndicateIntent = 3,
  kLaneChange = 4,
};
inline constexpr int kNumEgoActions = 5;
inline constexpr std::array<EgoAction, kNumEgoActions> kAllEgoActions = {
    EgoAction::kAccelerate, EgoAction::kDecelerate, EgoAction::kMaintain,
    EgoAction::kIndicateIntent, EgoAction::kLaneChange};

enum class HumanAction : std::uint8_t {
  kAccelerate = 0,
  kDecelerate = 1,
  kMaintain = 2,
};
inline constexpr int kNumHumanActions = 3;
inline constexpr std::array<HumanAction, kNumHumanActions> kAllHumanActions = {
    HumanAction::kAccelerate, HumanAction::kDecelerate, HumanAction::kMaintain};

std::string_view to_string(EgoAction a);
std::string_view to_string(HumanAction a);
std::optional<EgoAction> parse_ego_action(std::string_view s);
std::optional<HumanAction> parse_human_action(std::string_view s);

// Raised when a caller breaks a documented precondition (wrong list sizes,
// duplicate keys, ...). Distinct from bad user input, which is
// std::invalid_argument.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct GridParams {
  int length_cells = 20;
  int lanes = 2;
  double cell_length_m = 2.0;
  int max_vel = 3;
  double step_duration_s = 1.0;
  // Longitudinal footprint of a vehicle in cells. Two entities on the same
  // lane whose centers come closer than this during a step collide. A value
  // of 1 gives pure same-cell / swap semantics.
  int vehicle_cells = 3;

  void validate() const;
  int center_cell() const { return length_cells / 2; }
  bool operator==(const GridParams&) const = default;
};

struct AgentPhysState {
  int cell = 0;
  Lane lane = Lane::kEgo;
  int vel = 0;
  bool operator==(const AgentPhysState&) const = default;
};

struct CellPos {
  int cell = 0;
  Lane lane = Lane::kEgo;
  bool operator==(const CellPos&) const = default;
};

// Physical state of the search / training game. Cells are indices of the
// frame the state was mapped in; lookahead may carry entities past the
// window edges, in which case they keep moving but can no longer be
// indexed directly (see canonical_pair).
struct GridState {
  AgentPhysState ego;
  bool indicating = false;
  std::vector<AgentPhysState> agents;
  std::vector<CellPos> obstacles;
  bool operator==(const GridState&) const = default;
};

struct RewardParams {
  double off_lane_penalty = -1.0;
  double collision_penalty = -100.0;
  double gamma = 0.95;
  // Human-role training objective only: penalty per velocity level below
  // max_vel after each step. The ego reward never uses it.
  double progress_weight = 1.0;

  void validate() const;
  bool operator==(const RewardParams&) const = default;
};

struct StepOutcome {
  GridState next_state;
  double reward = 0.0;
  double off_lane_reward = 0.0;
  double collision_reward = 0.0;
  bool collided = false;
  bool ego_on_target = false;
};

// One synchronous step: velocities update, then positions advance by the
// updated velocity. Collisions are only tracked for pairs involving the ego.
StepOutcome step(const GridState& state, EgoAction ego_action,
                 std::span<const HumanAction> human_actions,
                 const GridParams& params, const RewardParams& rewards);

int apply_velocity(int vel, HumanAction a, int max_vel);
int apply_velocity(int vel, EgoAction a, int max_vel);

// True iff two entities travelling on a common lane from offsets d0 to d1
// (linear in between) come closer than `extent` cells.
bool sweeps_within(int d0, int d1, int extent);

bool in_window(const AgentPhysState& s, const GridParams& params);

// --- enumeration -----------------------------------------------------------

std::int64_t num_states(const GridParams& params, int roster = 1);

// Bijection between obstacle-free states with exactly `roster` agents, all
// inside the window, and [0, num_states).
std::int64_t enumerate_state_index(const GridState& state,
                                   const GridParams& params, int roster = 1);
GridState state_from_index(std::int64_t index, const GridParams& params,
                           int roster = 1);

// Two-entity view used for Q lookups: the ego plus agent `slot`, shifted by a
// common offset so the pair sits centered in the window. Pairs further
// apart than the window are clamped to its two ends.
GridState canonical_pair(const GridState& state, std::size_t slot,
                         const GridParams& params);
std::int64_t pair_state_index(const GridState& state, std::size_t slot,
                              const GridParams& params);

// --- world mapping ---------------------------------------------------------

struct WorldVehicle {
  int id = 0;
  double x_m = 0.0;
  int lane = 0;
  double v_mps = 0.0;
  bool is_static = false;
};

struct EgoPose {
  double x_m = 0.0;
  Lane lane = Lane::kEgo;
  double v_mps = 0.0;
  bool indicating = false;
};

struct GridMapping {
  GridState state;
  std::vector<int> id_map;  // world id of each entry of state.agents
};

// Maps world vehicles into the grid. The window is centered on
// `frame_center_x` (defaults to the ego's position, which then lands on
// center_cell()). Vehicles outside the window or on unknown lanes are
// dropped; static vehicles become obstacles.
GridMapping map_from_world(std::span<const WorldVehicle> world,
                           const EgoPose& ego, const GridParams& params,
                           std::optional<double> frame_center_x = std::nullopt);

int velocity_level(double v_mps, const GridParams& params);

}  // namespace qlk
