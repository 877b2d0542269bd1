#pragma once

// EpisodeLog persistence as JSON lines: one header record, one record per
// step, one outcome record.

#include <iosfwd>
#include <vector>

#include "json.hpp"

#include "qlk/harness/scenario.h"

namespace qlk::harness {

inline constexpr int kEpisodeLogSchema = 1;

nlohmann::ordered_json snapshot_to_json(const WorldSnapshot& s);
nlohmann::ordered_json grid_to_json(const GridState& g);
nlohmann::ordered_json belief_to_json(int agent_id, const Belief& b);

// `header` is merged into the first record (scenario, seed, config, ...).
void write_episode_log(const EpisodeLog& log,
                       const nlohmann::ordered_json& header, std::ostream& out);

std::vector<nlohmann::json> read_json_lines(std::istream& in);

// Re-emits one {step, agent_id, support, probs} line per belief per step.
// Throws std::runtime_error on malformed input.
void write_belief_trace(std::istream& log, std::ostream& out);

}  // namespace qlk::harness
