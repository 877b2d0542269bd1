#include "qlk/harness/episode_log.h"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace qlk::harness {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json snapshot_to_json(const WorldSnapshot& s) {
  ordered_json vehicles = ordered_json::array();
  for (const WorldVehicle& v : s.vehicles) {
    vehicles.push_back({{"id", v.id},
                        {"x_m", v.x_m},
                        {"lane", v.lane},
                        {"v_mps", v.v_mps},
                        {"static", v.is_static}});
  }
  return {{"time_s", s.time_s},
          {"ego",
           {{"x_m", s.ego.x_m},
            {"lane", static_cast<int>(s.ego.lane)},
            {"v_mps", s.ego.v_mps},
            {"indicating", s.ego.indicating}}},
          {"vehicles", std::move(vehicles)}};
}

ordered_json grid_to_json(const GridState& g) {
  auto phys = [](const AgentPhysState& a) {
    return ordered_json{{"cell", a.cell}, {"lane", static_cast<int>(a.lane)}, {"vel", a.vel}};
  };
  ordered_json agents = ordered_json::array();
  for (const auto& a : g.agents) agents.push_back(phys(a));
  ordered_json obstacles = ordered_json::array();
  for (const auto& o : g.obstacles) {
    obstacles.push_back({{"cell", o.cell}, {"lane", static_cast<int>(o.lane)}});
  }
  return {{"ego", phys(g.ego)},
          {"indicating", g.indicating},
          {"agents", std::move(agents)},
          {"obstacles", std::move(obstacles)}};
}

ordered_json belief_to_json(int agent_id, const Belief& b) {
  ordered_json support = ordered_json::array();
  for (const HiddenProfile& p : b.support().profiles()) {
    support.push_back({p.k, p.lambda});
  }
  return {{"agent_id", agent_id},
          {"support", std::move(support)},
          {"probs", std::vector<double>(b.probs().begin(), b.probs().end())}};
}

void write_episode_log(const EpisodeLog& log, const ordered_json& header,
                       std::ostream& out) {
  ordered_json h = {{"type", "header"},
                    {"schema", kEpisodeLogSchema},
                    {"planner", log.planner}};
  for (const auto& [key, value] : header.items()) h[key] = value;
  out << h.dump() << '\n';

  for (const StepRecord& r : log.steps) {
    ordered_json rec = {{"type", "step"},
                        {"step", r.step},
                        {"world", snapshot_to_json(r.world)},
                        {"action", to_string(r.action)},
                        {"reward", r.reward}};
    if (r.search) {
      const StepDiagnostics& d = *r.search;
      ordered_json inferred = ordered_json::object();
      for (const auto& [id, a] : d.inferred) inferred[std::to_string(id)] = to_string(a);
      rec["grid"] = grid_to_json(d.grid);
      rec["grid_ids"] = d.grid_ids;
      rec["opponent_ids"] = d.opponent_ids;
      rec["opponent_actions"] = std::move(inferred);
      rec["search"] = {{"rollouts", d.rollouts},
                       {"root_values", d.root_values},
                       {"root_visits", d.root_visits},
                       {"reused_subtree", d.reused_subtree}};
    }
    ordered_json beliefs = ordered_json::array();
    for (const auto& [id, b] : r.beliefs) beliefs.push_back(belief_to_json(id, b));
    rec["beliefs"] = std::move(beliefs);
    out << rec.dump() << '\n';
  }

  ordered_json tail = {{"type", "outcome"},
                       {"outcome", to_string(log.outcome)},
                       {"steps", log.steps.size()},
                       {"final_world", snapshot_to_json(log.final_world)}};
  tail["time_to_merge_s"] =
      log.time_to_merge_s ? ordered_json(*log.time_to_merge_s) : ordered_json(nullptr);
  out << tail.dump() << '\n';
}

std::vector<json> read_json_lines(std::istream& in) {
  std::vector<json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_belief_trace(std::istream& log, std::ostream& out) {
  const auto records = read_json_lines(log);
  if (records.empty() || records.front().value("type", "") != "header") {
    throw std::runtime_error("not an episode log: missing header record");
  }
  for (const json& r : records) {
    if (r.value("type", "") != "step") continue;
    for (const json& b : r.at("beliefs")) {
      ordered_json line = {{"step", r.at("step")},
                           {"agent_id", b.at("agent_id")},
                           {"support", b.at("support")},
                           {"probs", b.at("probs")}};
      out << line.dump() << '\n';
    }
  }
}

}  // namespace qlk::harness
