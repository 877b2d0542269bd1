// qlk: train Q-tables, run single episodes, batch evaluations and belief
// traces. Exit codes: 0 ok, 1 runtime failure, 2 configuration error
// (including missing or incompatible Q-tables), 3 training did not converge.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "qlk/harness/config.h"
#include "qlk/harness/episode_log.h"
#include "qlk/harness/experiments.h"

namespace {

using namespace qlk;
using namespace qlk::harness;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;

struct Common {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file, or 'default'");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output path ('-' for stdout)");
}

AppConfig resolve(const Common& c) {
  AppConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::shared_ptr<const QHierarchy> load_tables(const AppConfig& cfg,
                                              const std::string& override_path) {
  const std::string path = override_path.empty() ? cfg.qtables_path : override_path;
  if (!std::filesystem::exists(path)) {
    throw ConfigError("Q-table file not found: " + path + " (run `qlk train` first)");
  }
  try {
    auto t = std::make_shared<QHierarchy>(load_qtables(path, cfg.grid, cfg.rewards));
    if (t->train.k_max < cfg.train.k_max) {
      throw std::runtime_error("file has k_max " + std::to_string(t->train.k_max) +
                               ", config needs " + std::to_string(cfg.train.k_max));
    }
    return t;
  } catch (const std::runtime_error& e) {
    throw ConfigError("Q-table file " + path + ": " + e.what());
  }
}

// Writes through `fn` to a file, or to stdout for "" / "-".
template <class F>
void with_output(const std::string& path, F&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  fn(out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("--levels expects comma-separated integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("--levels must name at least one level");
  return out;
}

int cmd_train(const Common& c) {
  const AppConfig cfg = resolve(c);
  const std::string path = c.out.empty() ? cfg.qtables_path : c.out;
  QHierarchy tables = train_hierarchy(cfg.train, cfg.grid, cfg.rewards);
  save_qtables(tables, path);
  std::cerr << "wrote " << path << " (levels 0.." << tables.k_max() << ", "
            << tables.human.front().states() << " states)\n";
  return 0;
}

struct RunOptions {
  std::string qtables;
  std::string planner = "ours";
  std::string kind = "lane-change";
  int opponents = 1;
  std::string levels = "1";
};

int cmd_run(const Common& c, const RunOptions& o) {
  const AppConfig cfg = resolve(c);
  auto tables = load_tables(cfg, o.qtables);
  auto support = cfg.support();

  ScenarioConfig scenario;
  EpisodeSettings episode = cfg.episode();
  if (cfg.scenario_override) {
    scenario = *cfg.scenario_override;
    scenario.seed = cfg.seed;
  } else if (o.kind == "lane-change") {
    scenario = lane_change_scenario(o.opponents, cfg.seed, cfg.scenario);
  } else if (o.kind == "belief") {
    std::vector<ScriptedQLK> profiles;
    Rng rng(derive_seed(cfg.seed, 3));
    for (int k : parse_levels(o.levels)) {
      const auto& ls = cfg.belief.lambdas;
      const auto li = std::min(ls.size() - 1, static_cast<std::size_t>(uniform01(rng) * ls.size()));
      profiles.push_back({k, ls[li]});
    }
    scenario = belief_scenario(profiles, cfg.seed, cfg.scenario);
    episode.rules.stop_on_merge = false;
    episode.rules.blockage_timeout = false;
    episode.max_steps = cfg.belief.steps;
  } else {
    throw ConfigError("--kind must be 'lane-change' or 'belief'");
  }
  try {
    scenario.validate(tables->k_max());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }

  PlannerConfig pc = cfg.planner;
  pc.rng_seed = cfg.seed;
  std::unique_ptr<EgoPolicy> policy;
  try {
    policy = make_policy(o.planner, pc, cfg.baseline, cfg.world, tables, support);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  SimEnvironment env(scenario, episode.grid, episode.rewards, episode.world,
                     episode.rules, tables);
  const EpisodeLog log = run_episode(env, *policy, episode.max_steps);

  nlohmann::ordered_json header = {{"seed", cfg.seed},
                                   {"scenario", scenario_to_json(scenario)},
                                   {"config", config_to_json(cfg)}};
  with_output(c.out, [&](std::ostream& out) { write_episode_log(log, header, out); });
  std::cerr << "outcome " << to_string(log.outcome) << " after " << log.steps.size()
            << " steps\n";
  return 0;
}

int cmd_eval_belief(const Common& c, const std::string& qtables,
                    std::optional<int> runs) {
  AppConfig cfg = resolve(c);
  if (runs) cfg.belief.runs = *runs;
  cfg.validate();
  auto tables = load_tables(cfg, qtables);
  const auto rows = eval_belief_accuracy(cfg.belief_experiment(), tables, cfg.support());
  with_output(c.out, [&](std::ostream& out) { write_belief_csv(rows, out); });
  return 0;
}

int cmd_eval_lane_change(const Common& c, const std::string& qtables,
                         std::optional<int> runs) {
  AppConfig cfg = resolve(c);
  if (runs) cfg.lane_change.runs = *runs;
  cfg.validate();
  auto tables = load_tables(cfg, qtables);
  const auto rows = eval_lane_change(cfg.lane_change_experiment(), tables, cfg.support());
  with_output(c.out, [&](std::ostream& out) { write_lane_change_csv(rows, out); });
  return 0;
}

int cmd_belief_trace(const Common& c, const std::string& log_path) {
  (void)resolve(c);
  std::ifstream in(log_path);
  if (!in) throw ConfigError("cannot open episode log " + log_path);
  with_output(c.out, [&](std::ostream& out) { write_belief_trace(in, out); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantal level-k lane-change planner toolkit"};
  app.require_subcommand(1);

  Common common;
  RunOptions run;
  std::string qtables;
  std::optional<int> runs;
  std::string log_path;

  auto* train = app.add_subcommand("train", "compute and save the level-k Q-tables");
  add_common(train, common);

  auto* run_cmd = app.add_subcommand("run", "run one episode and write its log");
  add_common(run_cmd, common);
  run_cmd->add_option("--qtables", run.qtables, "Q-table file (overrides the config)");
  run_cmd->add_option("--planner", run.planner, "ours | ours-no-ig | baseline");
  run_cmd->add_option("--kind", run.kind, "lane-change | belief");
  run_cmd->add_option("--opponents", run.opponents, "opponent count (lane-change)");
  run_cmd->add_option("--levels", run.levels, "scripted opponent levels (belief), e.g. 1,2");

  auto* eval_belief = app.add_subcommand("eval-belief", "belief-accuracy batch (CSV)");
  add_common(eval_belief, common);
  eval_belief->add_option("--qtables", qtables, "Q-table file (overrides the config)");
  eval_belief->add_option("--runs", runs, "episodes per level combination");

  auto* eval_lc = app.add_subcommand("eval-lane-change", "lane-change batch (CSV)");
  add_common(eval_lc, common);
  eval_lc->add_option("--qtables", qtables, "Q-table file (overrides the config)");
  eval_lc->add_option("--runs", runs, "episodes per scenario and planner");

  auto* trace = app.add_subcommand("belief-trace", "per-step beliefs from an episode log");
  add_common(trace, common);
  trace->add_option("--log", log_path, "episode log (JSON lines)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(common);
    if (*run_cmd) return cmd_run(common, run);
    if (*eval_belief) return cmd_eval_belief(common, qtables, runs);
    if (*eval_lc) return cmd_eval_lane_change(common, qtables, runs);
    if (*trace) return cmd_belief_trace(common, log_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NonConvergenceError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
