#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3fc/algo.hpp"
#include "m3fc/env.hpp"
#include "m3fc/finite_sim.hpp"

namespace m3fc {

// One experiment description, assembled in order of precedence from built-in
// defaults, a flat key=value config file, the M3FC_SEED environment variable
// and command-line flags. configs/defaults.cfg lists every key with its
// default.
struct RunConfig {
  std::string env;  // environment id; commands that build one require it
  std::string out = "runs/run";
  std::vector<int> hidden = {256, 256};
  ExecMode mode = ExecMode::kCentralized;
  int workers = 0;       // sweep thread budget; 0 = logical cores - 1
  int eval_agents = 0;   // evaluation system size; 0 falls back to n_train
  int eval_episodes = 200;
  EnvOverrides env_overrides;
  TrainConfig train;  // algo, seed and the training knobs live here
};

// Applies one dotted key (env.n_agents=300 style). Throws ConfigError with
// the key in the message on unknown keys or unusable values.
void apply_config_key(RunConfig& cfg, const std::string& key,
                      const std::string& value);

// key=value lines; '#' starts a comment, blank lines are skipped, later
// duplicates win. Throws ConfigError with the offending line number.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical snapshot with every key in a fixed order and %.17g floats.
// Feeding it back through parse_config_text reproduces the config exactly;
// train writes one next to its artifacts as resolved.cfg.
std::string serialize_config(const RunConfig& cfg);

// 0 picks logical cores - 1 (floor 1); negatives throw InvalidArgument.
int resolve_workers(int requested);

// The full driver behind the m3fc binary, also callable in-process by
// tests. Returns the exit code: 0 success, 1 runtime failure, 2 unusable
// arguments or config.
int cli_main(int argc, const char* const* argv);

}  // namespace m3fc
