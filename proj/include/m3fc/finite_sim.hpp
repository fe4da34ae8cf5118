#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3fc/env.hpp"
#include "m3fc/policy.hpp"

namespace m3fc {

// Centralized: one joint action per step, every minor agent shares the
// decoded decision rule. Decentralized: each minor agent resamples its own xi
// (the major action and the recorded log-probability still come from the
// shared central sample).
enum class ExecMode { kCentralized, kDecentralized };

const char* exec_mode_name(ExecMode mode);
ExecMode parse_exec_mode(const std::string& name);  // throws InvalidArgument

// Flat row-major per-step storage for one collected batch.
struct TrajectoryBatch {
  int steps = 0;
  int n_agents = 0;
  int obs_dim = 0;
  int head_dim = 0;  // policy net output width (old-policy head rows)
  int xi_dim = 0;
  int zmaj_dim = 0;  // gaussian major action dims, 0 otherwise
  int u0_dim = 0;    // env-facing major action row width
  int minor_dim = 0;

  std::vector<double> obs, head, z_xi, z_major, u0;
  std::vector<int> major_cat;  // -1 when the major head is not categorical
  std::vector<double> logp, reward, value, next_value;
  std::vector<uint8_t> done;  // episode reached its natural end here
  std::vector<uint8_t> cut;   // advantage stream must reset after this step
  std::vector<uint32_t> episode, t_env;

  // Full system states at each step, recorded only on request (replay tools).
  std::vector<double> major_state, minors;

  bool has_states() const { return !major_state.empty(); }

  // Shape consistency, flag placement and finiteness. Throws RuntimeFailure.
  void validate(int episode_len) const;
};

struct RolloutOptions {
  ExecMode mode = ExecMode::kCentralized;
  bool deterministic = false;   // heads collapse to argmax / mean
  bool keep_states = false;     // record full states for replay
  uint64_t first_episode = 0;   // global index of the first episode rolled
  const SystemState* initial = nullptr;  // overrides env.init for episode 0
};

// Substream derivation: every random draw of episode e comes from
// base.fork2(kEpisodeTag, e).fork2(purpose, t)[.fork(agent id)], so a
// trajectory depends only on (seed, episode index), not on scheduling.
namespace streams {
inline constexpr uint64_t kEpisodeTag = 0x45505349;
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kPolicy = 2;
inline constexpr uint64_t kMinorAct = 3;
inline constexpr uint64_t kEnvStep = 4;
inline constexpr uint64_t kReward = 5;
inline constexpr uint64_t kXiAgent = 6;
}  // namespace streams

TrajectoryBatch rollout(const Env& env, const Policy& policy, int n_agents,
                        int steps, Rng base, const RolloutOptions& opts = {});

struct EvalResult {
  double mean = 0.0;
  double ci_half = 0.0;          // 1.96 * sample std / sqrt(episodes)
  std::vector<double> returns;   // undiscounted per-episode sums
};

EvalResult evaluate_return(const Env& env, const Policy& policy, int n_agents,
                           int episodes, Rng base,
                           const RolloutOptions& opts = {});

// Batch dump: magic, JSON meta line, then one length-prefixed little-endian
// record per step.
void write_trajectory(const std::string& path, const TrajectoryBatch& b,
                      const std::string& env_id, uint64_t seed, ExecMode mode);
TrajectoryBatch read_trajectory(const std::string& path,
                                std::string* env_id = nullptr,
                                uint64_t* seed = nullptr,
                                ExecMode* mode = nullptr);

}  // namespace m3fc
