#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "m3fc/env.hpp"
#include "m3fc/finite_sim.hpp"
#include "m3fc/nn.hpp"
#include "m3fc/policy.hpp"

namespace m3fc {

// Training hyperparameters. The defaults are the shared full-scale
// configuration; the desk presets in configs/ override batch, minibatch,
// agent count and budget to finish in minutes.
struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 1.0;
  double kl_coeff = 0.03;
  double clip = 0.2;
  double lr = 5e-5;
  int batch = 24000;
  int minibatch = 4000;
  int sgd_iters = 8;
  int n_train = 300;       // minor agents in training rollouts
  long total_steps = 0;    // environment steps budget
  uint64_t seed = 0;
  std::string algo = "ppo";  // or "a2c"

  // Recorded defaults not fixed by the shared table.
  double value_coeff = 0.5;
  double grad_clip = 10.0;
  int checkpoint_every = 0;  // iterations between checkpoints; 0 = ends only

  void validate() const;  // throws InvalidArgument
};

struct UpdateStats {
  double policy_loss = 0.0;  // negative clip surrogate
  double value_loss = 0.0;   // plain value MSE (coefficient not applied)
  double kl = 0.0;           // mean KL(old || new) over head distributions
  double clip_frac = 0.0;    // fraction of samples with |ratio - 1| > clip
  double entropy = 0.0;
  double grad_norm = 0.0;    // pre-clip l2 norm, averaged over passes
  int minibatch_passes = 0;
};

// Generalized advantage estimates plus value-regression targets
// (targets = advantages + values, before any normalization). `ends` flags
// the last row of each episode segment; `next_values` must carry the
// bootstrap value at truncations and zero at true terminals, which is
// exactly what a rollout batch records.
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;
};
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const double> next_values,
              std::span<const uint8_t> ends, double gamma, double lambda);

// In-place per-batch normalization to mean 0, population std 1. Degenerate
// batches (std ~ 0) are only centered.
void normalize_advantages(std::span<double> adv);

// Ascent gradient of the surrogate objective
//   clip-surrogate - kl_coeff * KL(old || new) - value_coeff * value MSE
// over batch rows [row_begin, row_end) at the policy's current parameters.
// `grad_out` (policy.n_params(), overwritten) receives the DESCENT gradient
// of the negated objective, ready for an optimizer. Returns the stats of
// this pass. Throws NonFiniteLoss if the objective or gradient is not
// finite. This single code path backs both ppo_update and a2c_update, which
// is what makes their documented equivalence exact.
UpdateStats surrogate_gradient(const TrajectoryBatch& batch,
                               const Policy& policy, const TrainConfig& cfg,
                               int row_begin, int row_end,
                               std::span<const double> adv,
                               std::span<const double> targets,
                               std::span<double> grad_out);

// One PPO update: GAE + per-batch advantage normalization, then
// cfg.sgd_iters passes over fixed contiguous minibatches, each taking one
// Adam step. On NonFiniteLoss the parameters and optimizer state roll back
// to their entry values and the error propagates.
UpdateStats ppo_update(const TrajectoryBatch& batch, Policy& policy,
                       Adam& opt, const TrainConfig& cfg);

// A2C: identical to ppo_update with clip disabled, no KL penalty and a
// single full-batch pass.
UpdateStats a2c_update(const TrajectoryBatch& batch, Policy& policy,
                       Adam& opt, const TrainConfig& cfg);

// One training iteration row of the metrics stream. Returns and stats come
// from the training batch itself; rows hold no wall-clock data so reruns
// are bitwise comparable.
struct IterationRow {
  int iteration = 0;
  long env_steps = 0;
  double mean_return = 0.0;  // undiscounted, completed episodes in the batch
  double ci_half = 0.0;
  int episodes = 0;
  UpdateStats stats;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationRow& row);

// On-policy training loop: centralized rollouts of cfg.batch steps with
// cfg.n_train agents, one update per batch, floor(total_steps / batch)
// iterations. Episode indices advance monotonically across iterations so
// the stream layout never depends on how the loop is chunked. If out_dir is
// nonempty, writes metrics.csv plus checkpoint files ckpt_<iter>.m3fc
// (always the initial and final ones, plus every cfg.checkpoint_every).
// `policy` must be initialized by the caller. `stop` is polled between
// iterations; when it flips the loop flushes a checkpoint of the current
// parameters and returns early. `on_iter` sees each metrics row as it is
// produced.
std::vector<IterationRow> train(
    const Env& env, Policy& policy, const TrainConfig& cfg,
    const std::string& out_dir = "", const std::atomic<bool>* stop = nullptr,
    const std::function<void(const IterationRow&)>& on_iter = {});

// Critic-free score-function policy-gradient estimate on the N-agent
// system: mean over episodes of sum_t gamma^t * G_t * dlog pi(a_t | s_t),
// with G_t the observed discounted reward-to-go. Returns the gradient with
// respect to the policy-network parameters only.
std::vector<double> estimate_pg(const Env& env, const Policy& policy, int n,
                                int episodes, double gamma, Rng base);

}  // namespace m3fc
