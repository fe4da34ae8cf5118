#pragma once

#include <Eigen/Dense>
#include <span>

#include "m3fc/env.hpp"
#include "m3fc/nn.hpp"

namespace m3fc {

// The controller picks, from (major features, mean field), a joint action:
// an optional major action plus a flat parameter vector xi in [-1,1]^k that
// decodes into one decision rule shared by every minor agent. Both parts are
// sampled from differentiable heads on a single network output row.
enum class HeadKind { kNone, kCategorical, kGaussian };

struct HeadLayout {
  HeadKind major = HeadKind::kNone;
  int major_n = 0;  // categories, or gaussian action dims
  int xi_dim = 0;   // flattened xi length
  bool xi_finite = false;
  int xi_rows = 0;  // finite: |X|; continuous: histogram bins M
  int xi_cols = 0;  // finite: |U|; continuous: 2 * action dims

  int major_param_dim() const {
    switch (major) {
      case HeadKind::kNone: return 0;
      case HeadKind::kCategorical: return major_n;
      case HeadKind::kGaussian: return 2 * major_n;
    }
    return 0;
  }
  int net_out() const { return major_param_dim() + 2 * xi_dim; }
};

HeadLayout head_layout(const EnvSpec& spec);
int obs_dim(const EnvSpec& spec);

// [major features | mean-field histogram | optional per-bin mean channel].
Eigen::VectorXd encode_obs(const Env& env, const SystemState& s);

// One sampled joint action. Gaussian components keep the pre-squash draw so
// log-probabilities can be re-evaluated under new parameters.
struct ActionSample {
  int major_cat = -1;
  Eigen::VectorXd z_major;
  Eigen::VectorXd z_xi;
  double logp = 0.0;
};

// Draw from the heads parametrized by the net output row `out`.
// `deterministic` collapses to argmax / mean (used by evaluation modes and
// the exact centralized == decentralized checks).
ActionSample sample_action(const HeadLayout& hl, std::span<const double> out,
                           Rng& rng, bool deterministic = false);

// Joint log-probability of a stored sample under `out`. If dout is nonempty
// it receives d logp / d out (same length as out, overwritten).
double action_logprob(const HeadLayout& hl, std::span<const double> out,
                      const ActionSample& a, std::span<double> dout = {});

// KL(old || new) between the head distributions of two output rows; dnew, if
// nonempty, receives the gradient with respect to the new row.
double head_kl(const HeadLayout& hl, std::span<const double> out_old,
               std::span<const double> out_new, std::span<double> dnew = {});

// Entropy of the head distributions (pre-squash for gaussian parts).
double head_entropy(const HeadLayout& hl, std::span<const double> out);

// Environment-facing major action: empty / {index} / tanh(z).
std::vector<double> major_action_of(const HeadLayout& hl,
                                    const ActionSample& a);

constexpr double kXiEps = 1e-10;

// xi (already in [-1,1], row-major x-by-u) -> stochastic decision rule.
// Rows are strictly positive and sum to 1.
Eigen::MatrixXd decode_finite(std::span<const double> xi, int n_states,
                              int n_actions);

// xi (row-major, per bin [d means | d stds]) -> per-bin diagonal gaussians.
// Means stay in [-1,1]; stds live in [eps, 0.25 + eps].
struct BinGaussians {
  Eigen::MatrixXd mean, stddev;  // M x d each
};
BinGaussians decode_continuous(std::span<const double> xi, int bins,
                               int act_dim);

// Decoded decision rule of either flavor for one xi vector.
struct DecisionRule {
  bool finite = false;
  Eigen::MatrixXd probs;  // finite
  BinGaussians bins;      // continuous
};
DecisionRule decode_rule(const EnvSpec& spec, std::span<const double> xi);

// Sample one minor agent's action under the rule (finite: categorical row of
// its state; continuous: its bin's gaussian clamped into [-1,1]).
void sample_minor_action(const Env& env, const DecisionRule& rule,
                         const double* minor, Rng& rng, double* act_out,
                         bool deterministic = false);

// Policy + value bundle over one flat parameter array [pi | v]. The hidden
// widths default to the standard two 256-unit layers; tests and desk tools
// may shrink them.
class Policy {
 public:
  explicit Policy(const EnvSpec& spec, std::vector<int> hidden = {256, 256});

  const HeadLayout& heads() const { return heads_; }
  const Mlp& pi() const { return pi_; }
  const Mlp& v() const { return v_; }
  int obs_dim() const { return obs_dim_; }
  int n_params() const { return int(params.size()); }
  const double* pi_params() const { return params.data(); }
  const double* v_params() const { return params.data() + pi_.n_params(); }

  void init(Rng rng);

  // Single-row conveniences for rollouts.
  Eigen::VectorXd head_row(const Eigen::VectorXd& obs) const;
  double value(const Eigen::VectorXd& obs) const;

  std::vector<double> params;

 private:
  HeadLayout heads_;
  int obs_dim_;
  Mlp pi_, v_;
};

}  // namespace m3fc
