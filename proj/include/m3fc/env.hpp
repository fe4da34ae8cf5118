#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "m3fc/measures.hpp"
#include "m3fc/rng.hpp"

namespace m3fc {

// Static description of a control problem: one major agent, N exchangeable
// minor agents, rewards depending on the major state, the major action and
// the empirical distribution of minor states.
struct EnvSpec {
  std::string id;
  int episode_len = 0;
  int default_agents = 300;

  // Minor side. A minor state is a row of `minor_dim` doubles whose leading
  // `pos_dim` entries are the coordinates coarsened into the mean field.
  int minor_dim = 0;
  int pos_dim = 0;
  bool minor_finite = false;
  int minor_states = 0;   // |X| when finite
  int minor_act_dim = 0;  // action row length (1 slot for a finite index)
  int minor_actions = 0;  // |U| when finite

  // Major side. major_act_dim == 0 means the major is not controlled.
  int major_dim = 0;
  bool major_finite = false;
  int major_act_dim = 0;
  int major_actions = 0;  // |U0| when finite

  BinGrid obs_grid;            // coarsens minor positions for observations
  bool obs_mean_extra = false; // append per-bin mean of minor column pos_dim
  int major_feat_dim = 0;      // length of encode_major output
};

struct SystemState {
  int t = 0;
  int n = 0;
  int minor_dim = 0;
  std::vector<double> major;      // env-specific record
  std::vector<double> minors;     // n rows of minor_dim
  std::vector<uint32_t> ids;      // per-agent substream tags, permuted with rows

  const double* minor(int i) const { return minors.data() + size_t(i) * minor_dim; }
  double* minor(int i) { return minors.data() + size_t(i) * minor_dim; }
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;

  virtual SystemState init(int n_agents, Rng rng) const = 0;

  // Reward of the current state under major action u0 (empty when the major
  // is uncontrolled, a single index value when it is finite). May consume rng
  // for sampled reward targets; callers derive that stream from (seed,
  // episode, t) so rewards can be recomputed offline.
  virtual double reward(const SystemState& s, std::span<const double> u0,
                        Rng rng) const = 0;

  // Advance the state in place. minor_actions holds n rows of minor_act_dim.
  virtual void step(SystemState& s, std::span<const double> u0,
                    std::span<const double> minor_actions, Rng rng) const = 0;

  // Major-state features for the policy observation, roughly in [-1, 1].
  // Writes spec().major_feat_dim values.
  virtual void encode_major(const SystemState& s, double* out) const = 0;

  // Finite envs: flat state index of a minor row.
  virtual int minor_state_index(const double* minor) const;

  // Empirical mean field of the minor positions on the observation grid.
  MeanFieldHist mean_field(const SystemState& s) const;
};

struct EnvOverrides {
  double reward_scale = 1.0;  // foraging deposit reward multiplier
};

// ids: 2g, formation, beach, foraging, potential, toy3.
std::unique_ptr<Env> make_env(const std::string& id,
                              const EnvOverrides& overrides = {});

}  // namespace m3fc
