#include "toy3_core.hpp"
#include "envs_all.hpp"

namespace m3fc {

namespace {

namespace tc = toy3core;

class Toy3Env final : public Env {
 public:
  Toy3Env() {
    spec_.id = "toy3";
    spec_.episode_len = 100;
    spec_.default_agents = 300;
    spec_.minor_dim = 1;
    spec_.pos_dim = 1;
    spec_.minor_finite = true;
    spec_.minor_states = tc::kStates;
    spec_.minor_act_dim = 1;
    spec_.minor_actions = tc::kActions;
    spec_.major_dim = 1;  // bar cell; the target is pinned
    spec_.major_finite = true;
    spec_.major_act_dim = 1;
    spec_.major_actions = tc::kActions;
    spec_.obs_grid =
        BinGrid::regular({0.0}, {double(tc::kStates)}, {tc::kStates});
    spec_.major_feat_dim = tc::kStates;
  }

  const EnvSpec& spec() const override { return spec_; }

  int minor_state_index(const double* minor) const override {
    return int(minor[0]);
  }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 1;
    s.minors.resize(n);
    s.ids.resize(n);
    std::span<const double> mf(tc::kInitMf, tc::kStates);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      s.minors[i] = double(rng.fork(i).categorical(mf));
    }
    s.major = {double(tc::kInitBar)};
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng) const override {
    return tc::reward(int(s.major[0]), mean_field(s));
  }

  void step(SystemState& s, std::span<const double> u0,
            std::span<const double> minor_actions, Rng) const override {
    for (int i = 0; i < s.n; ++i)
      s.minors[i] = double(tc::shift(int(s.minors[i]), int(minor_actions[size_t(i)])));
    s.major[0] = double(tc::shift(int(s.major[0]), int(u0[0])));
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    for (int c = 0; c < tc::kStates; ++c) out[c] = 0.0;
    out[int(s.major[0])] = 1.0;
  }

 private:
  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Env> make_toy3() { return std::make_unique<Toy3Env>(); }

}  // namespace m3fc
