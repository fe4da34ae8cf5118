#include "beach_core.hpp"
#include "envs_all.hpp"
#include "env_util.hpp"

namespace m3fc {

namespace {

namespace bc = beachcore;
using envdetail::kGlobalTag;

class BeachEnv final : public Env {
 public:
  BeachEnv() {
    spec_.id = "beach";
    spec_.episode_len = 200;
    spec_.default_agents = 300;
    spec_.minor_dim = 2;
    spec_.pos_dim = 2;
    spec_.minor_finite = true;
    spec_.minor_states = bc::kStates;
    spec_.minor_act_dim = 1;
    spec_.minor_actions = bc::kActions;
    spec_.major_dim = 4;  // bar, target
    spec_.major_finite = true;
    spec_.major_act_dim = 1;
    spec_.major_actions = bc::kActions;
    spec_.obs_grid = BinGrid::regular({0.0, 0.0}, {double(bc::kSide), double(bc::kSide)},
                                      {bc::kSide, bc::kSide});
    spec_.major_feat_dim = 4 * bc::kSide;  // per-axis one-hots, bar then target
  }

  const EnvSpec& spec() const override { return spec_; }

  int minor_state_index(const double* minor) const override {
    return bc::cell(int(minor[0]), int(minor[1]));
  }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 2;
    s.minors.resize(size_t(n) * 2);
    s.ids.resize(n);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      Rng r = rng.fork(i);
      s.minor(i)[0] = double(r.uniform_int(bc::kSide));
      s.minor(i)[1] = double(r.uniform_int(bc::kSide));
    }
    Rng g = rng.fork(kGlobalTag);
    s.major = {double(g.uniform_int(bc::kSide)), double(g.uniform_int(bc::kSide)),
               0.0, 0.0};  // target starts at the origin cell
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng) const override {
    MeanFieldHist mu = mean_field(s);
    return bc::reward(bc::cell(int(s.major[0]), int(s.major[1])),
                      bc::cell(int(s.major[2]), int(s.major[3])), mu);
  }

  void step(SystemState& s, std::span<const double> u0,
            std::span<const double> minor_actions, Rng rng) const override {
    for (int i = 0; i < s.n; ++i) {
      int a = int(minor_actions[size_t(i)]);
      s.minor(i)[0] = double(bc::wrap(int(s.minor(i)[0]) + bc::kDx[a]));
      s.minor(i)[1] = double(bc::wrap(int(s.minor(i)[1]) + bc::kDy[a]));
    }
    int a0 = int(u0[0]);
    s.major[0] = double(bc::wrap(int(s.major[0]) + bc::kDx[a0]));
    s.major[1] = double(bc::wrap(int(s.major[1]) + bc::kDy[a0]));
    Rng g = rng.fork(kGlobalTag);
    if (g.uniform() < bc::kMoveProb) {
      int d = 1 + g.uniform_int(4);
      s.major[2] = double(bc::wrap(int(s.major[2]) + bc::kDx[d]));
      s.major[3] = double(bc::wrap(int(s.major[3]) + bc::kDy[d]));
    }
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    for (int j = 0; j < 4 * bc::kSide; ++j) out[j] = 0.0;
    for (int j = 0; j < 4; ++j) out[j * bc::kSide + int(s.major[j])] = 1.0;
  }

 private:
  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Env> make_beach() { return std::make_unique<BeachEnv>(); }

}  // namespace m3fc
