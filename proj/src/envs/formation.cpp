#include <cmath>

#include "m3fc/transport.hpp"
#include "envs_all.hpp"
#include "env_util.hpp"

namespace m3fc {

namespace {

using envdetail::kGlobalTag;

// The major agent chases a drifting target while the minors form a gaussian
// blob around the major's current position. Noise-free movement; the only
// exogenous randomness is the target's mean-reverting walk.
class FormationEnv final : public Env {
 public:
  FormationEnv() {
    spec_.id = "formation";
    spec_.episode_len = 100;
    spec_.default_agents = 300;
    spec_.minor_dim = 2;
    spec_.pos_dim = 2;
    spec_.minor_act_dim = 2;
    spec_.major_dim = 4;  // position, target
    spec_.major_act_dim = 2;
    spec_.obs_grid = BinGrid::regular({-2.0, -2.0}, {2.0, 2.0}, {7, 7});
    spec_.major_feat_dim = 4;
  }

  const EnvSpec& spec() const override { return spec_; }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 2;
    s.minors.resize(size_t(n) * 2);
    s.ids.resize(n);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      Rng r = rng.fork(i);
      s.minor(i)[0] = r.uniform(-2.0, 2.0);
      s.minor(i)[1] = r.uniform(-2.0, 2.0);
    }
    Rng g = rng.fork(kGlobalTag);
    s.major = {g.uniform(-2.0, 2.0), g.uniform(-2.0, 2.0),
               std::clamp(kTargetNoiseStd * g.normal(), -2.0, 2.0),
               std::clamp(kTargetNoiseStd * g.normal(), -2.0, 2.0)};
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng rng) const override {
    double dx = s.major[0] - s.major[2], dy = s.major[1] - s.major[3];
    double track = std::sqrt(dx * dx + dy * dy);

    int reps = std::max(1, (kSpreadSamples + s.n - 1) / s.n);
    int m = reps * s.n;
    SampleCloud crowd = SampleCloud::zeros(m, 2);
    for (int i = 0; i < s.n; ++i)
      for (int r = 0; r < reps; ++r) {
        crowd.point(i * reps + r)[0] = s.minor(i)[0];
        crowd.point(i * reps + r)[1] = s.minor(i)[1];
      }
    SampleCloud blob = SampleCloud::zeros(m, 2);
    for (int j = 0; j < m; ++j) {
      blob.point(j)[0] = s.major[0] + kSpreadStd * rng.normal();
      blob.point(j)[1] = s.major[1] + kSpreadStd * rng.normal();
    }
    return -track - ot_cost(crowd, blob);
  }

  void step(SystemState& s, std::span<const double> u0,
            std::span<const double> minor_actions, Rng rng) const override {
    double vel[2];
    for (int i = 0; i < s.n; ++i) {
      envdetail::action_velocity(minor_actions.data() + size_t(i) * 2, 2,
                                 kSpeed, vel);
      for (int j = 0; j < 2; ++j)
        s.minor(i)[j] = std::clamp(s.minor(i)[j] + vel[j], -2.0, 2.0);
    }
    envdetail::action_velocity(u0.data(), 2, kSpeed, vel);
    for (int j = 0; j < 2; ++j)
      s.major[j] = std::clamp(s.major[j] + vel[j], -2.0, 2.0);
    Rng g = rng.fork(kGlobalTag);
    for (int j = 2; j < 4; ++j)
      s.major[j] = std::clamp(
          kTargetPull * s.major[j] + kTargetNoiseStd * g.normal(), -2.0, 2.0);
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    for (int j = 0; j < 4; ++j) out[j] = s.major[j] / 2.0;
  }

 private:
  static constexpr int kSpreadSamples = 300;
  static constexpr double kSpeed = 0.2;
  static constexpr double kSpreadStd = 0.5477225575051661;     // sqrt(0.3)
  static constexpr double kTargetPull = 0.95;
  static constexpr double kTargetNoiseStd = 0.1414213562373095;  // sqrt(0.02)

  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Env> make_formation() { return std::make_unique<FormationEnv>(); }

}  // namespace m3fc
