#include <cmath>
#include <numbers>

#include "m3fc/transport.hpp"
#include "envs_all.hpp"
#include "env_util.hpp"

namespace m3fc {

namespace {

using envdetail::kGlobalTag;

// Crowd of minor agents chasing a time-varying two-mode gaussian target
// mixture; the major state is a 50-step clock the crowd cannot influence.
// Reward is the (negative) exact transport cost between the crowd and a
// fresh sample of the target mixture.
class TwoGaussiansEnv final : public Env {
 public:
  TwoGaussiansEnv() {
    spec_.id = "2g";
    spec_.episode_len = 100;
    spec_.default_agents = 300;
    spec_.minor_dim = 2;
    spec_.pos_dim = 2;
    spec_.minor_act_dim = 2;
    spec_.major_dim = 1;  // clock in {0..49}
    spec_.major_act_dim = 0;
    spec_.obs_grid = BinGrid::regular({-2.0, -2.0}, {2.0, 2.0}, {7, 7});
    spec_.major_feat_dim = 2;
  }

  const EnvSpec& spec() const override { return spec_; }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 2;
    s.major = {0.0};
    s.minors.resize(size_t(n) * 2);
    s.ids.resize(n);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      Rng r = rng.fork(i);
      s.minor(i)[0] = r.uniform(-2.0, 2.0);
      s.minor(i)[1] = r.uniform(-2.0, 2.0);
    }
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng rng) const override {
    int reps = std::max(1, (kTargetSamples + s.n - 1) / s.n);
    int m = reps * s.n;
    SampleCloud crowd = SampleCloud::zeros(m, 2);
    for (int i = 0; i < s.n; ++i)
      for (int r = 0; r < reps; ++r) {
        crowd.point(i * reps + r)[0] = s.minor(i)[0];
        crowd.point(i * reps + r)[1] = s.minor(i)[1];
      }
    double w = mode_weight(int(s.major[0]));
    SampleCloud target = SampleCloud::zeros(m, 2);
    for (int j = 0; j < m; ++j) {
      double mean_x = rng.uniform() < w ? 1.0 : -1.0;
      target.point(j)[0] = mean_x + kTargetStd * rng.normal();
      target.point(j)[1] = kTargetStd * rng.normal();
    }
    return -ot_cost(crowd, target);
  }

  void step(SystemState& s, std::span<const double>,
            std::span<const double> minor_actions, Rng rng) const override {
    double vel[2];
    for (int i = 0; i < s.n; ++i) {
      Rng r = rng.fork(s.ids[i]);
      envdetail::action_velocity(minor_actions.data() + size_t(i) * 2, 2,
                                 kSpeed, vel);
      for (int j = 0; j < 2; ++j) {
        double x = s.minor(i)[j] + vel[j] + kNoiseStd * r.normal();
        s.minor(i)[j] = std::clamp(x, -2.0, 2.0);
      }
    }
    s.major[0] = double((int(s.major[0]) + 1) % kClock);
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    double phase = 2.0 * std::numbers::pi * s.major[0] / kClock;
    out[0] = std::cos(phase);
    out[1] = std::sin(phase);
  }

 private:
  static constexpr int kClock = 50;
  static constexpr int kTargetSamples = 300;
  static constexpr double kSpeed = 0.2;
  static constexpr double kNoiseStd = 0.17320508075688773;  // sqrt(0.03)
  static constexpr double kTargetStd = 0.22360679774997896; // sqrt(0.05)

  static double mode_weight(int clock) {
    return (1.0 + std::cos(2.0 * std::numbers::pi * clock / kClock)) / 2.0;
  }

  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Env> make_two_gaussians() {
  return std::make_unique<TwoGaussiansEnv>();
}

}  // namespace m3fc
