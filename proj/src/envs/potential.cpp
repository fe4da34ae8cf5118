#include <algorithm>
#include <cmath>

#include "envs_all.hpp"
#include "env_util.hpp"

namespace m3fc {

namespace {

using envdetail::kGlobalTag;
using envdetail::torus_dist;
using envdetail::wrap_torus;

constexpr double kLo = -2.0, kHi = 2.0, kLen = 4.0;
constexpr double kVMax = 0.3;
constexpr double kPushGain = 1.0 / 20.0;
constexpr double kTargetDecay = 0.99;
const double kTargetStd = std::sqrt(0.005);

// Repulsive contribution of one minor at signed displacement d = major - x,
// with torus images folded in via offsets {-4, 0, 4}; linear falloff over
// range 1 and 0/0 treated as 0.
double push_term(double d) {
  double total = 0.0;
  for (double off : {-kLen, 0.0, kLen}) {
    double v = d + off;
    double mag = 1.0 - std::abs(v);
    if (mag > 0.0 && v != 0.0) total += mag * (v > 0.0 ? 1.0 : -1.0);
  }
  return total;
}

class PotentialEnv final : public Env {
 public:
  PotentialEnv() {
    spec_.id = "potential";
    spec_.episode_len = 100;
    spec_.default_agents = 300;
    spec_.minor_dim = 1;
    spec_.pos_dim = 1;
    spec_.minor_act_dim = 1;
    spec_.major_dim = 2;  // pushed position, target
    spec_.major_act_dim = 0;
    spec_.obs_grid = BinGrid::regular({kLo}, {kHi}, {7});
    spec_.major_feat_dim = 2;
  }

  const EnvSpec& spec() const override { return spec_; }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 1;
    s.minors.resize(n);
    s.ids.resize(n);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      s.minors[i] = rng.fork(i).uniform(kLo, kHi);
    }
    Rng g = rng.fork(kGlobalTag);
    s.major = {g.uniform(kLo, kHi), wrap_torus(kTargetStd * g.normal(), kLo, kHi)};
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng) const override {
    return -torus_dist(s.major[0], s.major[1], kLen);
  }

  void step(SystemState& s, std::span<const double>,
            std::span<const double> minor_actions, Rng rng) const override {
    double push = 0.0;
    for (int i = 0; i < s.n; ++i) push += push_term(s.major[0] - s.minors[i]);
    push *= kPushGain / s.n;

    for (int i = 0; i < s.n; ++i) {
      double u = std::clamp(minor_actions[size_t(i)], -1.0, 1.0);
      double v = kVMax * u / std::max(1.0, std::abs(u));
      s.minors[i] = wrap_torus(s.minors[i] + v, kLo, kHi);
    }
    s.major[0] = wrap_torus(s.major[0] + push, kLo, kHi);
    Rng g = rng.fork(kGlobalTag);
    s.major[1] =
        wrap_torus(kTargetDecay * s.major[1] + kTargetStd * g.normal(), kLo, kHi);
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    out[0] = s.major[0] / 2.0;
    out[1] = s.major[1] / 2.0;
  }

 private:
  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Env> make_potential() { return std::make_unique<PotentialEnv>(); }

}  // namespace m3fc
