#include <algorithm>
#include <cmath>

#include "m3fc/envs/foraging.hpp"
#include "envs_all.hpp"
#include "env_util.hpp"

namespace m3fc {

namespace {

namespace fg = foraging;
using envdetail::kGlobalTag;

constexpr double kVMaxMinor = 0.3;
constexpr double kVMaxMajor = 0.1;
constexpr double kRange = 0.5;       // forage and deposit radius
constexpr double kRateCap = 0.1;     // per-area depletion cap per step
constexpr double kSpawnRate = 0.2;   // Poisson mean of new areas per step

// Forage-then-deposit outcome at the current configuration. Used verbatim by
// both reward() and step() so the reported reward always matches the applied
// transition.
struct Outcome {
  double depletion[fg::kMaxAreas] = {};
  std::vector<double> enc_next;  // per-agent encumbrance after both phases
  double deposited = 0.0;        // mean-field units
  double wasted = 0.0;
};

Outcome settle(const SystemState& s) {
  Outcome out;
  out.enc_next.resize(s.n);

  // Gather per-area proximity weights (0.5 - distance)^+ once; the integral
  // against the empirical measure is their mean.
  std::vector<double> weight(size_t(s.n) * fg::kMaxAreas, 0.0);
  double integral[fg::kMaxAreas] = {};
  for (int m = 0; m < fg::kMaxAreas; ++m) {
    if (!fg::slot_active(s, m)) continue;
    const double* c = fg::slot(s, m);
    double sum = 0.0;
    for (int i = 0; i < s.n; ++i) {
      const double* x = s.minor(i);
      double w = kRange - std::hypot(x[0] - c[0], x[1] - c[1]);
      if (w > 0.0) {
        weight[size_t(i) * fg::kMaxAreas + m] = w;
        sum += w;
      }
    }
    integral[m] = sum / s.n;
    out.depletion[m] = std::min(c[2], std::min(kRateCap, integral[m]));
  }

  for (int i = 0; i < s.n; ++i) {
    const double* x = s.minor(i);
    double gain = 0.0;
    for (int m = 0; m < fg::kMaxAreas; ++m) {
      double w = weight[size_t(i) * fg::kMaxAreas + m];
      if (w <= 0.0 || out.depletion[m] <= 0.0) continue;
      gain += out.depletion[m] * w / integral[m];
    }
    double held = std::min(1.0, x[2] + gain);
    out.wasted += (x[2] + gain - held) / s.n;
    if (std::hypot(x[0] - s.major[0], x[1] - s.major[1]) < kRange) {
      out.deposited += held / s.n;
      out.enc_next[i] = 0.0;
    } else {
      out.enc_next[i] = held;
    }
  }
  return out;
}

class ForagingEnv final : public Env {
 public:
  explicit ForagingEnv(double reward_scale) : reward_scale_(reward_scale) {
    spec_.id = "foraging";
    spec_.episode_len = 200;
    spec_.default_agents = 300;
    spec_.minor_dim = 3;  // position, encumbrance
    spec_.pos_dim = 2;
    spec_.minor_act_dim = 2;
    spec_.major_dim = fg::kMajorDim;
    spec_.major_act_dim = 2;
    spec_.obs_grid = BinGrid::regular({-2.0, -2.0}, {2.0, 2.0}, {7, 7});
    spec_.obs_mean_extra = true;  // per-bin mean encumbrance
    spec_.major_feat_dim = 2;
  }

  const EnvSpec& spec() const override { return spec_; }

  SystemState init(int n, Rng rng) const override {
    SystemState s;
    s.n = n;
    s.minor_dim = 3;
    s.minors.resize(size_t(n) * 3);
    s.ids.resize(n);
    for (int i = 0; i < n; ++i) {
      s.ids[i] = uint32_t(i);
      Rng r = rng.fork(i);
      s.minor(i)[0] = r.uniform(-2.0, 2.0);
      s.minor(i)[1] = r.uniform(-2.0, 2.0);
      s.minor(i)[2] = r.uniform(0.0, 1.0);
    }
    Rng g = rng.fork(kGlobalTag);
    s.major.assign(fg::kMajorDim, 0.0);
    s.major[0] = g.uniform(-2.0, 2.0);
    s.major[1] = g.uniform(-2.0, -1.0);
    return s;
  }

  double reward(const SystemState& s, std::span<const double>,
                Rng) const override {
    return reward_scale_ * settle(s).deposited;
  }

  void step(SystemState& s, std::span<const double> u0,
            std::span<const double> minor_actions, Rng rng) const override {
    Outcome out = settle(s);
    for (int m = 0; m < fg::kMaxAreas; ++m) {
      double* c = s.major.data() + fg::kSlotBase + m * fg::kSlotLen;
      c[2] -= out.depletion[m];
      if (c[2] <= 0.0) c[0] = c[1] = c[2] = 0.0;
    }
    s.major[fg::kDepositedIdx] += out.deposited;
    s.major[fg::kWastedIdx] += out.wasted;

    double vel[2];
    for (int i = 0; i < s.n; ++i) {
      envdetail::action_velocity(&minor_actions[size_t(i) * 2], 2, kVMaxMinor, vel);
      double* x = s.minor(i);
      x[0] = std::clamp(x[0] + vel[0], -2.0, 2.0);
      x[1] = std::clamp(x[1] + vel[1], -2.0, 2.0);
      x[2] = out.enc_next[i];
    }
    envdetail::action_velocity(u0.data(), 2, kVMaxMajor, vel);
    s.major[0] = std::clamp(s.major[0] + vel[0], -2.0, 2.0);
    s.major[1] = std::clamp(s.major[1] + vel[1], -2.0, -1.0);

    Rng g = rng.fork(kGlobalTag);
    int fresh = g.poisson(kSpawnRate);
    for (int m = 0; m < fg::kMaxAreas && fresh > 0; ++m) {
      double* c = s.major.data() + fg::kSlotBase + m * fg::kSlotLen;
      if (c[2] > 0.0) continue;
      c[0] = g.uniform(-2.0, 2.0);
      c[1] = g.uniform(-2.0, 2.0);
      c[2] = g.uniform(0.5, 1.5);
      s.major[fg::kSpawnedIdx] += c[2];
      --fresh;
    }
    ++s.t;
  }

  void encode_major(const SystemState& s, double* out) const override {
    out[0] = s.major[0] / 2.0;
    out[1] = s.major[1] / 2.0;
  }

 private:
  EnvSpec spec_;
  double reward_scale_;
};

}  // namespace

std::unique_ptr<Env> make_foraging(double reward_scale) {
  return std::make_unique<ForagingEnv>(reward_scale);
}

}  // namespace m3fc
