#include "m3fc/finite_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "m3fc/errors.hpp"

namespace m3fc {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw RuntimeFailure(std::string("trajectory batch: ") + what);
}

}  // namespace

const char* exec_mode_name(ExecMode mode) {
  return mode == ExecMode::kCentralized ? "centralized" : "decentralized";
}

ExecMode parse_exec_mode(const std::string& name) {
  if (name == "centralized") return ExecMode::kCentralized;
  if (name == "decentralized") return ExecMode::kDecentralized;
  throw InvalidArgument("unknown execution mode '" + name + "'");
}

void TrajectoryBatch::validate(int episode_len) const {
  size_t n = size_t(steps);
  check(obs.size() == n * obs_dim, "obs shape");
  check(head.size() == n * head_dim, "head shape");
  check(z_xi.size() == n * xi_dim, "xi shape");
  check(z_major.size() == n * zmaj_dim, "major draw shape");
  check(u0.size() == n * u0_dim, "major action shape");
  check(major_cat.size() == n && logp.size() == n && reward.size() == n &&
            value.size() == n && next_value.size() == n && done.size() == n &&
            cut.size() == n && episode.size() == n && t_env.size() == n,
        "per-step column lengths");
  if (has_states()) {
    check(major_state.size() % n == 0, "major state shape");
    check(minors.size() == n * size_t(n_agents) * minor_dim, "minor state shape");
  }
  for (size_t t = 0; t < n; ++t) {
    check(std::isfinite(logp[t]), "non-finite log-probability");
    check(std::isfinite(reward[t]), "non-finite reward");
    bool natural_end = t_env[t] == uint32_t(episode_len - 1);
    check((done[t] == 1) == natural_end, "done flag placement");
    if (done[t]) check(next_value[t] == 0.0, "terminal bootstrap");
    if (done[t]) check(cut[t] == 1, "terminal step must cut");
    if (t + 1 < n)
      check((cut[t] == 1) == (episode[t + 1] != episode[t]), "cut placement");
  }
  if (n > 0) check(cut[n - 1] == 1, "batch tail must cut");
}

TrajectoryBatch rollout(const Env& env, const Policy& policy, int n_agents,
                        int steps, Rng base, const RolloutOptions& opts) {
  const EnvSpec& sp = env.spec();
  const HeadLayout& hl = policy.heads();

  TrajectoryBatch b;
  b.steps = steps;
  b.n_agents = n_agents;
  b.obs_dim = policy.obs_dim();
  b.head_dim = hl.net_out();
  b.xi_dim = hl.xi_dim;
  b.zmaj_dim = hl.major == HeadKind::kGaussian ? hl.major_n : 0;
  b.u0_dim = hl.major == HeadKind::kNone ? 0 : (hl.major == HeadKind::kCategorical ? 1 : hl.major_n);
  b.minor_dim = sp.minor_dim;

  b.obs.resize(size_t(steps) * b.obs_dim);
  b.head.resize(size_t(steps) * b.head_dim);
  b.z_xi.resize(size_t(steps) * b.xi_dim);
  b.z_major.resize(size_t(steps) * b.zmaj_dim);
  b.u0.resize(size_t(steps) * b.u0_dim);
  b.major_cat.assign(steps, -1);
  b.logp.resize(steps);
  b.reward.resize(steps);
  b.value.resize(steps);
  b.next_value.resize(steps);
  b.done.assign(steps, 0);
  b.cut.assign(steps, 0);
  b.episode.resize(steps);
  b.t_env.resize(steps);
  if (opts.keep_states) {
    b.major_state.resize(size_t(steps) * sp.major_dim);
    b.minors.resize(size_t(steps) * n_agents * sp.minor_dim);
  }

  std::vector<double> minor_actions(size_t(n_agents) * sp.minor_act_dim);
  std::vector<double> xi(hl.xi_dim);
  Eigen::VectorXd term_obs;  // filled when the batch cuts an episode short
  bool truncated = false;

  uint64_t e = opts.first_episode;
  int t = 0;       // position in the batch
  int t_ep = 0;    // position in the running episode
  Rng ep = base.fork2(streams::kEpisodeTag, e);
  SystemState state =
      opts.initial ? *opts.initial : env.init(n_agents, ep.fork(streams::kInit));

  while (t < steps) {
    Eigen::VectorXd obs = encode_obs(env, state);
    Eigen::VectorXd head = policy.head_row(obs);

    Rng pol = ep.fork2(streams::kPolicy, t_ep);
    ActionSample a = sample_action(
        hl, std::span<const double>(head.data(), head.size()), pol,
        opts.deterministic);
    std::vector<double> u0 = major_action_of(hl, a);

    for (int i = 0; i < hl.xi_dim; ++i) xi[i] = std::tanh(a.z_xi[i]);
    DecisionRule rule;
    if (opts.mode == ExecMode::kCentralized)
      rule = decode_rule(sp, xi);

    for (int i = 0; i < n_agents; ++i) {
      double* act = minor_actions.data() + size_t(i) * sp.minor_act_dim;
      if (opts.mode == ExecMode::kDecentralized) {
        Rng xr = ep.fork2(streams::kXiAgent, t_ep).fork(state.ids[i]);
        ActionSample ai = sample_action(
            hl, std::span<const double>(head.data(), head.size()), xr,
            opts.deterministic);
        std::vector<double> xi_i(hl.xi_dim);
        for (int j = 0; j < hl.xi_dim; ++j) xi_i[j] = std::tanh(ai.z_xi[j]);
        DecisionRule own = decode_rule(sp, xi_i);
        Rng ar = ep.fork2(streams::kMinorAct, t_ep).fork(state.ids[i]);
        sample_minor_action(env, own, state.minor(i), ar, act,
                            opts.deterministic);
      } else {
        Rng ar = ep.fork2(streams::kMinorAct, t_ep).fork(state.ids[i]);
        sample_minor_action(env, rule, state.minor(i), ar, act,
                            opts.deterministic);
      }
    }

    double r = env.reward(state, u0, ep.fork2(streams::kReward, t_ep));

    std::copy_n(obs.data(), b.obs_dim, b.obs.data() + size_t(t) * b.obs_dim);
    std::copy_n(head.data(), b.head_dim, b.head.data() + size_t(t) * b.head_dim);
    std::copy_n(a.z_xi.data(), b.xi_dim, b.z_xi.data() + size_t(t) * b.xi_dim);
    if (b.zmaj_dim > 0)
      std::copy_n(a.z_major.data(), b.zmaj_dim,
                  b.z_major.data() + size_t(t) * b.zmaj_dim);
    std::copy_n(u0.data(), b.u0_dim, b.u0.data() + size_t(t) * b.u0_dim);
    b.major_cat[t] = a.major_cat;
    b.logp[t] = a.logp;
    b.reward[t] = r;
    b.episode[t] = uint32_t(e);
    b.t_env[t] = uint32_t(t_ep);
    if (opts.keep_states) {
      std::copy_n(state.major.data(), sp.major_dim,
                  b.major_state.data() + size_t(t) * sp.major_dim);
      std::copy_n(state.minors.data(), size_t(n_agents) * sp.minor_dim,
                  b.minors.data() + size_t(t) * n_agents * sp.minor_dim);
    }

    env.step(state, u0, minor_actions, ep.fork2(streams::kEnvStep, t_ep));
    ++t_ep;

    if (t_ep == sp.episode_len) {
      b.done[t] = 1;
      b.cut[t] = 1;
      ++e;
      t_ep = 0;
      if (t + 1 < steps) {
        ep = base.fork2(streams::kEpisodeTag, e);
        state = env.init(n_agents, ep.fork(streams::kInit));
      }
    } else if (t + 1 == steps) {
      b.cut[t] = 1;
      truncated = true;
      term_obs = encode_obs(env, state);
    }
    ++t;
  }

  // Values in one batched pass; the bootstrap row rides along at the end.
  Eigen::MatrixXd X(steps + (truncated ? 1 : 0), b.obs_dim);
  for (int i = 0; i < steps; ++i)
    X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(
        b.obs.data() + size_t(i) * b.obs_dim, b.obs_dim);
  if (truncated) X.row(steps) = term_obs.transpose();
  Eigen::MatrixXd V = policy.v().forward(policy.v_params(), X);
  for (int i = 0; i < steps; ++i) b.value[i] = V(i, 0);
  for (int i = 0; i < steps; ++i) {
    if (b.done[i])
      b.next_value[i] = 0.0;
    else if (i + 1 < steps)
      b.next_value[i] = b.value[i + 1];
    else
      b.next_value[i] = V(steps, 0);
  }

  b.validate(sp.episode_len);
  return b;
}

EvalResult evaluate_return(const Env& env, const Policy& policy, int n_agents,
                           int episodes, Rng base, const RolloutOptions& opts) {
  int T = env.spec().episode_len;
  TrajectoryBatch b = rollout(env, policy, n_agents, episodes * T, base, opts);

  EvalResult res;
  double acc = 0.0;
  for (int t = 0; t < b.steps; ++t) {
    acc += b.reward[t];
    if (b.done[t]) {
      res.returns.push_back(acc);
      acc = 0.0;
    }
  }
  int n = int(res.returns.size());
  for (double r : res.returns) res.mean += r;
  res.mean /= n;
  if (n > 1) {
    double ss = 0.0;
    for (double r : res.returns) ss += (r - res.mean) * (r - res.mean);
    res.ci_half = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
  }
  return res;
}

namespace {

constexpr char kMagic[8] = {'M', '3', 'F', 'T', 'R', 'A', 'J', '1'};

template <typename T>
void put(std::string& buf, const T* v, size_t count) {
  buf.append(reinterpret_cast<const char*>(v), count * sizeof(T));
}

template <typename T>
void get(const std::string& buf, size_t& pos, T* v, size_t count) {
  size_t bytes = count * sizeof(T);
  if (pos + bytes > buf.size())
    throw RuntimeFailure("trajectory file: truncated record");
  std::memcpy(v, buf.data() + pos, bytes);
  pos += bytes;
}

}  // namespace

void write_trajectory(const std::string& path, const TrajectoryBatch& b,
                      const std::string& env_id, uint64_t seed, ExecMode mode) {
  nlohmann::json meta = {
      {"env", env_id},
      {"seed", seed},
      {"mode", mode == ExecMode::kCentralized ? "centralized" : "decentralized"},
      {"steps", b.steps},
      {"n_agents", b.n_agents},
      {"obs_dim", b.obs_dim},
      {"head_dim", b.head_dim},
      {"xi_dim", b.xi_dim},
      {"zmaj_dim", b.zmaj_dim},
      {"u0_dim", b.u0_dim},
      {"minor_dim", b.minor_dim},
      {"major_dim",
       b.has_states() ? int(b.major_state.size() / size_t(b.steps)) : 0},
      {"has_states", b.has_states()},
  };
  std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write trajectory file: " + path);
  out.write(kMagic, sizeof kMagic);
  uint32_t hlen = uint32_t(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(header.data(), hlen);

  int major_dim = b.has_states() ? int(b.major_state.size() / size_t(b.steps)) : 0;
  for (int t = 0; t < b.steps; ++t) {
    std::string rec;
    put(rec, &b.episode[t], 1);
    put(rec, &b.t_env[t], 1);
    put(rec, b.obs.data() + size_t(t) * b.obs_dim, b.obs_dim);
    put(rec, b.head.data() + size_t(t) * b.head_dim, b.head_dim);
    put(rec, b.z_xi.data() + size_t(t) * b.xi_dim, b.xi_dim);
    put(rec, b.z_major.data() + size_t(t) * b.zmaj_dim, b.zmaj_dim);
    put(rec, b.u0.data() + size_t(t) * b.u0_dim, b.u0_dim);
    int32_t cat = b.major_cat[t];
    put(rec, &cat, 1);
    double scalars[4] = {b.logp[t], b.reward[t], b.value[t], b.next_value[t]};
    put(rec, scalars, 4);
    uint8_t flags[2] = {b.done[t], b.cut[t]};
    put(rec, flags, 2);
    if (b.has_states()) {
      put(rec, b.major_state.data() + size_t(t) * major_dim, major_dim);
      put(rec, b.minors.data() + size_t(t) * b.n_agents * b.minor_dim,
          size_t(b.n_agents) * b.minor_dim);
    }
    uint32_t rlen = uint32_t(rec.size());
    out.write(reinterpret_cast<const char*>(&rlen), 4);
    out.write(rec.data(), rlen);
  }
  if (!out) throw RuntimeFailure("short write to trajectory file: " + path);
}

TrajectoryBatch read_trajectory(const std::string& path, std::string* env_id,
                                uint64_t* seed, ExecMode* mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot read trajectory file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw RuntimeFailure("not a trajectory file: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw RuntimeFailure("trajectory file: truncated header");
  nlohmann::json meta = nlohmann::json::parse(header);

  TrajectoryBatch b;
  b.steps = meta.at("steps").get<int>();
  b.n_agents = meta.at("n_agents").get<int>();
  b.obs_dim = meta.at("obs_dim").get<int>();
  b.head_dim = meta.at("head_dim").get<int>();
  b.xi_dim = meta.at("xi_dim").get<int>();
  b.zmaj_dim = meta.at("zmaj_dim").get<int>();
  b.u0_dim = meta.at("u0_dim").get<int>();
  b.minor_dim = meta.at("minor_dim").get<int>();
  int major_dim = meta.at("major_dim").get<int>();
  bool has_states = meta.at("has_states").get<bool>();
  if (env_id) *env_id = meta.at("env").get<std::string>();
  if (seed) *seed = meta.at("seed").get<uint64_t>();
  if (mode)
    *mode = meta.at("mode").get<std::string>() == "centralized"
                ? ExecMode::kCentralized
                : ExecMode::kDecentralized;

  b.obs.resize(size_t(b.steps) * b.obs_dim);
  b.head.resize(size_t(b.steps) * b.head_dim);
  b.z_xi.resize(size_t(b.steps) * b.xi_dim);
  b.z_major.resize(size_t(b.steps) * b.zmaj_dim);
  b.u0.resize(size_t(b.steps) * b.u0_dim);
  b.major_cat.resize(b.steps);
  b.logp.resize(b.steps);
  b.reward.resize(b.steps);
  b.value.resize(b.steps);
  b.next_value.resize(b.steps);
  b.done.resize(b.steps);
  b.cut.resize(b.steps);
  b.episode.resize(b.steps);
  b.t_env.resize(b.steps);
  if (has_states) {
    b.major_state.resize(size_t(b.steps) * major_dim);
    b.minors.resize(size_t(b.steps) * b.n_agents * b.minor_dim);
  }

  for (int t = 0; t < b.steps; ++t) {
    uint32_t rlen = 0;
    in.read(reinterpret_cast<char*>(&rlen), 4);
    std::string rec(rlen, '\0');
    in.read(rec.data(), rlen);
    if (!in) throw RuntimeFailure("trajectory file: truncated record");
    size_t pos = 0;
    get(rec, pos, &b.episode[t], 1);
    get(rec, pos, &b.t_env[t], 1);
    get(rec, pos, b.obs.data() + size_t(t) * b.obs_dim, b.obs_dim);
    get(rec, pos, b.head.data() + size_t(t) * b.head_dim, b.head_dim);
    get(rec, pos, b.z_xi.data() + size_t(t) * b.xi_dim, b.xi_dim);
    get(rec, pos, b.z_major.data() + size_t(t) * b.zmaj_dim, b.zmaj_dim);
    get(rec, pos, b.u0.data() + size_t(t) * b.u0_dim, b.u0_dim);
    int32_t cat = 0;
    get(rec, pos, &cat, 1);
    b.major_cat[t] = cat;
    double scalars[4];
    get(rec, pos, scalars, 4);
    b.logp[t] = scalars[0];
    b.reward[t] = scalars[1];
    b.value[t] = scalars[2];
    b.next_value[t] = scalars[3];
    uint8_t flags[2];
    get(rec, pos, flags, 2);
    b.done[t] = flags[0];
    b.cut[t] = flags[1];
    if (has_states) {
      get(rec, pos, b.major_state.data() + size_t(t) * major_dim, major_dim);
      get(rec, pos, b.minors.data() + size_t(t) * b.n_agents * b.minor_dim,
          size_t(b.n_agents) * b.minor_dim);
    }
    if (pos != rec.size())
      throw RuntimeFailure("trajectory file: record length mismatch");
  }
  return b;
}

}  // namespace m3fc
