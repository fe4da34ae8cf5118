#include "m3fc/algo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "m3fc/checkpoint.hpp"
#include "m3fc/errors.hpp"

namespace m3fc {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw InvalidArgument("gamma must lie in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw InvalidArgument("gae_lambda must lie in [0, 1]");
  if (batch < 1 || minibatch < 1 || batch % minibatch != 0)
    throw InvalidArgument("minibatch must divide batch");
  if (sgd_iters < 1) throw InvalidArgument("sgd_iters must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw InvalidArgument("lr must be positive and finite");
  if (n_train < 1) throw InvalidArgument("n_train must be at least 1");
  if (total_steps < 0) throw InvalidArgument("total_steps must be nonnegative");
  if (algo != "ppo" && algo != "a2c")
    throw InvalidArgument("algo must be ppo or a2c");
  if (!(clip > 0.0)) throw InvalidArgument("clip must be positive");
  if (kl_coeff < 0.0 || value_coeff < 0.0)
    throw InvalidArgument("loss coefficients must be nonnegative");
  if (!(grad_clip > 0.0)) throw InvalidArgument("grad_clip must be positive");
  if (checkpoint_every < 0)
    throw InvalidArgument("checkpoint_every must be nonnegative");
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const double> next_values,
              std::span<const uint8_t> ends, double gamma, double lambda) {
  size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || ends.size() != n)
    throw LengthMismatch("gae input spans disagree in length");
  GaeResult out;
  out.advantages.resize(n);
  out.targets.resize(n);
  double acc = 0.0;
  for (size_t t = n; t-- > 0;) {
    double delta = rewards[t] + gamma * next_values[t] - values[t];
    acc = delta + gamma * lambda * (ends[t] ? 0.0 : acc);
    out.advantages[t] = acc;
    out.targets[t] = acc + values[t];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= double(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  double sd = std::sqrt(var / double(adv.size()));
  for (double& a : adv) {
    a -= mean;
    if (sd > 1e-12) a /= sd;
  }
}

namespace {

// Rebuild the sampled joint action of one batch row.
ActionSample row_action(const TrajectoryBatch& b, int i) {
  ActionSample a;
  a.major_cat = b.major_cat[size_t(i)];
  if (b.zmaj_dim > 0)
    a.z_major = Eigen::Map<const Eigen::VectorXd>(
        b.z_major.data() + size_t(i) * b.zmaj_dim, b.zmaj_dim);
  if (b.xi_dim > 0)
    a.z_xi = Eigen::Map<const Eigen::VectorXd>(
        b.z_xi.data() + size_t(i) * b.xi_dim, b.xi_dim);
  a.logp = b.logp[size_t(i)];
  return a;
}

}  // namespace

UpdateStats surrogate_gradient(const TrajectoryBatch& batch,
                               const Policy& policy, const TrainConfig& cfg,
                               int row_begin, int row_end,
                               std::span<const double> adv,
                               std::span<const double> targets,
                               std::span<double> grad_out) {
  const int m = row_end - row_begin;
  if (m < 1 || row_end > batch.steps)
    throw InvalidArgument("bad minibatch row range");
  if (int(adv.size()) != batch.steps || int(targets.size()) != batch.steps)
    throw LengthMismatch("advantages must cover the whole batch");
  if (int(grad_out.size()) != policy.n_params())
    throw LengthMismatch("gradient buffer size mismatch");

  const HeadLayout& hl = policy.heads();
  const int od = policy.obs_dim(), hd = hl.net_out();

  Eigen::MatrixXd X(m, od);
  for (int i = 0; i < m; ++i)
    X.row(i) = Eigen::Map<const Eigen::VectorXd>(
        batch.obs.data() + size_t(row_begin + i) * od, od);

  MlpTape pi_tape, v_tape;
  Eigen::MatrixXd H = policy.pi().forward(policy.params.data(), X, &pi_tape);
  Eigen::MatrixXd V = policy.v().forward(policy.v_params(), X, &v_tape);

  UpdateStats st;
  st.minibatch_passes = 1;
  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(m, hd);
  Eigen::MatrixXd dV(m, 1);
  std::vector<double> dlogp(hd), dkl(hd);
  double surr = 0.0, mse = 0.0;
  const double inv_m = 1.0 / m;

  for (int i = 0; i < m; ++i) {
    int row = row_begin + i;
    ActionSample a = row_action(batch, row);
    // Eigen stores column-major; copy the row out to get a contiguous span.
    Eigen::VectorXd hvec = H.row(i);
    double lp = action_logprob(hl, std::span<const double>(hvec.data(), hd), a,
                               dlogp);
    double ratio = std::exp(lp - batch.logp[size_t(row)]);
    double A = adv[size_t(row)];
    double unclipped = ratio * A;
    double clipped =
        std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * A;
    surr += std::min(unclipped, clipped) * inv_m;
    double pg_w = unclipped <= clipped ? ratio * A : 0.0;
    if (std::abs(ratio - 1.0) > cfg.clip) st.clip_frac += inv_m;

    std::span<const double> old_row(batch.head.data() + size_t(row) * hd, hd);
    double kl = 0.0;
    if (cfg.kl_coeff > 0.0) {
      kl = head_kl(hl, old_row, std::span<const double>(hvec.data(), hd), dkl);
    } else {
      kl = head_kl(hl, old_row, std::span<const double>(hvec.data(), hd));
      std::fill(dkl.begin(), dkl.end(), 0.0);
    }
    st.kl += kl * inv_m;
    st.entropy +=
        head_entropy(hl, std::span<const double>(hvec.data(), hd)) * inv_m;

    // Descent gradient of the negated objective.
    for (int j = 0; j < hd; ++j)
      dH(i, j) = (-pg_w * dlogp[j] + cfg.kl_coeff * dkl[j]) * inv_m;

    double err = V(i, 0) - targets[size_t(row)];
    mse += err * err * inv_m;
    dV(i, 0) = 2.0 * cfg.value_coeff * err * inv_m;
  }

  st.policy_loss = -surr;
  st.value_loss = mse;
  double objective = surr - cfg.kl_coeff * st.kl - cfg.value_coeff * mse;
  if (!std::isfinite(objective))
    throw NonFiniteLoss("surrogate objective is not finite");

  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  policy.pi().backward(policy.params.data(), pi_tape, dH, grad_out.data());
  policy.v().backward(policy.v_params(), v_tape, dV,
                      grad_out.data() + policy.pi().n_params());

  double norm2 = 0.0;
  for (double g : grad_out) norm2 += g * g;
  if (!std::isfinite(norm2))
    throw NonFiniteLoss("surrogate gradient is not finite");
  st.grad_norm = std::sqrt(norm2);
  return st;
}

namespace {

UpdateStats run_update(const TrajectoryBatch& batch, Policy& policy, Adam& opt,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (batch.steps != cfg.batch)
    throw SizeMismatch("batch size does not match cfg.batch");

  GaeResult g = gae(batch.reward, batch.value, batch.next_value, batch.cut,
                    cfg.gamma, cfg.gae_lambda);
  normalize_advantages(g.advantages);

  // Roll back both the parameters and the optimizer on a bad update.
  std::vector<double> saved_params = policy.params;
  Adam saved_opt = opt;

  UpdateStats total;
  std::vector<double> grad(policy.n_params());
  try {
    for (int it = 0; it < cfg.sgd_iters; ++it) {
      for (int mb = 0; mb < cfg.batch; mb += cfg.minibatch) {
        UpdateStats st =
            surrogate_gradient(batch, policy, cfg, mb, mb + cfg.minibatch,
                               g.advantages, g.targets, grad);
        if (st.grad_norm > cfg.grad_clip) {
          double scale = cfg.grad_clip / st.grad_norm;
          for (double& v : grad) v *= scale;
        }
        opt.step(policy.params.data(), grad.data());

        total.policy_loss += st.policy_loss;
        total.value_loss += st.value_loss;
        total.kl += st.kl;
        total.clip_frac += st.clip_frac;
        total.entropy += st.entropy;
        total.grad_norm += st.grad_norm;
        total.minibatch_passes += 1;
      }
    }
  } catch (const NonFiniteLoss&) {
    policy.params = saved_params;
    opt = saved_opt;
    throw;
  }

  double inv = 1.0 / total.minibatch_passes;
  total.policy_loss *= inv;
  total.value_loss *= inv;
  total.kl *= inv;
  total.clip_frac *= inv;
  total.entropy *= inv;
  total.grad_norm *= inv;
  return total;
}

}  // namespace

UpdateStats ppo_update(const TrajectoryBatch& batch, Policy& policy, Adam& opt,
                       const TrainConfig& cfg) {
  return run_update(batch, policy, opt, cfg);
}

UpdateStats a2c_update(const TrajectoryBatch& batch, Policy& policy, Adam& opt,
                       const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.kl_coeff = 0.0;
  c.clip = HUGE_VAL;
  c.sgd_iters = 1;
  c.minibatch = c.batch;
  return run_update(batch, policy, opt, c);
}

std::string metrics_csv_header() {
  return "iteration,env_steps,mean_return,ci,episodes,kl,clip_frac,"
         "policy_loss,value_loss,entropy,grad_norm";
}

std::string metrics_csv_row(const IterationRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%ld,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                r.iteration, r.env_steps, r.mean_return, r.ci_half, r.episodes,
                r.stats.kl, r.stats.clip_frac, r.stats.policy_loss,
                r.stats.value_loss, r.stats.entropy, r.stats.grad_norm);
  return buf;
}

namespace {

// Undiscounted return statistics of the episodes completed inside a batch.
void batch_returns(const TrajectoryBatch& b, double* mean, double* ci,
                   int* episodes) {
  std::vector<double> rets;
  double acc = 0.0;
  for (int t = 0; t < b.steps; ++t) {
    acc += b.reward[size_t(t)];
    if (b.done[size_t(t)]) {
      rets.push_back(acc);
      acc = 0.0;
    } else if (b.cut[size_t(t)]) {
      acc = 0.0;  // truncated episode, return unusable
    }
  }
  *episodes = int(rets.size());
  if (rets.empty()) {
    *mean = 0.0;
    *ci = 0.0;
    return;
  }
  double m = 0.0;
  for (double r : rets) m += r;
  m /= double(rets.size());
  double ss = 0.0;
  for (double r : rets) ss += (r - m) * (r - m);
  *mean = m;
  *ci = rets.size() > 1
            ? 1.96 * std::sqrt(ss / double(rets.size() - 1) / rets.size())
            : 0.0;
}

void write_ckpt(const std::string& dir, const Env& env, const Policy& policy,
                const TrainConfig& cfg, int iter, long env_steps) {
  CheckpointMeta meta;
  meta.env_id = env.spec().id;
  meta.algo = cfg.algo;
  meta.seed = cfg.seed;
  meta.iteration = iter;
  meta.env_steps = env_steps;
  meta.hidden = policy.pi().spec().hidden;
  char name[64];
  std::snprintf(name, sizeof name, "ckpt_%06d.m3fc", iter);
  save_checkpoint(dir + "/" + name, meta, policy.params);
}

}  // namespace

std::vector<IterationRow> train(
    const Env& env, Policy& policy, const TrainConfig& cfg,
    const std::string& out_dir, const std::atomic<bool>* stop,
    const std::function<void(const IterationRow&)>& on_iter) {
  cfg.validate();
  const long iterations = cfg.total_steps / cfg.batch;

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::string path = out_dir + "/metrics.csv";
    bool fresh = !std::filesystem::exists(path) ||
                 std::filesystem::file_size(path) == 0;
    metrics.open(path, std::ios::app);
    if (!metrics) throw RuntimeFailure("cannot open " + path + " for append");
    if (fresh) metrics << metrics_csv_header() << "\n";
    write_ckpt(out_dir, env, policy, cfg, 0, 0);
  }

  Adam opt(policy.n_params(), cfg.lr);
  std::vector<IterationRow> rows;
  Rng base(cfg.seed);
  uint64_t next_episode = 0;
  long env_steps = 0;

  for (long it = 1; it <= iterations; ++it) {
    if (stop && stop->load(std::memory_order_relaxed)) {
      if (!out_dir.empty())
        write_ckpt(out_dir, env, policy, cfg, int(it - 1), env_steps);
      break;
    }
    RolloutOptions opts;
    opts.mode = ExecMode::kCentralized;
    opts.first_episode = next_episode;
    TrajectoryBatch batch =
        rollout(env, policy, cfg.n_train, cfg.batch, base, opts);
    next_episode = uint64_t(batch.episode.back()) + 1;
    env_steps += batch.steps;

    IterationRow row;
    row.iteration = int(it);
    row.env_steps = env_steps;
    batch_returns(batch, &row.mean_return, &row.ci_half, &row.episodes);
    row.stats = cfg.algo == "a2c" ? a2c_update(batch, policy, opt, cfg)
                                  : ppo_update(batch, policy, opt, cfg);
    rows.push_back(row);
    if (on_iter) on_iter(row);

    if (!out_dir.empty()) {
      metrics << metrics_csv_row(row) << "\n";
      metrics.flush();
      bool last = it == iterations;
      if (last || (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0))
        write_ckpt(out_dir, env, policy, cfg, int(it), env_steps);
    }
  }
  return rows;
}

std::vector<double> estimate_pg(const Env& env, const Policy& policy, int n,
                                int episodes, double gamma, Rng base) {
  if (episodes < 1) throw InvalidArgument("estimate_pg needs episodes >= 1");
  const int T = env.spec().episode_len;
  RolloutOptions opts;
  opts.mode = ExecMode::kCentralized;
  TrajectoryBatch b = rollout(env, policy, n, episodes * T, base, opts);

  // Discounted reward-to-go within each episode.
  std::vector<double> togo(size_t(b.steps));
  double acc = 0.0;
  for (int t = b.steps; t-- > 0;) {
    acc = b.reward[size_t(t)] + gamma * (b.cut[size_t(t)] ? 0.0 : acc);
    togo[size_t(t)] = acc;
  }

  const HeadLayout& hl = policy.heads();
  const int od = policy.obs_dim(), hd = hl.net_out();
  Eigen::MatrixXd X(b.steps, od);
  for (int t = 0; t < b.steps; ++t)
    X.row(t) = Eigen::Map<const Eigen::VectorXd>(
        b.obs.data() + size_t(t) * od, od);
  MlpTape tape;
  Eigen::MatrixXd H = policy.pi().forward(policy.params.data(), X, &tape);

  Eigen::MatrixXd dH(b.steps, hd);
  std::vector<double> dlogp(hd);
  const double inv_eps = 1.0 / episodes;
  for (int t = 0; t < b.steps; ++t) {
    ActionSample a = row_action(b, t);
    Eigen::VectorXd hvec = H.row(t);
    action_logprob(hl, std::span<const double>(hvec.data(), hd), a, dlogp);
    double w = std::pow(gamma, double(b.t_env[size_t(t)])) * togo[size_t(t)] *
               inv_eps;
    for (int j = 0; j < hd; ++j) dH(t, j) = w * dlogp[j];
  }

  std::vector<double> grad(size_t(policy.pi().n_params()), 0.0);
  policy.pi().backward(policy.params.data(), tape, dH, grad.data());
  return grad;
}

}  // namespace m3fc
