#include "m3fc/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "m3fc/chaos_eval.hpp"
#include "m3fc/checkpoint.hpp"
#include "m3fc/errors.hpp"
#include "m3fc/mf_limit.hpp"
#include "m3fc/policy.hpp"

namespace m3fc {
namespace {

constexpr uint64_t kPolicyInitTag = 0x504f4c59;  // fresh policy parameters
constexpr uint64_t kRuleTag = 0x52554c45;        // random decision rules

const std::set<std::string>& known_envs() {
  static const std::set<std::string> ids = {"2g",       "formation", "beach",
                                            "foraging", "potential", "toy3"};
  return ids;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw ConfigError(key + ": cannot read '" + value + "' as " + want);
}

long long parse_int(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE)
    bad_value(key, value, "an integer");
  return v;
}

uint64_t parse_uint(const std::string& key, const std::string& value) {
  if (value.empty() || value.front() == '-')
    bad_value(key, value, "an unsigned integer");
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || errno == ERANGE)
    bad_value(key, value, "an unsigned integer");
  return v;
}

double parse_float(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() ||
      !std::isfinite(v))
    bad_value(key, value, "a finite number");
  return v;
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    long long v = parse_int(key, trim(item));
    out.push_back(int(v));
  }
  if (out.empty()) bad_value(key, value, "a comma-separated integer list");
  return out;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "env") {
    if (!value.empty() && !known_envs().count(value))
      throw ConfigError("env: unknown environment id '" + value + "'");
    cfg.env = value;
  } else if (key == "out") {
    if (value.empty()) throw ConfigError("out: must not be empty");
    cfg.out = value;
  } else if (key == "hidden") {
    cfg.hidden = parse_int_list(key, value);
    for (int h : cfg.hidden)
      if (h < 1) throw ConfigError("hidden: layer widths must be positive");
  } else if (key == "mode") {
    try {
      cfg.mode = parse_exec_mode(value);
    } catch (const InvalidArgument&) {
      bad_value(key, value, "centralized or decentralized");
    }
  } else if (key == "workers") {
    long long v = parse_int(key, value);
    if (v < 0) throw ConfigError("workers: must be nonnegative");
    cfg.workers = int(v);
  } else if (key == "seed") {
    cfg.train.seed = parse_uint(key, value);
  } else if (key == "algo") {
    if (value != "ppo" && value != "a2c") bad_value(key, value, "ppo or a2c");
    cfg.train.algo = value;
  } else if (key == "env.n_agents") {
    long long v = parse_int(key, value);
    if (v < 1) throw ConfigError("env.n_agents: must be positive");
    cfg.train.n_train = int(v);
  } else if (key == "env.reward_scale") {
    cfg.env_overrides.reward_scale = parse_float(key, value);
  } else if (key == "train.gamma") {
    cfg.train.gamma = parse_float(key, value);
  } else if (key == "train.gae_lambda") {
    cfg.train.gae_lambda = parse_float(key, value);
  } else if (key == "train.kl_coeff") {
    cfg.train.kl_coeff = parse_float(key, value);
  } else if (key == "train.clip") {
    cfg.train.clip = parse_float(key, value);
  } else if (key == "train.lr") {
    cfg.train.lr = parse_float(key, value);
  } else if (key == "train.batch") {
    cfg.train.batch = int(parse_int(key, value));
  } else if (key == "train.minibatch") {
    cfg.train.minibatch = int(parse_int(key, value));
  } else if (key == "train.sgd_iters") {
    cfg.train.sgd_iters = int(parse_int(key, value));
  } else if (key == "train.total_steps") {
    cfg.train.total_steps = long(parse_int(key, value));
  } else if (key == "train.value_coeff") {
    cfg.train.value_coeff = parse_float(key, value);
  } else if (key == "train.grad_clip") {
    cfg.train.grad_clip = parse_float(key, value);
  } else if (key == "train.checkpoint_every") {
    cfg.train.checkpoint_every = int(parse_int(key, value));
  } else if (key == "eval.n_agents") {
    long long v = parse_int(key, value);
    if (v < 0) throw ConfigError("eval.n_agents: must be nonnegative");
    cfg.eval_agents = int(v);
  } else if (key == "eval.episodes") {
    long long v = parse_int(key, value);
    if (v < 1) throw ConfigError("eval.episodes: must be positive");
    cfg.eval_episodes = int(v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    try {
      apply_config_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# resolved run configuration (key = value, '#' starts a comment)\n";
  out << "env = " << cfg.env << "\n";
  out << "out = " << cfg.out << "\n";
  out << "hidden = ";
  for (size_t i = 0; i < cfg.hidden.size(); ++i)
    out << (i ? "," : "") << cfg.hidden[i];
  out << "\n";
  out << "mode = " << exec_mode_name(cfg.mode) << "\n";
  out << "workers = " << cfg.workers << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "algo = " << cfg.train.algo << "\n";
  out << "env.n_agents = " << cfg.train.n_train << "\n";
  out << "env.reward_scale = " << g17(cfg.env_overrides.reward_scale) << "\n";
  out << "train.gamma = " << g17(cfg.train.gamma) << "\n";
  out << "train.gae_lambda = " << g17(cfg.train.gae_lambda) << "\n";
  out << "train.kl_coeff = " << g17(cfg.train.kl_coeff) << "\n";
  out << "train.clip = " << g17(cfg.train.clip) << "\n";
  out << "train.lr = " << g17(cfg.train.lr) << "\n";
  out << "train.batch = " << cfg.train.batch << "\n";
  out << "train.minibatch = " << cfg.train.minibatch << "\n";
  out << "train.sgd_iters = " << cfg.train.sgd_iters << "\n";
  out << "train.total_steps = " << cfg.train.total_steps << "\n";
  out << "train.value_coeff = " << g17(cfg.train.value_coeff) << "\n";
  out << "train.grad_clip = " << g17(cfg.train.grad_clip) << "\n";
  out << "train.checkpoint_every = " << cfg.train.checkpoint_every << "\n";
  out << "eval.n_agents = " << cfg.eval_agents << "\n";
  out << "eval.episodes = " << cfg.eval_episodes << "\n";
  return out.str();
}

int resolve_workers(int requested) {
  if (requested < 0) throw InvalidArgument("workers must be nonnegative");
  if (requested > 0) return requested;
  int cores = int(std::thread::hardware_concurrency());
  return cores > 1 ? cores - 1 : 1;
}

namespace {

std::atomic<bool> g_interrupt{false};

void handle_interrupt(int) { g_interrupt.store(true); }

CheckpointMeta peek_checkpoint(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw CheckpointMissing("checkpoint not found: " + path);
  std::vector<double> params;
  return load_checkpoint(path, params);
}

struct LoadedRun {
  std::unique_ptr<Env> env;
  Policy policy;
  CheckpointMeta meta;
};

// Environment id comes from the checkpoint; a nonempty config env must agree.
LoadedRun load_run(const RunConfig& cfg, const std::string& ckpt) {
  CheckpointMeta meta = peek_checkpoint(ckpt);
  if (!cfg.env.empty() && cfg.env != meta.env_id)
    throw CheckpointEnvMismatch("config names env '" + cfg.env +
                                "' but the checkpoint was trained on '" +
                                meta.env_id + "'");
  std::unique_ptr<Env> env = make_env(meta.env_id, cfg.env_overrides);
  Policy policy = load_policy(env->spec(), ckpt, &meta);
  return {std::move(env), std::move(policy), std::move(meta)};
}

int cmd_train(RunConfig cfg) {
  if (cfg.env.empty()) throw ConfigError("env: required but not set");
  cfg.train.validate();
  std::unique_ptr<Env> env = make_env(cfg.env, cfg.env_overrides);

  std::filesystem::create_directories(cfg.out);
  {
    std::ofstream snap(cfg.out + "/resolved.cfg", std::ios::binary);
    if (!snap)
      throw RuntimeFailure("cannot write " + cfg.out + "/resolved.cfg");
    snap << serialize_config(cfg);
  }

  Policy policy(env->spec(), cfg.hidden);
  policy.init(Rng(cfg.train.seed).fork(kPolicyInitTag));

  g_interrupt.store(false);
  auto prev = std::signal(SIGINT, handle_interrupt);
  std::vector<IterationRow> rows;
  try {
    rows = train(*env, policy, cfg.train, cfg.out, &g_interrupt,
                 [](const IterationRow& r) {
                   std::printf("iter %5d  steps %10ld  return %12.3f "
                               "+-%8.3f  eps %4d  kl %.4f  clip %.3f\n",
                               r.iteration, r.env_steps, r.mean_return,
                               r.ci_half, r.episodes, r.stats.kl,
                               r.stats.clip_frac);
                   std::fflush(stdout);
                 });
  } catch (...) {
    std::signal(SIGINT, prev);
    throw;
  }
  std::signal(SIGINT, prev);

  if (g_interrupt.load())
    std::printf("interrupted after %zu iterations; checkpoint flushed to %s\n",
                rows.size(), cfg.out.c_str());
  else
    std::printf("trained %zu iterations (%ld env steps); artifacts in %s\n",
                rows.size(), rows.empty() ? 0L : rows.back().env_steps,
                cfg.out.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt, int n_flag,
             int episodes_flag, bool deterministic, const std::string& out_csv,
             const std::string& dump_path, int dump_episodes) {
  LoadedRun run = load_run(cfg, ckpt);
  int n = n_flag > 0 ? n_flag
                     : (cfg.eval_agents > 0 ? cfg.eval_agents
                                            : cfg.train.n_train);
  int episodes = episodes_flag > 0 ? episodes_flag : cfg.eval_episodes;
  if (episodes < 1) throw InvalidArgument("episodes must be positive");

  RolloutOptions opts;
  opts.mode = cfg.mode;
  opts.deterministic = deterministic;
  EvalResult res =
      evaluate_return(*run.env, run.policy, n, episodes, Rng(cfg.train.seed),
                      opts);
  std::printf("env %s  N %d  mode %s  episodes %d  mean %.6f  ci %.6f\n",
              run.meta.env_id.c_str(), n, exec_mode_name(cfg.mode), episodes,
              res.mean, res.ci_half);

  if (!out_csv.empty()) {
    SweepResult r;
    r.env_id = run.meta.env_id;
    r.ref_n = n;
    r.rows.push_back(
        {n, cfg.mode, res.mean, res.ci_half, episodes, cfg.train.seed});
    write_transfer_csv(out_csv, r);
  }
  if (!dump_path.empty()) {
    if (dump_episodes < 1)
      throw InvalidArgument("dump episodes must be positive");
    RolloutOptions dopts = opts;
    dopts.keep_states = true;
    TrajectoryBatch b =
        rollout(*run.env, run.policy, n,
                dump_episodes * run.env->spec().episode_len,
                Rng(cfg.train.seed), dopts);
    write_trajectory(dump_path, b, run.meta.env_id, cfg.train.seed, cfg.mode);
    std::printf("dumped %d steps to %s\n", b.steps, dump_path.c_str());
  }
  return 0;
}

int cmd_transfer(const RunConfig& cfg, const std::string& ckpt,
                 const std::vector<int>& ns, int episodes, int ref_n,
                 const std::string& out_csv, const std::string& out_json,
                 bool fast) {
  LoadedRun run = load_run(cfg, ckpt);
  int eps = fast ? std::max(30, episodes / 10) : episodes;
  int ref = ref_n > 0 ? ref_n : ns.back();
  SweepResult r =
      transfer_sweep(*run.env, run.policy, ns, cfg.mode, eps, ref,
                     cfg.train.seed, resolve_workers(cfg.workers));
  for (const SweepRow& row : r.rows)
    std::printf("N %6d  mean %12.4f  ci %9.4f\n", row.n, row.mean,
                row.ci_half);
  write_transfer_csv(out_csv, r);
  if (!out_json.empty()) write_transfer_json(out_json, r);
  std::printf("wrote %s (%zu rows, reference N=%d)\n", out_csv.c_str(),
              r.rows.size(), r.ref_n);
  return 0;
}

int cmd_chaos(const RunConfig& cfg, const std::string& env_flag,
              const std::vector<int>& ns, int draws,
              const std::string& out_csv, const std::string& out_json,
              bool fast) {
  std::string id = env_flag.empty() ? cfg.env : env_flag;
  if (id.empty()) throw ConfigError("env: required but not set");
  std::unique_ptr<FiniteModel> model = make_finite_model(id);

  // A fixed random stochastic rule: bounded parameters decode into strictly
  // positive rows, smooth in the parameters by construction.
  const int nx = model->n_states(), nu = model->n_actions();
  std::vector<double> xi(size_t(nx) * size_t(nu));
  Rng rule_rng = Rng(cfg.train.seed).fork2(kRuleTag, 0);
  for (double& v : xi) v = rule_rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd rule = decode_finite(xi, nx, nu);

  int d = fast ? std::max(20, draws / 10) : draws;
  RateFit fit = lln_rate_fit(*model, rule, ns, d, cfg.train.seed);
  for (size_t i = 0; i < fit.ns.size(); ++i)
    std::printf("N %6d  mean gap %.6g\n", fit.ns[i], fit.mean_gaps[i]);
  if (fit.degenerate)
    std::printf("fit degenerate: fewer than two positive mean gaps\n");
  else
    std::printf("log-log slope %.4f over %d draws\n", fit.slope, d);
  write_rate_csv(out_csv, fit);
  if (!out_json.empty()) write_rate_json(out_json, fit);
  std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

int cmd_pgcheck(const RunConfig& cfg, const std::string& ckpt,
                const std::vector<int>& ns, int ref_n, int seeds, int episodes,
                int ref_episodes, const std::string& out_csv,
                const std::string& out_json, bool fast) {
  LoadedRun run = load_run(cfg, ckpt);
  int eps = fast ? std::max(1, episodes / 10) : episodes;
  int ref_eps = fast ? std::max(1, ref_episodes / 10) : ref_episodes;
  PgCurve curve =
      pg_consistency(*run.env, run.policy, ns, ref_n, seeds, eps, ref_eps,
                     cfg.train.gamma, cfg.train.seed,
                     resolve_workers(cfg.workers));
  for (size_t i = 0; i < curve.ns.size(); ++i)
    std::printf("N %6d  cos %.4f\n", curve.ns[i], curve.cos_sims[i]);
  write_pg_csv(out_csv, curve);
  if (!out_json.empty()) write_pg_json(out_json, curve);
  std::printf("wrote %s (reference N=%d, %d seeds)\n", out_csv.c_str(),
              curve.ref_n, curve.seeds);
  return 0;
}

int cmd_dpp(const RunConfig& cfg, const std::string& env_flag, int resolution,
            double tol, const std::string& out_csv) {
  std::string id = env_flag.empty() ? cfg.env : env_flag;
  if (id.empty()) throw ConfigError("env: required but not set");
  if (resolution < 1) throw InvalidArgument("resolution must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  std::unique_ptr<FiniteModel> model = make_finite_model(id);
  SimplexGrid grid(model->n_states(), resolution);
  ValueTable table = value_iteration(*model, grid, cfg.train.gamma, tol);
  write_value_table_csv(out_csv, table, grid);
  std::printf(
      "solved %s: %d major states x %d nodes, %zu sweeps, residual %.3g\n",
      id.c_str(), table.n_major, table.n_nodes, table.residuals.size(),
      table.residuals.empty() ? 0.0 : table.residuals.back());
  std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

int cmd_replay(const RunConfig& cfg, const std::string& ckpt,
               const std::string& traj, double tol, bool deterministic) {
  if (!(tol >= 0.0)) throw InvalidArgument("tol must be nonnegative");
  if (!std::filesystem::exists(traj))
    throw RuntimeFailure("trajectory file not found: " + traj);

  std::string env_id;
  uint64_t seed = 0;
  ExecMode mode{};
  TrajectoryBatch logged = read_trajectory(traj, &env_id, &seed, &mode);
  if (logged.steps < 1) throw RuntimeFailure("trajectory is empty");
  if (!cfg.env.empty() && cfg.env != env_id)
    throw InvalidArgument("config names env '" + cfg.env +
                          "' but the trajectory came from '" + env_id + "'");

  RunConfig sub = cfg;
  sub.env = env_id;  // force the checkpoint to match the trajectory's env
  LoadedRun run = load_run(sub, ckpt);

  RolloutOptions opts;
  opts.mode = mode;
  opts.deterministic = deterministic;
  opts.keep_states = logged.has_states();
  opts.first_episode = logged.episode.front();
  TrajectoryBatch fresh = rollout(*run.env, run.policy, logged.n_agents,
                                  logged.steps, Rng(seed), opts);

  double worst = 0.0;
  std::string worst_field = "none";
  bool ok = true;
  auto cmp = [&](const char* name, const std::vector<double>& want,
                 const std::vector<double>& got) {
    if (!ok) return;
    if (want.size() != got.size()) {
      std::printf("replay mismatch: %s has %zu values, expected %zu\n", name,
                  got.size(), want.size());
      ok = false;
      return;
    }
    double dev = 0.0;
    for (size_t i = 0; i < want.size(); ++i)
      dev = std::max(dev, std::abs(want[i] - got[i]));
    if (dev > worst) {
      worst = dev;
      worst_field = name;
    }
  };
  auto eq = [&](const char* name, const auto& want, const auto& got) {
    if (!ok) return;
    if (!(want == got)) {
      std::printf("replay mismatch in %s\n", name);
      ok = false;
    }
  };

  eq("shape", std::vector<int>{logged.n_agents, logged.obs_dim,
                               logged.head_dim, logged.xi_dim, logged.zmaj_dim,
                               logged.u0_dim, logged.minor_dim},
     std::vector<int>{fresh.n_agents, fresh.obs_dim, fresh.head_dim,
                      fresh.xi_dim, fresh.zmaj_dim, fresh.u0_dim,
                      fresh.minor_dim});
  cmp("obs", logged.obs, fresh.obs);
  cmp("head", logged.head, fresh.head);
  cmp("z_xi", logged.z_xi, fresh.z_xi);
  cmp("z_major", logged.z_major, fresh.z_major);
  cmp("u0", logged.u0, fresh.u0);
  cmp("logp", logged.logp, fresh.logp);
  cmp("reward", logged.reward, fresh.reward);
  cmp("value", logged.value, fresh.value);
  cmp("next_value", logged.next_value, fresh.next_value);
  cmp("major_state", logged.major_state, fresh.major_state);
  cmp("minors", logged.minors, fresh.minors);
  eq("major_cat", logged.major_cat, fresh.major_cat);
  eq("done", logged.done, fresh.done);
  eq("cut", logged.cut, fresh.cut);
  eq("episode", logged.episode, fresh.episode);
  eq("t_env", logged.t_env, fresh.t_env);
  if (!ok) return 1;

  if (worst > tol) {
    std::printf("replay FAILED: max deviation %.3g in %s exceeds %.3g\n",
                worst, worst_field.c_str(), tol);
    return 1;
  }
  std::printf("replay ok: %d steps, max deviation %.3g (%s)\n", logged.steps,
              worst, worst_field.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"mean-field multi-agent control laboratory", "m3fc"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, traj, env_flag, mode_str, algo;
  std::string out_csv, out_json, dump_path, ns_str;
  uint64_t seed = 0;
  long steps = 0;
  int workers = 0;
  int n = 0, episodes = 0, ref_n = 0, seeds = 20, ref_episodes = 300;
  int dump_episodes = 1, resolution = 20, draws = 200;
  double tol = 0.0, gamma = 0.0;
  bool deterministic = false, fast = false;

  auto add_common = [&](CLI::App* c, bool config_required) {
    CLI::Option* o =
        c->add_option("--config", config_path, "flat key=value run file");
    if (config_required) o->required();
    c->add_option("--seed", seed, "override the config seed");
    c->add_option("--workers", workers,
                  "sweep thread budget (0 = logical cores - 1)");
  };

  CLI::App* tr = app.add_subcommand("train", "run the on-policy training loop");
  add_common(tr, true);
  tr->add_option("--out", out_dir, "artifact directory (overrides config)");
  tr->add_option("--algo", algo, "ppo or a2c (overrides config)");
  tr->add_option("--steps", steps, "env-step budget (overrides config)");

  CLI::App* ev =
      app.add_subcommand("eval", "evaluate a checkpoint's mean return");
  add_common(ev, false);
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--n", n, "agents in the finite system (0 = config)");
  ev->add_option("--episodes", episodes, "evaluation episodes (0 = config)");
  ev->add_option("--mode", mode_str, "centralized or decentralized");
  ev->add_flag("--deterministic", deterministic,
               "collapse action heads to their means");
  ev->add_option("--out", out_csv, "also write a one-row sweep CSV here");
  ev->add_option("--dump", dump_path, "record a trajectory dump for replay");
  ev->add_option("--dump-episodes", dump_episodes, "episodes in the dump");

  CLI::App* tf =
      app.add_subcommand("transfer", "sweep mean return over system sizes");
  add_common(tf, false);
  tf->add_option("--ckpt", ckpt, "checkpoint file")->required();
  tf->add_option("--ns", ns_str, "sizes (default 2,5,10,20,50,500)");
  tf->add_option("--episodes", episodes, "episodes per size (default 100)");
  tf->add_option("--ref-n", ref_n, "reference size (default: largest in --ns)");
  tf->add_option("--mode", mode_str, "centralized or decentralized");
  tf->add_option("--out", out_csv, "CSV path (default transfer.csv)");
  tf->add_option("--json", out_json, "also write plot-data JSON here");
  tf->add_flag("--fast", fast, "divide episode budgets by 10");

  CLI::App* ch = app.add_subcommand(
      "chaos", "fit the finite-to-limit mean-field gap against system size");
  add_common(ch, false);
  ch->add_option("--env", env_flag, "finite-state env id (beach or toy3)");
  ch->add_option("--ns", ns_str, "sizes (default 10,100,1000,10000)");
  ch->add_option("--draws", draws, "random contexts per size (default 200)");
  ch->add_option("--out", out_csv, "CSV path (default chaos.csv)");
  ch->add_option("--json", out_json, "also write plot-data JSON here");
  ch->add_flag("--fast", fast, "divide the draw budget by 10");

  CLI::App* pg = app.add_subcommand(
      "pgcheck", "gradient-estimate consistency against a large-N reference");
  add_common(pg, false);
  pg->add_option("--ckpt", ckpt, "checkpoint file")->required();
  pg->add_option("--ns", ns_str, "sizes (default 5,20,100)");
  pg->add_option("--ref-n", ref_n, "reference size (default 500)");
  pg->add_option("--seeds", seeds, "estimates per size (default 20)");
  pg->add_option("--episodes", episodes, "episodes per estimate (default 100)");
  pg->add_option("--ref-episodes", ref_episodes,
                 "episodes for the reference (default 300)");
  pg->add_option("--out", out_csv, "CSV path (default pg.csv)");
  pg->add_option("--json", out_json, "also write plot-data JSON here");
  pg->add_flag("--fast", fast, "divide episode budgets by 10");

  CLI::App* dp = app.add_subcommand(
      "dpp", "solve the limiting control problem on a simplex grid");
  add_common(dp, false);
  dp->add_option("--env", env_flag, "finite-state env id (beach or toy3)");
  dp->add_option("--resolution", resolution,
                 "simplex grid resolution (default 20)");
  dp->add_option("--tol", tol, "sup-norm stopping tolerance (default 1e-8)");
  dp->add_option("--gamma", gamma, "discount override");
  dp->add_option("--out", out_csv, "CSV path (default value.csv)");

  CLI::App* rp = app.add_subcommand(
      "replay", "re-simulate a trajectory dump and compare");
  add_common(rp, false);
  rp->add_option("--ckpt", ckpt, "checkpoint file")->required();
  rp->add_option("--traj", traj, "trajectory dump")->required();
  rp->add_option("--tol", tol, "max absolute deviation (default 1e-12)");
  rp->add_flag("--deterministic", deterministic,
               "the dump was recorded with deterministic heads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunConfig cfg =
        config_path.empty() ? RunConfig{} : load_config(config_path);
    if (const char* s = std::getenv("M3FC_SEED"); s && *s)
      cfg.train.seed = parse_uint("M3FC_SEED", s);
    auto given = [&](const std::string& name) {
      const CLI::Option* o = sub->get_option_no_throw(name);
      return o != nullptr && o->count() > 0;
    };
    if (given("--seed")) cfg.train.seed = seed;
    if (given("--workers")) {
      if (workers < 0) throw InvalidArgument("workers must be nonnegative");
      cfg.workers = workers;
    }
    if (given("--mode")) cfg.mode = parse_exec_mode(mode_str);

    if (sub == tr) {
      if (tr->count("--out")) {
        if (out_dir.empty()) throw InvalidArgument("out must not be empty");
        cfg.out = out_dir;
      }
      if (tr->count("--algo")) {
        if (algo != "ppo" && algo != "a2c")
          throw InvalidArgument("algo must be ppo or a2c");
        cfg.train.algo = algo;
      }
      if (tr->count("--steps")) {
        if (steps < 0) throw InvalidArgument("steps must be nonnegative");
        cfg.train.total_steps = steps;
      }
      return cmd_train(std::move(cfg));
    }
    if (sub == ev)
      return cmd_eval(cfg, ckpt, n, episodes, deterministic, out_csv,
                      dump_path, dump_episodes);
    if (sub == tf) {
      std::vector<int> ns = ns_str.empty()
                                ? std::vector<int>{2, 5, 10, 20, 50, 500}
                                : parse_int_list("--ns", ns_str);
      return cmd_transfer(cfg, ckpt, ns, episodes > 0 ? episodes : 100, ref_n,
                          out_csv.empty() ? "transfer.csv" : out_csv, out_json,
                          fast);
    }
    if (sub == ch) {
      std::vector<int> ns = ns_str.empty()
                                ? std::vector<int>{10, 100, 1000, 10000}
                                : parse_int_list("--ns", ns_str);
      return cmd_chaos(cfg, env_flag, ns, draws,
                       out_csv.empty() ? "chaos.csv" : out_csv, out_json,
                       fast);
    }
    if (sub == pg) {
      std::vector<int> ns = ns_str.empty() ? std::vector<int>{5, 20, 100}
                                           : parse_int_list("--ns", ns_str);
      return cmd_pgcheck(cfg, ckpt, ns, pg->count("--ref-n") ? ref_n : 500,
                         seeds, episodes > 0 ? episodes : 100, ref_episodes,
                         out_csv.empty() ? "pg.csv" : out_csv, out_json, fast);
    }
    if (sub == dp) {
      if (dp->count("--gamma")) cfg.train.gamma = gamma;
      return cmd_dpp(cfg, env_flag, resolution,
                     dp->count("--tol") ? tol : 1e-8,
                     out_csv.empty() ? "value.csv" : out_csv);
    }
    if (sub == rp)
      return cmd_replay(cfg, ckpt, traj, rp->count("--tol") ? tol : 1e-12,
                        deterministic);
    throw RuntimeFailure("no subcommand dispatched");
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const RuntimeFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace m3fc
