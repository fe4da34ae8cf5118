#include "m3fc/chaos_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <thread>

#include "m3fc/algo.hpp"
#include "m3fc/errors.hpp"

namespace m3fc {

namespace {

// Tags separating the harness's stream families under one base seed.
constexpr uint64_t kSweepTag = 0x53574545;  // transfer sweep rows
constexpr uint64_t kPairTag = 0x50414952;   // paired mode comparison
constexpr uint64_t kRateTag = 0x52415445;   // rate-fit draw contexts
constexpr uint64_t kPgTag = 0x50474152;     // gradient consistency points

void check_sizes(const std::vector<int>& ns) {
  if (ns.empty()) throw InvalidArgument("need at least one system size");
  for (size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw InvalidArgument("system sizes must be positive");
    if (i > 0 && ns[i] <= ns[i - 1])
      throw InvalidArgument("system sizes must be strictly increasing");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // \n endings everywhere
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  return out;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Runs fn(0..count) on up to `workers` threads pulling from a shared index.
// Each index writes only its own output slot, so scheduling cannot affect
// results. The first exception wins; remaining indices are skipped.
void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  int w = std::min(workers, count);
  if (w <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::exception_ptr first_err;
  auto body = [&] {
    for (;;) {
      int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count || failed.load(std::memory_order_relaxed)) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_err) first_err = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(size_t(w));
  for (int t = 0; t < w; ++t) pool.emplace_back(body);
  for (std::thread& th : pool) th.join();
  if (first_err) std::rethrow_exception(first_err);
}

}  // namespace

MeanCi mean_ci(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean_ci of an empty sample");
  MeanCi out;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= double(xs.size());
  out.mean = m;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    out.ci_half =
        1.96 * std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
  }
  return out;
}

double cosine_similarity(std::span<const double> a,
                         std::span<const double> b) {
  if (a.size() != b.size())
    throw LengthMismatch("cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw ZeroGradientNorm("cosine similarity of a zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// Average ranks, ties shared.
std::vector<double> ranks_of(std::span<const double> xs) {
  size_t n = xs.size();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return xs[size_t(i)] < xs[size_t(j)]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[size_t(idx[j + 1])] == xs[size_t(idx[i])]) ++j;
    double avg = 0.5 * double(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[size_t(idx[k])] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw LengthMismatch("rank correlation of different lengths");
  if (a.size() < 2)
    throw InvalidArgument("rank correlation needs at least two points");
  std::vector<double> ra = ranks_of(a), rb = ranks_of(b);
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= double(ra.size());
  mb /= double(rb.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    throw InvalidArgument("rank correlation of a constant sequence");
  return sab / std::sqrt(saa * sbb);
}

SweepResult transfer_sweep(const Env& env, const Policy& policy,
                           const std::vector<int>& ns, ExecMode mode,
                           int episodes, int ref_n, uint64_t seed,
                           int workers) {
  check_sizes(ns);
  if (episodes < 30)
    throw InvalidArgument("sweeps need at least 30 episodes per point");
  if (ref_n < ns.back())
    throw InvalidArgument("reference size must not be below the sweep");

  std::vector<int> all = ns;
  if (all.back() != ref_n) all.push_back(ref_n);

  SweepResult result;
  result.env_id = env.spec().id;
  result.ref_n = ref_n;
  result.rows.resize(all.size());
  const uint64_t mode_bit = mode == ExecMode::kDecentralized ? 1 : 0;
  parallel_for(int(all.size()), workers, [&](int i) {
    int n = all[size_t(i)];
    RolloutOptions opts;
    opts.mode = mode;
    EvalResult ev =
        evaluate_return(env, policy, n, episodes,
                        Rng(seed).fork2(kSweepTag, uint64_t(n) * 2 + mode_bit),
                        opts);
    SweepRow& row = result.rows[size_t(i)];
    row.n = n;
    row.mode = mode;
    row.mean = ev.mean;
    row.ci_half = ev.ci_half;
    row.episodes = episodes;
    row.seed = seed;
  });
  return result;
}

SweepResult cde_compare(const Env& env, const Policy& policy, int n,
                        int episodes, uint64_t seed, bool deterministic) {
  if (n < 1) throw InvalidArgument("system size must be positive");
  if (episodes < 30)
    throw InvalidArgument("sweeps need at least 30 episodes per point");

  SweepResult result;
  result.env_id = env.spec().id;
  result.ref_n = n;
  // One shared stream for both modes: episode initializations and all
  // central draws coincide, only the per-agent resampling differs.
  Rng row_rng = Rng(seed).fork2(kPairTag, uint64_t(n));
  for (ExecMode mode : {ExecMode::kCentralized, ExecMode::kDecentralized}) {
    RolloutOptions opts;
    opts.mode = mode;
    opts.deterministic = deterministic;
    EvalResult ev = evaluate_return(env, policy, n, episodes, row_rng, opts);
    SweepRow row;
    row.n = n;
    row.mode = mode;
    row.mean = ev.mean;
    row.ci_half = ev.ci_half;
    row.episodes = episodes;
    row.seed = seed;
    result.rows.push_back(row);
  }
  return result;
}

RateFit lln_rate_fit(const FiniteModel& model, const Eigen::MatrixXd& rule,
                     const std::vector<int>& ns, int draws, uint64_t seed) {
  check_sizes(ns);
  if (draws < 1) throw InvalidArgument("need at least one draw");

  RateFit fit;
  fit.env_id = model.id();
  fit.ns = ns;
  fit.draws = draws;
  fit.mean_gaps.assign(ns.size(), 0.0);

  const int nx = model.n_states();
  for (int d = 0; d < draws; ++d) {
    Rng ctx = Rng(seed).fork2(kRateTag, uint64_t(d));
    int x0 = ctx.uniform_int(model.n_major_states());
    int u0 = ctx.uniform_int(model.n_major_actions());
    FiniteMF mu(nx);
    double total = 0.0;
    for (double& w : mu.w) {
      w = -std::log(1.0 - ctx.uniform());
      total += w;
    }
    for (double& w : mu.w) w /= total;

    for (size_t i = 0; i < ns.size(); ++i) {
      int n = ns[i];
      // The gap at size n starts from an n-agent empirical measure sampled
      // from the context's mean field, so it is exactly representable as
      // counts/n and measures pure one-step transition noise.
      Rng init_rng = ctx.fork2(0x4d55, uint64_t(n));
      std::vector<long> counts(size_t(nx), 0L);
      for (int a = 0; a < n; ++a) ++counts[size_t(init_rng.categorical(mu.w))];
      FiniteMF mu_n(nx);
      for (int x = 0; x < nx; ++x) mu_n.w[size_t(x)] = double(counts[size_t(x)]) / n;

      double gap = lln_gap(model, x0, u0, mu_n, rule, n,
                           ctx.fork2(0x4741, uint64_t(n)));
      if (!std::isfinite(gap))
        throw NonFiniteGap("mean-field gap is not finite");
      fit.mean_gaps[i] += gap / draws;
    }
  }

  // Least squares on log-log, over the sizes with a positive mean gap.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int k = 0;
  for (size_t i = 0; i < ns.size(); ++i) {
    if (fit.mean_gaps[i] <= 0.0) continue;
    double x = std::log(double(ns[i])), y = std::log(fit.mean_gaps[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  if (k < 2) {
    fit.degenerate = true;  // slope left at 0, meaningless
  } else {
    fit.slope = (sxy - sx * sy / k) / (sxx - sx * sx / k);
  }
  return fit;
}

PgCurve pg_consistency(const Env& env, const Policy& policy,
                       const std::vector<int>& ns, int ref_n, int seeds,
                       int episodes, int ref_episodes, double gamma,
                       uint64_t seed, int workers) {
  check_sizes(ns);
  if (ref_n < ns.back())
    throw InvalidArgument("reference size must not be below the sweep");
  if (seeds < 1 || episodes < 1 || ref_episodes < 1)
    throw InvalidArgument("seeds and episode budgets must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw InvalidArgument("gamma must lie in (0, 1]");

  auto point_rng = [&](int n, int s) {
    return Rng(seed).fork2(kPgTag, uint64_t(n)).fork(uint64_t(s));
  };
  std::vector<double> ref =
      estimate_pg(env, policy, ref_n, ref_episodes, gamma, point_rng(ref_n, 0));

  PgCurve curve;
  curve.env_id = env.spec().id;
  curve.ns = ns;
  curve.ref_n = ref_n;
  curve.seeds = seeds;
  curve.episodes = episodes;
  curve.ref_episodes = ref_episodes;
  std::vector<double> point_cos(ns.size() * size_t(seeds));
  parallel_for(int(point_cos.size()), workers, [&](int p) {
    int n = ns[size_t(p) / size_t(seeds)];
    int s = p % seeds;
    std::vector<double> g =
        estimate_pg(env, policy, n, episodes, gamma, point_rng(n, s));
    point_cos[size_t(p)] = cosine_similarity(g, ref);
  });
  for (size_t i = 0; i < ns.size(); ++i) {
    double acc = 0.0;
    for (int s = 0; s < seeds; ++s) acc += point_cos[i * size_t(seeds) + s];
    curve.cos_sims.push_back(acc / seeds);
  }
  return curve;
}

void write_transfer_csv(const std::string& path, const SweepResult& r) {
  std::ofstream out = open_out(path);
  out << "env,N,mode,mean,ci,episodes,seed\n";
  for (const SweepRow& row : r.rows)
    out << r.env_id << ',' << row.n << ',' << exec_mode_name(row.mode) << ','
        << g17(row.mean) << ',' << g17(row.ci_half) << ',' << row.episodes
        << ',' << row.seed << '\n';
}

void write_transfer_json(const std::string& path, const SweepResult& r) {
  nlohmann::json j;
  j["schema"] = "transfer";
  j["ref_n"] = r.ref_n;
  j["rows"] = nlohmann::json::array();
  for (const SweepRow& row : r.rows)
    j["rows"].push_back({{"env", r.env_id},
                         {"N", row.n},
                         {"mode", exec_mode_name(row.mode)},
                         {"mean", row.mean},
                         {"ci", row.ci_half},
                         {"episodes", row.episodes},
                         {"seed", row.seed}});
  open_out(path) << j.dump(2) << '\n';
}

void write_rate_csv(const std::string& path, const RateFit& r) {
  std::ofstream out = open_out(path);
  out << "env,N,mean_gap,draws\n";
  for (size_t i = 0; i < r.ns.size(); ++i)
    out << r.env_id << ',' << r.ns[i] << ',' << g17(r.mean_gaps[i]) << ','
        << r.draws << '\n';
}

void write_rate_json(const std::string& path, const RateFit& r) {
  nlohmann::json j;
  j["schema"] = "rate";
  j["slope"] = r.slope;
  j["degenerate"] = r.degenerate;
  j["rows"] = nlohmann::json::array();
  for (size_t i = 0; i < r.ns.size(); ++i)
    j["rows"].push_back({{"env", r.env_id},
                         {"N", r.ns[i]},
                         {"mean_gap", r.mean_gaps[i]},
                         {"draws", r.draws}});
  open_out(path) << j.dump(2) << '\n';
}

void write_pg_csv(const std::string& path, const PgCurve& r) {
  std::ofstream out = open_out(path);
  out << "env,N,cos_sim,seeds\n";
  for (size_t i = 0; i < r.ns.size(); ++i)
    out << r.env_id << ',' << r.ns[i] << ',' << g17(r.cos_sims[i]) << ','
        << r.seeds << '\n';
}

void write_pg_json(const std::string& path, const PgCurve& r) {
  nlohmann::json j;
  j["schema"] = "pg";
  j["ref_n"] = r.ref_n;
  j["episodes"] = r.episodes;
  j["ref_episodes"] = r.ref_episodes;
  j["rows"] = nlohmann::json::array();
  for (size_t i = 0; i < r.ns.size(); ++i)
    j["rows"].push_back({{"env", r.env_id},
                         {"N", r.ns[i]},
                         {"cos_sim", r.cos_sims[i]},
                         {"seeds", r.seeds}});
  open_out(path) << j.dump(2) << '\n';
}

}  // namespace m3fc
