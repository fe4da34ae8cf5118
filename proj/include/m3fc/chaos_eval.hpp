#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m3fc/env.hpp"
#include "m3fc/finite_sim.hpp"
#include "m3fc/mf_limit.hpp"
#include "m3fc/policy.hpp"

namespace m3fc {

// Experiment harness: transfer sweeps over the number of agents,
// centralized-vs-decentralized comparisons, mean-field convergence rate
// fits, and policy-gradient consistency curves. Every operation takes a
// plain integer seed and derives all of its streams from it, so a logged
// row is recomputable from the row fields alone.

// One evaluated system size.
struct SweepRow {
  int n = 0;
  ExecMode mode = ExecMode::kCentralized;
  double mean = 0.0;
  double ci_half = 0.0;
  int episodes = 0;
  uint64_t seed = 0;  // base seed the row's streams were derived from
};

struct SweepResult {
  std::string env_id;
  int ref_n = 0;  // reference system size; its row is part of rows
  std::vector<SweepRow> rows;
};

struct MeanCi {
  double mean = 0.0;
  double ci_half = 0.0;  // 1.96 * sample std / sqrt(count)
};
MeanCi mean_ci(std::span<const double> xs);

// Throws ZeroGradientNorm when either vector has norm zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Rank correlation with average ranks on ties.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// Evaluates the policy at every size in `ns` (strictly increasing) plus the
// reference size, 95% normal CIs from `episodes` episodes each (at least
// 30). If ref_n is the last entry of `ns` no extra row is run; otherwise it
// must exceed every entry. Rows derive their streams from (seed, n, mode)
// alone, so they may be computed on `workers` threads; results are
// bitwise-independent of the worker count.
SweepResult transfer_sweep(const Env& env, const Policy& policy,
                           const std::vector<int>& ns, ExecMode mode,
                           int episodes, int ref_n, uint64_t seed,
                           int workers = 1);

// Paired centralized/decentralized evaluation at one size: both rows share
// the episode initialization streams, so the comparison differs only in the
// per-agent resampling of xi. `deterministic` collapses the action heads to
// their means, which makes the two modes coincide exactly.
SweepResult cde_compare(const Env& env, const Policy& policy, int n,
                        int episodes, uint64_t seed,
                        bool deterministic = false);

// Log-log fit of the one-step mean-field gap against the system size.
struct RateFit {
  std::string env_id;
  std::vector<int> ns;
  std::vector<double> mean_gaps;  // mean lln_gap over draws, per size
  int draws = 0;
  double slope = 0.0;      // least-squares slope of log(gap) vs log(n)
  bool degenerate = false;  // fewer than two positive gaps; slope unset
};

// Shared random contexts (major state/action and mean field) across sizes,
// `draws` of them; the decision rule is fixed. Throws NonFiniteGap if a gap
// comes back non-finite.
RateFit lln_rate_fit(const FiniteModel& model, const Eigen::MatrixXd& rule,
                     const std::vector<int>& ns, int draws, uint64_t seed);

// Mean cosine similarity of gradient estimates against a reference estimate
// at ref_n. The reference is seed index 0 at the reference budget, so a
// curve point at (ref_n, ref_episodes) with one seed is exactly 1.
struct PgCurve {
  std::string env_id;
  std::vector<int> ns;
  std::vector<double> cos_sims;
  int ref_n = 0;
  int seeds = 0;
  int episodes = 0;
  int ref_episodes = 0;
};

// Estimate points (one per size and seed index) are independent and may run
// on `workers` threads; the curve is bitwise-independent of the worker
// count.
PgCurve pg_consistency(const Env& env, const Policy& policy,
                       const std::vector<int>& ns, int ref_n, int seeds,
                       int episodes, int ref_episodes, double gamma,
                       uint64_t seed, int workers = 1);

// CSV writers (header row, '.' decimal, %.17g floats) and their plot-data
// JSON mirrors: {"schema": ..., "rows": [...]} with one object per CSV row.
void write_transfer_csv(const std::string& path, const SweepResult& r);
void write_transfer_json(const std::string& path, const SweepResult& r);
void write_rate_csv(const std::string& path, const RateFit& r);
void write_rate_json(const std::string& path, const RateFit& r);
void write_pg_csv(const std::string& path, const PgCurve& r);
void write_pg_json(const std::string& path, const PgCurve& r);

}  // namespace m3fc
