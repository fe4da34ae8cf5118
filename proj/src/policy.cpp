#include "m3fc/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace m3fc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Raw log-std outputs are squashed smoothly into [kLsLo, kLsHi]; the shift
// makes a zero-initialized head start at std exactly 1.
constexpr double kLsLo = -5.0, kLsHi = 2.0;
const double kLsShift = std::atanh((0.0 - kLsLo) / (kLsHi - kLsLo) * 2.0 - 1.0);

double ls_clamp(double raw) {
  return kLsLo + (kLsHi - kLsLo) * 0.5 * (1.0 + std::tanh(raw + kLsShift));
}
double ls_clamp_deriv(double raw) {
  double t = std::tanh(raw + kLsShift);
  return (kLsHi - kLsLo) * 0.5 * (1.0 - t * t);
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// log(1 - tanh(z)^2), stable for large |z|
double log_tanh_jacobian(double z) {
  return 2.0 * (std::numbers::ln2 - z - softplus(-2.0 * z));
}

double logsumexp(std::span<const double> v) {
  double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

int argmax(std::span<const double> v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

HeadLayout head_layout(const EnvSpec& spec) {
  HeadLayout hl;
  if (spec.major_act_dim > 0) {
    hl.major = spec.major_finite ? HeadKind::kCategorical : HeadKind::kGaussian;
    hl.major_n = spec.major_finite ? spec.major_actions : spec.major_act_dim;
  }
  if (spec.minor_finite) {
    hl.xi_finite = true;
    hl.xi_rows = spec.minor_states;
    hl.xi_cols = spec.minor_actions;
  } else {
    hl.xi_finite = false;
    hl.xi_rows = spec.obs_grid.n_cells();
    hl.xi_cols = 2 * spec.minor_act_dim;
  }
  hl.xi_dim = hl.xi_rows * hl.xi_cols;
  return hl;
}

int obs_dim(const EnvSpec& spec) {
  return spec.major_feat_dim + spec.obs_grid.n_cells() +
         (spec.obs_mean_extra ? spec.obs_grid.n_cells() : 0);
}

VectorXd encode_obs(const Env& env, const SystemState& s) {
  const EnvSpec& spec = env.spec();
  VectorXd o(obs_dim(spec));
  env.encode_major(s, o.data());
  MeanFieldHist h = env.mean_field(s);
  int off = spec.major_feat_dim;
  for (int c = 0; c < h.size(); ++c) o[off + c] = h[c];
  if (spec.obs_mean_extra) {
    off += h.size();
    std::vector<double> vals(s.n);
    for (int i = 0; i < s.n; ++i) vals[i] = s.minor(i)[spec.pos_dim];
    std::vector<double> m = mean_per_bin(std::span<const double>(s.minors),
                                         s.minor_dim, vals, spec.obs_grid);
    for (size_t c = 0; c < m.size(); ++c) o[off + int(c)] = m[c];
  }
  return o;
}

namespace {

// Shared gaussian-with-tanh-squash block: sample, logprob, kl, entropy all
// read (mean, raw log-std) halves of a parameter slice.
void sample_gaussian_block(std::span<const double> block, int n, Rng& rng,
                           bool deterministic, VectorXd& z) {
  z.resize(n);
  for (int j = 0; j < n; ++j) {
    double std_ = std::exp(ls_clamp(block[n + j]));
    z[j] = deterministic ? block[j] : block[j] + std_ * rng.normal();
  }
}

double gaussian_block_logprob(std::span<const double> block, int n,
                              const VectorXd& z, std::span<double> dblock) {
  double logp = 0.0;
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  for (int j = 0; j < n; ++j) {
    double mean = block[j], raw = block[n + j];
    double ls = ls_clamp(raw);
    double std_ = std::exp(ls);
    double d = (z[j] - mean) / std_;
    logp += -0.5 * d * d - ls - kLogSqrt2Pi;
    logp -= log_tanh_jacobian(z[j]);
    if (!dblock.empty()) {
      dblock[j] += d / std_;
      dblock[n + j] += (d * d - 1.0) * ls_clamp_deriv(raw);
    }
  }
  return logp;
}

double gaussian_block_kl(std::span<const double> old_, std::span<const double> new_,
                         int n, std::span<double> dnew) {
  double kl = 0.0;
  for (int j = 0; j < n; ++j) {
    double m1 = old_[j], ls1 = ls_clamp(old_[n + j]);
    double m2 = new_[j], ls2 = ls_clamp(new_[n + j]);
    double v1 = std::exp(2.0 * ls1), v2 = std::exp(2.0 * ls2);
    double dm = m1 - m2;
    kl += ls2 - ls1 + (v1 + dm * dm) / (2.0 * v2) - 0.5;
    if (!dnew.empty()) {
      dnew[j] += (m2 - m1) / v2;
      dnew[n + j] += (1.0 - (v1 + dm * dm) / v2) * ls_clamp_deriv(new_[n + j]);
    }
  }
  return kl;
}

double gaussian_block_entropy(std::span<const double> block, int n) {
  double ent = 0.0;
  for (int j = 0; j < n; ++j)
    ent += ls_clamp(block[n + j]) + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return ent;
}

void softmax_into(std::span<const double> logits, std::vector<double>& out) {
  out.resize(logits.size());
  double lse = logsumexp(logits);
  for (size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
}

}  // namespace

ActionSample sample_action(const HeadLayout& hl, std::span<const double> out,
                           Rng& rng, bool deterministic) {
  if (int(out.size()) != hl.net_out())
    throw SizeMismatch("head row has wrong width");
  ActionSample a;
  int off = 0;
  if (hl.major == HeadKind::kCategorical) {
    std::vector<double> probs;
    softmax_into(out.subspan(0, hl.major_n), probs);
    a.major_cat = deterministic ? argmax(probs) : rng.categorical(probs);
    off = hl.major_n;
  } else if (hl.major == HeadKind::kGaussian) {
    sample_gaussian_block(out.subspan(0, 2 * hl.major_n), hl.major_n, rng,
                          deterministic, a.z_major);
    off = 2 * hl.major_n;
  }
  sample_gaussian_block(out.subspan(off, 2 * hl.xi_dim), hl.xi_dim, rng,
                        deterministic, a.z_xi);
  a.logp = action_logprob(hl, out, a);
  return a;
}

double action_logprob(const HeadLayout& hl, std::span<const double> out,
                      const ActionSample& a, std::span<double> dout) {
  if (int(out.size()) != hl.net_out())
    throw SizeMismatch("head row has wrong width");
  if (!dout.empty()) {
    if (dout.size() != out.size()) throw SizeMismatch("dout width");
    std::fill(dout.begin(), dout.end(), 0.0);
  }
  double logp = 0.0;
  int off = 0;
  if (hl.major == HeadKind::kCategorical) {
    auto logits = out.subspan(0, hl.major_n);
    double lse = logsumexp(logits);
    logp += logits[a.major_cat] - lse;
    if (!dout.empty()) {
      for (int i = 0; i < hl.major_n; ++i)
        dout[i] = (i == a.major_cat ? 1.0 : 0.0) - std::exp(logits[i] - lse);
    }
    off = hl.major_n;
  } else if (hl.major == HeadKind::kGaussian) {
    logp += gaussian_block_logprob(
        out.subspan(0, 2 * hl.major_n), hl.major_n, a.z_major,
        dout.empty() ? std::span<double>{} : dout.subspan(0, 2 * hl.major_n));
    off = 2 * hl.major_n;
  }
  logp += gaussian_block_logprob(
      out.subspan(off, 2 * hl.xi_dim), hl.xi_dim, a.z_xi,
      dout.empty() ? std::span<double>{} : dout.subspan(off, 2 * hl.xi_dim));
  return logp;
}

double head_kl(const HeadLayout& hl, std::span<const double> out_old,
               std::span<const double> out_new, std::span<double> dnew) {
  if (out_old.size() != out_new.size() || int(out_new.size()) != hl.net_out())
    throw SizeMismatch("head rows have wrong width");
  if (!dnew.empty()) {
    if (dnew.size() != out_new.size()) throw SizeMismatch("dnew width");
    std::fill(dnew.begin(), dnew.end(), 0.0);
  }
  double kl = 0.0;
  int off = 0;
  if (hl.major == HeadKind::kCategorical) {
    std::vector<double> p_old, p_new;
    softmax_into(out_old.subspan(0, hl.major_n), p_old);
    softmax_into(out_new.subspan(0, hl.major_n), p_new);
    for (int i = 0; i < hl.major_n; ++i)
      kl += p_old[i] * (std::log(p_old[i]) - std::log(p_new[i]));
    if (!dnew.empty())
      for (int i = 0; i < hl.major_n; ++i) dnew[i] = p_new[i] - p_old[i];
    off = hl.major_n;
  } else if (hl.major == HeadKind::kGaussian) {
    kl += gaussian_block_kl(
        out_old.subspan(0, 2 * hl.major_n), out_new.subspan(0, 2 * hl.major_n),
        hl.major_n,
        dnew.empty() ? std::span<double>{} : dnew.subspan(0, 2 * hl.major_n));
    off = 2 * hl.major_n;
  }
  kl += gaussian_block_kl(
      out_old.subspan(off, 2 * hl.xi_dim), out_new.subspan(off, 2 * hl.xi_dim),
      hl.xi_dim,
      dnew.empty() ? std::span<double>{} : dnew.subspan(off, 2 * hl.xi_dim));
  return kl;
}

double head_entropy(const HeadLayout& hl, std::span<const double> out) {
  double ent = 0.0;
  int off = 0;
  if (hl.major == HeadKind::kCategorical) {
    std::vector<double> p;
    softmax_into(out.subspan(0, hl.major_n), p);
    for (double q : p) ent -= q * std::log(q);
    off = hl.major_n;
  } else if (hl.major == HeadKind::kGaussian) {
    ent += gaussian_block_entropy(out.subspan(0, 2 * hl.major_n), hl.major_n);
    off = 2 * hl.major_n;
  }
  ent += gaussian_block_entropy(out.subspan(off, 2 * hl.xi_dim), hl.xi_dim);
  return ent;
}

std::vector<double> major_action_of(const HeadLayout& hl,
                                    const ActionSample& a) {
  switch (hl.major) {
    case HeadKind::kNone: return {};
    case HeadKind::kCategorical: return {double(a.major_cat)};
    case HeadKind::kGaussian: {
      std::vector<double> u(hl.major_n);
      for (int j = 0; j < hl.major_n; ++j) u[j] = std::tanh(a.z_major[j]);
      return u;
    }
  }
  return {};
}

MatrixXd decode_finite(std::span<const double> xi, int n_states,
                       int n_actions) {
  if (int(xi.size()) != n_states * n_actions)
    throw SizeMismatch("xi length is not |X| * |U|");
  MatrixXd probs(n_states, n_actions);
  for (int x = 0; x < n_states; ++x) {
    double row_sum = 0.0;
    for (int u = 0; u < n_actions; ++u) {
      double w = xi[size_t(x) * n_actions + u] + 1.0 + kXiEps;
      probs(x, u) = w;
      row_sum += w;
    }
    for (int u = 0; u < n_actions; ++u) probs(x, u) /= row_sum;
  }
  return probs;
}

BinGaussians decode_continuous(std::span<const double> xi, int bins,
                               int act_dim) {
  if (int(xi.size()) != bins * 2 * act_dim)
    throw SizeMismatch("xi length is not M * 2d");
  BinGaussians g;
  g.mean.resize(bins, act_dim);
  g.stddev.resize(bins, act_dim);
  for (int m = 0; m < bins; ++m) {
    const double* row = xi.data() + size_t(m) * 2 * act_dim;
    for (int j = 0; j < act_dim; ++j) {
      g.mean(m, j) = row[j];
      g.stddev(m, j) = kXiEps + 0.25 * (row[act_dim + j] + 1.0) / 2.0;
    }
  }
  return g;
}

DecisionRule decode_rule(const EnvSpec& spec, std::span<const double> xi) {
  DecisionRule r;
  if (spec.minor_finite) {
    r.finite = true;
    r.probs = decode_finite(xi, spec.minor_states, spec.minor_actions);
  } else {
    r.finite = false;
    r.bins = decode_continuous(xi, spec.obs_grid.n_cells(), spec.minor_act_dim);
  }
  return r;
}

void sample_minor_action(const Env& env, const DecisionRule& rule,
                         const double* minor, Rng& rng, double* act_out,
                         bool deterministic) {
  const EnvSpec& spec = env.spec();
  if (rule.finite) {
    int x = env.minor_state_index(minor);
    std::vector<double> row(spec.minor_actions);
    for (int u = 0; u < spec.minor_actions; ++u) row[u] = rule.probs(x, u);
    act_out[0] = deterministic ? argmax(row) : rng.categorical(row);
  } else {
    int bin = spec.obs_grid.cell_index(minor);
    for (int j = 0; j < spec.minor_act_dim; ++j) {
      double a = rule.bins.mean(bin, j);
      if (!deterministic) a += rule.bins.stddev(bin, j) * rng.normal();
      act_out[j] = std::clamp(a, -1.0, 1.0);
    }
  }
}

Policy::Policy(const EnvSpec& spec, std::vector<int> hidden)
    : heads_(head_layout(spec)),
      obs_dim_(m3fc::obs_dim(spec)),
      pi_(MlpSpec{obs_dim_, hidden, heads_.net_out()}),
      v_(MlpSpec{obs_dim_, hidden, 1}) {
  params.assign(size_t(pi_.n_params()) + v_.n_params(), 0.0);
}

void Policy::init(Rng rng) {
  Rng pr = rng.fork(1), vr = rng.fork(2);
  pi_.init_params(params.data(), pr, 0.01);
  v_.init_params(params.data() + pi_.n_params(), vr, 1.0);
}

VectorXd Policy::head_row(const VectorXd& obs) const {
  Eigen::MatrixXd x = obs.transpose();
  return pi_.forward(pi_params(), x).row(0);
}

double Policy::value(const VectorXd& obs) const {
  Eigen::MatrixXd x = obs.transpose();
  return v_.forward(v_params(), x)(0, 0);
}

}  // namespace m3fc
