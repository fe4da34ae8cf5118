#include "m3fc/nn.hpp"

#include <cmath>
#include <numbers>

namespace m3fc {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.in <= 0 || spec_.out <= 0)
    throw InvalidArgument("mlp needs positive input/output dims");
  dims_.push_back(spec_.in);
  for (int h : spec_.hidden) {
    if (h <= 0) throw InvalidArgument("mlp hidden width must be positive");
    dims_.push_back(h);
  }
  dims_.push_back(spec_.out);
  int off = 0;
  for (size_t l = 0; l + 1 < dims_.size(); ++l) {
    w_off_.push_back(off);
    off += dims_[l + 1] * dims_[l];
    b_off_.push_back(off);
    off += dims_[l + 1];
  }
  n_params_ = off;
}

void Mlp::init_params(double* params, Rng& rng, double final_scale) const {
  size_t layers = dims_.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    int fan_in = dims_[l], fan_out = dims_[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    if (l + 1 == layers) bound *= final_scale;
    double* w = params + w_off_[l];
    for (int i = 0; i < fan_out * fan_in; ++i) w[i] = rng.uniform(-bound, bound);
    double* b = params + b_off_[l];
    for (int i = 0; i < fan_out; ++i) b[i] = 0.0;
  }
}

MatrixXd Mlp::forward(const double* params, const MatrixXd& X,
                      MlpTape* tape) const {
  if (X.cols() != spec_.in)
    throw SizeMismatch("mlp fed " + std::to_string(X.cols()) +
                       " columns, expects " + std::to_string(spec_.in));
  if (tape) {
    tape->input = X;
    tape->act.clear();
  }
  size_t layers = dims_.size() - 1;
  MatrixXd a = X;
  for (size_t l = 0; l < layers; ++l) {
    Map<const MatrixXd> w(params + w_off_[l], dims_[l + 1], dims_[l]);
    Map<const VectorXd> b(params + b_off_[l], dims_[l + 1]);
    MatrixXd z = a * w.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 < layers) {
      a = z.array().tanh();
      if (tape) tape->act.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

void Mlp::backward(const double* params, const MlpTape& tape,
                   const MatrixXd& dY, double* grad) const {
  size_t layers = dims_.size() - 1;
  if (tape.act.size() != layers - 1)
    throw SizeMismatch("tape does not match this mlp");
  MatrixXd dz = dY;
  for (size_t l = layers; l-- > 0;) {
    const MatrixXd& a_prev = l == 0 ? tape.input : tape.act[l - 1];
    Map<MatrixXd> dw(grad + w_off_[l], dims_[l + 1], dims_[l]);
    Map<VectorXd> db(grad + b_off_[l], dims_[l + 1]);
    dw.noalias() += dz.transpose() * a_prev;
    db += dz.colwise().sum().transpose();
    if (l > 0) {
      Map<const MatrixXd> w(params + w_off_[l], dims_[l + 1], dims_[l]);
      MatrixXd da = dz * w;
      dz = da.array() * (1.0 - a_prev.array().square());
    }
  }
}

Adam::Adam(int n, double lr) : lr_(lr), n_(n), m_(n, 0.0), v_(n, 0.0) {
  if (n <= 0) throw InvalidArgument("adam over an empty parameter array");
}

void Adam::step(double* params, const double* grad) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++steps_;
  double c1 = 1.0 - std::pow(beta1, double(steps_));
  double c2 = 1.0 - std::pow(beta2, double(steps_));
  for (int i = 0; i < n_; ++i) {
    double g = grad[i];
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * g * g;
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
  }
}

double gaussian_logprob(std::span<const double> mean,
                        std::span<const double> stddev,
                        std::span<const double> x) {
  return gaussian_logprob_grad(mean, stddev, x, {}, {});
}

double gaussian_logprob_grad(std::span<const double> mean,
                             std::span<const double> stddev,
                             std::span<const double> x,
                             std::span<double> dmean, std::span<double> dstd) {
  if (mean.size() != stddev.size() || mean.size() != x.size())
    throw SizeMismatch("gaussian dims disagree");
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln sqrt(2 pi)
  double logp = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    double s = stddev[i];
    double z = (x[i] - mean[i]) / s;
    logp += -0.5 * z * z - std::log(s) - kLogSqrt2Pi;
    if (!dmean.empty()) dmean[i] = z / s;
    if (!dstd.empty()) dstd[i] = (z * z - 1.0) / s;
  }
  return logp;
}

}  // namespace m3fc
