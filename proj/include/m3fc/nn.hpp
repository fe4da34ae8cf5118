#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "m3fc/errors.hpp"
#include "m3fc/rng.hpp"

namespace m3fc {

// Fully connected net, tanh hidden layers, linear output. Parameters live in
// one flat double array so optimizers and checkpoints can treat them opaquely.
struct MlpSpec {
  int in = 0;
  std::vector<int> hidden = {256, 256};
  int out = 0;

  bool operator==(const MlpSpec&) const = default;
};

struct MlpTape {
  Eigen::MatrixXd input;                // B x in
  std::vector<Eigen::MatrixXd> act;     // post-tanh hidden activations
};

class Mlp {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  int n_params() const { return n_params_; }

  // Xavier-uniform weights, zero biases; the output layer is additionally
  // scaled by final_scale (policy nets start near-uniform with 0.01).
  void init_params(double* params, Rng& rng, double final_scale = 1.0) const;

  // X has one row per sample. Fills `tape` if given.
  Eigen::MatrixXd forward(const double* params, const Eigen::MatrixXd& X,
                          MlpTape* tape = nullptr) const;

  // Reverse pass for a scalar loss with output gradient dY (same shape as the
  // forward result). Accumulates into `grad` (not zeroed here).
  void backward(const double* params, const MlpTape& tape,
                const Eigen::MatrixXd& dY, double* grad) const;

 private:
  MlpSpec spec_;
  std::vector<int> dims_;                // [in, hidden..., out]
  std::vector<int> w_off_, b_off_;       // per-layer offsets into the flat array
  int n_params_ = 0;
};

// One Adam optimizer over a flat parameter array, bias-corrected by step
// count. beta1 0.9, beta2 0.999, eps 1e-8.
class Adam {
 public:
  Adam(int n, double lr);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t steps() const { return steps_; }

  void step(double* params, const double* grad);

 private:
  double lr_;
  int n_;
  int64_t steps_ = 0;
  std::vector<double> m_, v_;
};

// Diagonal gaussian log density at x, and its gradient with respect to the
// mean and the std. Grad spans may be empty when only the value is wanted.
double gaussian_logprob(std::span<const double> mean,
                        std::span<const double> stddev,
                        std::span<const double> x);
double gaussian_logprob_grad(std::span<const double> mean,
                             std::span<const double> stddev,
                             std::span<const double> x,
                             std::span<double> dmean, std::span<double> dstd);

}  // namespace m3fc
