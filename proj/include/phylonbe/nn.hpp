#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phylonbe/rng.hpp"

namespace phylonbe {

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error("dimension mismatch: " + what) {}
};

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
  const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
  double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
};

struct DenseLayer {
  Matrix w;
  std::vector<double> b;
};

// Plain MLP: affine -> ELU on every hidden layer, final layer affine. Output
// activations (softplus on the R_eff channel) are applied by callers.
struct DenseNet {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
  std::vector<int> dims() const;
};

DenseNet make_mlp(int input_dim, int hidden_width, int hidden_depth, int output_dim);

// PyTorch's nn.Linear default: weights and biases uniform on
// (-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_default(DenseNet& net, RngStream& rng);

DenseNet zeros_like(const DenseNet& net);
std::size_t param_count(const DenseNet& net);

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
inline double elu_grad_from_output(double y) { return y >= 0.0 ? 1.0 : y + 1.0; }

// log(1 + e^x), stable for large |x|. Floored at the smallest positive
// double so the positivity contract survives underflow of e^x.
inline double softplus(double x) {
  const double y = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return y > 0.0 ? y : std::numeric_limits<double>::denorm_min();
}
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
// Inverse of softplus on (0, inf).
inline double softplus_inv(double y) {
  return y > 20.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

void affine_forward(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y);

// Inverted dropout: zeroed units are dropped, survivors scale by 1/keep.
// One mask per hidden layer.
struct DropoutPlan {
  double keep = 1.0;
  std::vector<std::vector<std::uint8_t>> masks;
};

DropoutPlan sample_dropout(const DenseNet& net, double rate, RngStream& rng);

// Inference forward when dropout == nullptr; training forward otherwise.
std::vector<double> forward(const DenseNet& net, std::span<const double> x,
                            const DropoutPlan* dropout = nullptr);

// Tilted absolute loss: tau * (y - yhat) when y >= yhat, (1 - tau) * (yhat - y)
// otherwise. The subgradient at y == yhat is taken as 0.
double pinball_loss(double tau, double predicted, double observed);
double pinball_grad(double tau, double predicted, double observed);

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Per-parameter first/second moment estimates, congruent with the net they
// optimize.
struct OptimizerState {
  DenseNet m;
  DenseNet v;
  long step = 0;
  AdamWConfig hp;
};

OptimizerState make_optimizer(const DenseNet& params, const AdamWConfig& hp);

// Decoupled weight decay applied directly to the parameters, then the
// bias-corrected Adam update.
void adamw_step(DenseNet& params, const DenseNet& grads, OptimizerState& state);

// Scalar core of the update, exposed for hand-checked tests.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, long step, const AdamWConfig& hp);

}  // namespace phylonbe
