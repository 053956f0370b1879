#include "phylonbe/nn.hpp"

namespace phylonbe {

std::vector<int> DenseNet::dims() const {
  std::vector<int> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().w.cols);
  for (const auto& layer : layers) d.push_back(layer.w.rows);
  return d;
}

DenseNet make_mlp(int input_dim, int hidden_width, int hidden_depth, int output_dim) {
  DenseNet net;
  int in = input_dim;
  for (int i = 0; i < hidden_depth; ++i) {
    net.layers.push_back(DenseLayer{Matrix(hidden_width, in), std::vector<double>(hidden_width, 0.0)});
    in = hidden_width;
  }
  net.layers.push_back(DenseLayer{Matrix(output_dim, in), std::vector<double>(output_dim, 0.0)});
  return net;
}

void init_default(DenseNet& net, RngStream& rng) {
  for (auto& layer : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.cols));
    for (auto& w : layer.w.a) w = rng.uniform(-bound, bound);
    for (auto& b : layer.b) b = rng.uniform(-bound, bound);
  }
}

DenseNet zeros_like(const DenseNet& net) {
  DenseNet out;
  out.layers.reserve(net.layers.size());
  for (const auto& layer : net.layers) {
    out.layers.push_back(DenseLayer{Matrix(layer.w.rows, layer.w.cols),
                                    std::vector<double>(layer.b.size(), 0.0)});
  }
  return out;
}

std::size_t param_count(const DenseNet& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers) n += layer.w.a.size() + layer.b.size();
  return n;
}

void affine_forward(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y) {
  if (static_cast<int>(x.size()) != layer.w.cols) {
    throw DimensionMismatch("affine expects " + std::to_string(layer.w.cols) + " inputs, got " +
                            std::to_string(x.size()));
  }
  y.resize(layer.b.size());
  for (int i = 0; i < layer.w.rows; ++i) {
    const double* row = layer.w.row(i);
    double acc = layer.b[static_cast<std::size_t>(i)];
    for (int j = 0; j < layer.w.cols; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = acc;
  }
}

DropoutPlan sample_dropout(const DenseNet& net, double rate, RngStream& rng) {
  DropoutPlan plan;
  plan.keep = 1.0 - rate;
  const std::size_t hidden = net.layers.empty() ? 0 : net.layers.size() - 1;
  plan.masks.resize(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    plan.masks[l].resize(net.layers[l].b.size());
    for (auto& keep : plan.masks[l]) keep = rng.uniform01() >= rate ? 1 : 0;
  }
  return plan;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> x,
                            const DropoutPlan* dropout) {
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    affine_forward(net.layers[l], cur, next);
    if (l + 1 < net.layers.size()) {
      for (auto& v : next) v = elu(v);
      if (dropout != nullptr) {
        const auto& mask = dropout->masks.at(l);
        for (std::size_t i = 0; i < next.size(); ++i) {
          next[i] = mask[i] ? next[i] / dropout->keep : 0.0;
        }
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

double pinball_loss(double tau, double predicted, double observed) {
  return observed >= predicted ? tau * (observed - predicted)
                               : (1.0 - tau) * (predicted - observed);
}

double pinball_grad(double tau, double predicted, double observed) {
  if (observed > predicted) return -tau;
  if (observed < predicted) return 1.0 - tau;
  return 0.0;
}

OptimizerState make_optimizer(const DenseNet& params, const AdamWConfig& hp) {
  return OptimizerState{zeros_like(params), zeros_like(params), 0, hp};
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, long step, const AdamWConfig& hp) {
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= hp.learning_rate * hp.weight_decay * params[i];
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grads[i];
    v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

void adamw_step(DenseNet& params, const DenseNet& grads, OptimizerState& state) {
  if (params.layers.size() != grads.layers.size()) {
    throw DimensionMismatch("optimizer: layer count");
  }
  ++state.step;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    auto& m = state.m.layers[l];
    auto& v = state.v.layers[l];
    if (p.w.a.size() != g.w.a.size() || p.b.size() != g.b.size()) {
      throw DimensionMismatch("optimizer: layer " + std::to_string(l));
    }
    adamw_update(p.w.a, g.w.a, m.w.a, v.w.a, state.step, state.hp);
    adamw_update(p.b, g.b, m.b, v.b, state.step, state.hp);
  }
}

}  // namespace phylonbe
