#include "phylonbe/tape.hpp"

namespace phylonbe {

// new_slot may grow values_/grads_; ops therefore allocate their output slot
// before taking references into the storage.

int GradTape::new_slot(std::size_t size) {
  if (active_ == values_.size()) {
    values_.emplace_back();
    grads_.emplace_back();
  }
  values_[active_].assign(size, 0.0);
  grads_[active_].assign(size, 0.0);
  return static_cast<int>(active_++);
}

int GradTape::input(std::span<const double> v) {
  const int id = new_slot(v.size());
  std::copy(v.begin(), v.end(), values_[static_cast<std::size_t>(id)].begin());
  ops_.push_back(Op{OpKind::input, id});
  return id;
}

int GradTape::affine(const DenseLayer& layer, DenseLayer* grad_sink, int x) {
  if (static_cast<int>(values_[static_cast<std::size_t>(x)].size()) != layer.w.cols) {
    throw DimensionMismatch("tape affine expects " + std::to_string(layer.w.cols) +
                            " inputs, got " +
                            std::to_string(values_[static_cast<std::size_t>(x)].size()));
  }
  const int id = new_slot(layer.b.size());
  const auto& in = values_[static_cast<std::size_t>(x)];
  auto& out = values_[static_cast<std::size_t>(id)];
  for (int i = 0; i < layer.w.rows; ++i) {
    const double* row = layer.w.row(i);
    double acc = layer.b[static_cast<std::size_t>(i)];
    for (int j = 0; j < layer.w.cols; ++j) acc += row[j] * in[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  Op op{OpKind::affine, id, x};
  op.layer = &layer;
  op.sink = grad_sink;
  ops_.push_back(std::move(op));
  return id;
}

int GradTape::elu(int x) {
  const int id = new_slot(values_[static_cast<std::size_t>(x)].size());
  const auto& in = values_[static_cast<std::size_t>(x)];
  auto& out = values_[static_cast<std::size_t>(id)];
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = phylonbe::elu(in[i]);
  ops_.push_back(Op{OpKind::elu, id, x});
  return id;
}

int GradTape::softplus_at(int x, int index) {
  const int id = new_slot(values_[static_cast<std::size_t>(x)].size());
  const auto& in = values_[static_cast<std::size_t>(x)];
  auto& out = values_[static_cast<std::size_t>(id)];
  std::copy(in.begin(), in.end(), out.begin());
  out[static_cast<std::size_t>(index)] = softplus(in[static_cast<std::size_t>(index)]);
  Op op{OpKind::softplus_at, id, x};
  op.index = index;
  ops_.push_back(std::move(op));
  return id;
}

int GradTape::dropout(int x, std::vector<std::uint8_t> mask, double keep) {
  const int id = new_slot(values_[static_cast<std::size_t>(x)].size());
  const auto& in = values_[static_cast<std::size_t>(x)];
  auto& out = values_[static_cast<std::size_t>(id)];
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = mask[i] ? in[i] / keep : 0.0;
  Op op{OpKind::dropout, id, x};
  op.keep = keep;
  op.mask = std::move(mask);
  ops_.push_back(std::move(op));
  return id;
}

int GradTape::concat(std::span<const int> parts) {
  std::size_t total = 0;
  for (int p : parts) total += values_[static_cast<std::size_t>(p)].size();
  const int id = new_slot(total);
  auto& out = values_[static_cast<std::size_t>(id)];
  std::size_t offset = 0;
  for (int p : parts) {
    const auto& v = values_[static_cast<std::size_t>(p)];
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  Op op{OpKind::concat, id};
  op.list.assign(parts.begin(), parts.end());
  ops_.push_back(std::move(op));
  return id;
}

int GradTape::pinball3(int pred, const std::array<double, 3>& observed, double tau) {
  if (values_[static_cast<std::size_t>(pred)].size() != 3) {
    throw DimensionMismatch("pinball3 expects a 3-channel prediction");
  }
  const int id = new_slot(1);
  const auto& p = values_[static_cast<std::size_t>(pred)];
  double loss = 0.0;
  for (int k = 0; k < 3; ++k) {
    loss += pinball_loss(tau, p[static_cast<std::size_t>(k)], observed[static_cast<std::size_t>(k)]);
  }
  values_[static_cast<std::size_t>(id)][0] = loss;
  Op op{OpKind::pinball3, id, pred};
  op.tau = tau;
  op.observed = observed;
  ops_.push_back(std::move(op));
  return id;
}

int GradTape::sum(std::span<const int> scalars) {
  const int id = new_slot(1);
  double acc = 0.0;
  for (int s : scalars) acc += values_[static_cast<std::size_t>(s)][0];
  values_[static_cast<std::size_t>(id)][0] = acc;
  Op op{OpKind::sum, id};
  op.list.assign(scalars.begin(), scalars.end());
  ops_.push_back(std::move(op));
  return id;
}

void GradTape::backward(int id, double seed) {
  grads_[static_cast<std::size_t>(id)][0] += seed;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Op& op = *it;
    const auto& gout = grads_[static_cast<std::size_t>(op.out)];
    switch (op.kind) {
      case OpKind::input:
        break;
      case OpKind::affine: {
        const auto& in = values_[static_cast<std::size_t>(op.a)];
        auto& gin = grads_[static_cast<std::size_t>(op.a)];
        const auto& w = op.layer->w;
        for (int i = 0; i < w.rows; ++i) {
          const double g = gout[static_cast<std::size_t>(i)];
          if (g == 0.0) continue;
          const double* row = w.row(i);
          for (int j = 0; j < w.cols; ++j) gin[static_cast<std::size_t>(j)] += g * row[j];
          if (op.sink != nullptr) {
            double* grow = op.sink->w.row(i);
            for (int j = 0; j < w.cols; ++j) grow[j] += g * in[static_cast<std::size_t>(j)];
            op.sink->b[static_cast<std::size_t>(i)] += g;
          }
        }
        break;
      }
      case OpKind::elu: {
        const auto& out = values_[static_cast<std::size_t>(op.out)];
        auto& gin = grads_[static_cast<std::size_t>(op.a)];
        for (std::size_t i = 0; i < out.size(); ++i) {
          gin[i] += gout[i] * elu_grad_from_output(out[i]);
        }
        break;
      }
      case OpKind::softplus_at: {
        const auto& in = values_[static_cast<std::size_t>(op.a)];
        auto& gin = grads_[static_cast<std::size_t>(op.a)];
        for (std::size_t i = 0; i < in.size(); ++i) {
          const double factor = static_cast<int>(i) == op.index ? sigmoid(in[i]) : 1.0;
          gin[i] += gout[i] * factor;
        }
        break;
      }
      case OpKind::dropout: {
        auto& gin = grads_[static_cast<std::size_t>(op.a)];
        for (std::size_t i = 0; i < gin.size(); ++i) {
          if (op.mask[i]) gin[i] += gout[i] / op.keep;
        }
        break;
      }
      case OpKind::concat: {
        std::size_t offset = 0;
        for (int p : op.list) {
          auto& gin = grads_[static_cast<std::size_t>(p)];
          for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[offset + i];
          offset += gin.size();
        }
        break;
      }
      case OpKind::pinball3: {
        const auto& pred = values_[static_cast<std::size_t>(op.a)];
        auto& gin = grads_[static_cast<std::size_t>(op.a)];
        for (std::size_t k = 0; k < 3; ++k) {
          gin[k] += gout[0] * pinball_grad(op.tau, pred[k], op.observed[k]);
        }
        break;
      }
      case OpKind::sum: {
        for (int s : op.list) grads_[static_cast<std::size_t>(s)][0] += gout[0];
        break;
      }
    }
  }
}

void GradTape::reset() {
  active_ = 0;
  ops_.clear();
}

int tape_mlp(GradTape& tape, const DenseNet& net, DenseNet* grad_sink, int x, double dropout_rate,
             RngStream* rng) {
  int cur = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer* sink = grad_sink != nullptr ? &grad_sink->layers[l] : nullptr;
    cur = tape.affine(net.layers[l], sink, cur);
    if (l + 1 < net.layers.size()) {
      cur = tape.elu(cur);
      if (rng != nullptr && dropout_rate > 0.0) {
        std::vector<std::uint8_t> mask(net.layers[l].b.size());
        for (auto& keep : mask) keep = rng->uniform01() >= dropout_rate ? 1 : 0;
        cur = tape.dropout(cur, std::move(mask), 1.0 - dropout_rate);
      }
    }
  }
  return cur;
}

}  // namespace phylonbe
