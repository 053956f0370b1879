#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "phylonbe/nn.hpp"

namespace phylonbe {

// Records primitive vector operations during a forward pass and replays them
// in reverse for exact gradient accumulation. Parameter gradients are added
// into caller-owned DenseLayer sinks, so a layer applied many times in one
// pass (the shared recursive embedding network) accumulates naturally.
//
// A tape is built, differentiated and reset per loss evaluation; reset keeps
// the allocated storage for reuse.
class GradTape {
 public:
  int input(std::span<const double> v);
  int input(std::initializer_list<double> v) { return input(std::span<const double>(v.begin(), v.size())); }

  // y = W x + b. grad_sink may be null when the layer is frozen.
  int affine(const DenseLayer& layer, DenseLayer* grad_sink, int x);

  int elu(int x);

  // softplus applied to one entry, identity on the rest.
  int softplus_at(int x, int index);

  // Inverted dropout with a fixed 0/1 mask.
  int dropout(int x, std::vector<std::uint8_t> mask, double keep);

  int concat(std::span<const int> parts);
  int concat(std::initializer_list<int> parts) { return concat(std::span<const int>(parts.begin(), parts.size())); }

  // Scalar: sum over the three channels of the pinball loss at tau.
  int pinball3(int pred, const std::array<double, 3>& observed, double tau);

  // Scalar: sum of scalar slots.
  int sum(std::span<const int> scalars);

  const std::vector<double>& value(int id) const { return values_[static_cast<std::size_t>(id)]; }
  double scalar(int id) const { return values_[static_cast<std::size_t>(id)][0]; }

  // Reverse sweep seeding d(output)/d(output) = seed; fills every grad sink.
  void backward(int id, double seed = 1.0);

  void reset();

 private:
  enum class OpKind : std::uint8_t { input, affine, elu, softplus_at, dropout, concat, pinball3, sum };

  struct Op {
    OpKind kind;
    int out = -1;
    int a = -1;
    int index = -1;
    double tau = 0.0;
    double keep = 1.0;
    const DenseLayer* layer = nullptr;
    DenseLayer* sink = nullptr;
    std::array<double, 3> observed{};
    std::vector<std::uint8_t> mask;
    std::vector<int> list;
  };

  int new_slot(std::size_t size);

  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> grads_;
  std::size_t active_ = 0;
  std::vector<Op> ops_;
};

// Forward pass of a whole MLP on the tape: affine -> ELU (-> dropout when
// rng != nullptr) per hidden layer, final affine. Fresh dropout masks are
// drawn per call.
int tape_mlp(GradTape& tape, const DenseNet& net, DenseNet* grad_sink, int x, double dropout_rate,
             RngStream* rng);

}  // namespace phylonbe
