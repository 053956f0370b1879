#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phylonbe/model.hpp"
#include "phylonbe/sim.hpp"

namespace phylonbe {

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what) : std::runtime_error("non-finite loss: " + what) {}
};

enum class TrainMode { full, prediction_unit_only };

struct TrainConfig {
  int batch_size = 32;        // I
  int epochs = 250;
  double tau_beta_a = 0.5;    // tau_i ~ Beta(0.5, 0.5)
  double tau_beta_b = 0.5;
  bool tau_per_batch = false; // one tau for the whole batch instead of one per record
  AdamWConfig adamw;
  double dropout_rate = 0.1;
  TrainMode mode = TrainMode::full;
  std::uint64_t seed = 0;
  std::vector<double> val_tau_grid{0.05, 0.25, 0.5, 0.75, 0.95};
  int threads = 1;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  NbeModel model;  // parameters from the epoch with the lowest validation loss
  std::vector<EpochStats> curves;
  int best_epoch = 0;  // 1-based
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
};

// AdamW quantile-regression training with early stopping on a fixed
// validation tau grid. For fresh (full-mode) training the prediction net's
// final layer starts with zero weights and bias equal to the per-channel
// training-target mean (softplus inverted on the R_eff channel). In
// prediction_unit_only mode the embedding network is frozen and the
// pretrained prediction unit is continued as-is; embeddings are computed
// once in inference mode and cached across epochs.
TrainResult train(NbeModel model, const std::vector<SimRecord>& train_data,
                  const std::vector<SimRecord>& val_data, const TrainConfig& config);

// Delegates to train with mode = prediction_unit_only.
TrainResult fine_tune(NbeModel pretrained, const std::vector<SimRecord>& alt_train,
                      const std::vector<SimRecord>& alt_val, TrainConfig config);

// Mean pinball loss over records x measurements x tau grid, inference mode.
double validation_loss(const NbeModel& model, const std::vector<SimRecord>& data,
                       std::span<const double> tau_grid, int threads);

}  // namespace phylonbe
