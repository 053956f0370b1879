#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phylonbe/nn.hpp"
#include "phylonbe/sim.hpp"
#include "phylonbe/tape.hpp"
#include "phylonbe/tree.hpp"

namespace phylonbe {

// Output channels, in fixed order everywhere: the reproduction number, the
// common log of prevalence, and the common log of cumulative incidence.
inline constexpr std::array<const char*, 3> kChannelNames{"reff", "log10_prev", "log10_cum"};

struct BtuConfig {
  int embedding_dim = 50;  // n
  int hidden_depth = 2;
  int hidden_width = 64;
};

struct PredConfig {
  int hidden_depth = 3;
  int hidden_width = 128;
};

// The estimator: a recursive embedding network g folding a tree into R^n and
// a prediction network h mapping [embedding, height, scaled 1/sigma, scaled
// t, tau] to the three quantile channels.
struct NbeModel {
  BtuConfig btu_config;
  PredConfig pred_config;
  DenseNet btu;   // g: R^(2n+2) -> R^n
  DenseNet pred;  // h: R^(n+4) -> R^3
  std::array<double, 3> target_means{0.0, 0.0, 0.0};
};

NbeModel make_model(const BtuConfig& btu_config, const PredConfig& pred_config, RngStream& rng);

struct QuantileQuery {
  double t = 0.0;
  double tau = 0.5;
};

struct QuantileEstimate {
  double q_reff = 0.0;       // > 0 (softplus-enforced)
  double q_log10_prev = 0.0;
  double q_log10_cum = 0.0;
};

// Post-order fold of the tree into R^n. Depths and branch lengths enter as
// ratios to the tree height, so the embedding is invariant to rescaling the
// tree. A single leaf embeds to the zero vector; any other zero-height tree
// throws DegenerateTree.
std::vector<double> btu_embed(const NbeModel& model, const ReconTree& tree);

QuantileEstimate predict(const NbeModel& model, const ReconTree& tree, double sigma_inv, double t,
                         double tau);

// Same as predict with the embedding (and height) already computed.
QuantileEstimate predict_with_embedding(const NbeModel& model, std::span<const double> embedding,
                                        double tree_height, double sigma_inv, double t, double tau);

// Cartesian grid, row-major over times x taus.
std::vector<QuantileEstimate> trajectory(const NbeModel& model, const ReconTree& tree,
                                         double sigma_inv, std::span<const double> times,
                                         std::span<const double> taus);

struct ModelGrads {
  DenseNet btu;
  DenseNet pred;
};

ModelGrads zero_grads(const NbeModel& model);

// Tape-backed training pass for one record: embeds the tree once, evaluates
// each measurement at this record's tau, and returns the sum over
// measurements and channels of the pinball loss. When grads != nullptr,
// grad_scale * d(record loss)/d(theta) is accumulated into it; train_btu ==
// false freezes the embedding network. cached_embedding, when given, skips
// the tree fold entirely (frozen-embedding fine-tuning).
double record_loss(const NbeModel& model, const SimRecord& record, double tau, double dropout_rate,
                   RngStream* dropout_rng, double grad_scale, ModelGrads* grads, bool train_btu,
                   const std::vector<double>* cached_embedding, GradTape& tape);

// Mean over records and measurements of the summed per-channel pinball loss,
// one tau per record. dropout_rng == nullptr runs in inference mode.
double batch_loss(const NbeModel& model, std::span<const SimRecord> batch,
                  std::span<const double> taus, double dropout_rate, RngStream* dropout_rng);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_loss = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const NbeModel& model,
                     const CheckpointMeta& meta);

NbeModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace phylonbe
