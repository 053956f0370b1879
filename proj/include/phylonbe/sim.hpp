#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phylonbe/piecewise.hpp"
#include "phylonbe/rng.hpp"
#include "phylonbe/tree.hpp"

namespace phylonbe {

struct TooManyRejections : std::runtime_error {
  explicit TooManyRejections(int cap)
      : std::runtime_error("no accepted simulation after " + std::to_string(cap) + " rejections") {}
};

struct FewerThanTwoSamples : std::runtime_error {
  FewerThanTwoSamples() : std::runtime_error("pruning requires at least two sampling events") {}
};

// One draw from the joint prior: piecewise-constant reproduction number and
// sampled proportion, constant net becoming-uninfectious rate, and the
// stopping time in days.
struct EpidemicParams {
  PiecewiseConstant reff;   // dimensionless, > 0
  PiecewiseConstant p_psi;  // proportion in [0, 1]
  double sigma = 0.0;       // per day, > 0
  int t_stop = 0;           // days, 30..90 under the default prior
};

// Birth, death and sampling rates derived from EpidemicParams:
// lambda = reff * sigma, psi = p_psi * sigma, mu = (1 - p_psi) * sigma,
// so that mu + psi = sigma at every t.
struct Rates {
  PiecewiseConstant lambda, mu, psi;
};

// Prior distributions from which EpidemicParams are drawn. Every entry can
// be overridden from the CLI config.
struct PriorConfig {
  int t_stop_min = 30;
  int t_stop_max = 90;
  int changes_min = 1;
  int changes_max = 2;
  double reff_log_mean = 1.0;
  double reff_log_sd = 0.7;
  double sigma_log_mean = -1.81;
  double sigma_log_sd = 0.2;
  double p_psi_alpha = 1.1;
  double p_psi_beta = 8.0;
};

// Delayed-sampling variant: p_psi is 0 before activation_fraction * t_stop
// and a single Beta draw afterwards.
struct DelayedSamplingConfig {
  double activation_low = 0.3;
  double activation_high = 0.7;
};

enum class SimModel { standard, delayed_sampling };

enum class LineageEnd : std::uint8_t { death, sampling, extant_at_stop };

struct Lineage {
  double birth_time = 0.0;
  std::int32_t parent = -1;  // -1 for the index case
  double end_time = 0.0;
  LineageEnd end = LineageEnd::extant_at_stop;
};

// Complete who-infected-whom history of one realization. Lineage 0 is the
// index case; lineages appear in birth order.
struct TransmissionTree {
  std::vector<Lineage> lineages;
  double end_time = 0.0;  // time at which a stop condition triggered

  int sample_count() const;
  // Number of lineages alive at t (extant-at-stop lineages count as alive
  // through end_time).
  long prevalence_at(double t) const;
  // 1 + number of birth events at time <= t: the index case counts as the
  // first infection.
  long cumulative_at(double t) const;
};

enum class StopReason { time_reached, prevalence_cap, sample_cap, extinct };

struct RawSimResult {
  TransmissionTree tree;
  StopReason stop = StopReason::time_reached;
  bool accepted = false;  // not extinct and >= 2 sampling events
};

struct Measurement {
  double t = 0.0;
  long n_prev = 0;
  long n_cum = 0;
  double reff_at = 0.0;

  // Training targets in channel order (reff, log10_prev, log10_cum).
  std::array<double, 3> targets() const;
};

struct SimRecord {
  ReconTree tree;
  double sigma = 0.0;
  std::vector<Measurement> measurements;
  EpidemicParams truth;
  double t_present = 0.0;
  std::uint64_t seed = 0;
};

struct SimulatorConfig {
  PriorConfig prior;
  SimModel model = SimModel::standard;
  DelayedSamplingConfig delayed;
  double prevalence_cap = 50000.0;
  int sample_cap = 1000;
  int max_rejections = 10000;
  int measurements_per_record = 10;  // J
};

EpidemicParams sample_prior(const PriorConfig& prior, RngStream& rng);
EpidemicParams sample_prior_delayed(const PriorConfig& prior, const DelayedSamplingConfig& delayed,
                                    RngStream& rng);

Rates rates_from_params(const EpidemicParams& params);

// Exact next-event simulation of the birth-death-sampling process with
// piecewise-constant rates, starting from one infectious lineage at t = 0.
// Within a constant-rate interval each step draws Exponential(total rate)
// waiting times; at a rate change point the residual clock is discarded and
// redrawn, which is exact by memorylessness. Stops at the first of: t_stop,
// the prevalence cap, or the sample cap.
RawSimResult simulate_raw(const Rates& rates, double t_stop, double prevalence_cap, int sample_cap,
                          RngStream& rng);

using ParamsSampler = std::function<EpidemicParams(RngStream&)>;

struct ConditionedSim {
  EpidemicParams params;
  TransmissionTree tree;
  int rejections = 0;
};

// Repeats {sample params; simulate} until an accepted realization appears.
// Both the parameters and the trajectory are re-drawn on rejection. Throws
// TooManyRejections after max_rejections failures.
ConditionedSim condition_and_resample(const ParamsSampler& sampler, double prevalence_cap,
                                      int sample_cap, int max_rejections, RngStream& rng);

struct PrunedTree {
  ReconTree tree;
  double t_present = 0.0;  // time of the final sampling event
};

// Keeps only lineage segments ancestral to at least one sampling event,
// suppresses degree-2 nodes, and roots the result at the MRCA of all
// samples. Tips are labelled s0, s1, ... by sampling-time order.
PrunedTree prune_to_reconstructed(const TransmissionTree& tt);

std::vector<Measurement> measure(const TransmissionTree& tt, const EpidemicParams& params,
                                 double t_present, int J, RngStream& rng);

// Full per-record pipeline: condition, prune, measure. Deterministic given
// record_seed.
SimRecord simulate_record(const SimulatorConfig& config, std::uint64_t record_seed);

// n_records records with seeds mix_seed(base_seed, index_offset + i). Output
// order is by record index regardless of worker scheduling.
std::vector<SimRecord> simulate_dataset(const SimulatorConfig& config, int n_records,
                                        std::uint64_t base_seed, std::uint64_t index_offset,
                                        int threads);

}  // namespace phylonbe
