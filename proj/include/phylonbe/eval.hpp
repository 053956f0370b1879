#pragma once

#include <array>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "phylonbe/model.hpp"
#include "phylonbe/sim.hpp"

namespace phylonbe {

struct DegenerateTruth : std::runtime_error {
  DegenerateTruth() : std::runtime_error("r_squared: truth values are all identical") {}
};

// 1 - SS_res / SS_tot against the posterior medians.
double r_squared(std::span<const double> truth, std::span<const double> pred);

// mean(pred - truth); positive means overestimation.
double bias(std::span<const double> truth, std::span<const double> pred);

// Fraction of truth values inside [lower, upper]; a crossed pair is swapped
// before counting.
double coverage(std::span<const double> truth, std::span<const double> lower,
                std::span<const double> upper);

struct CoverageBand {
  double lo = 0.0;
  double hi = 1.0;
};

// Equal-tailed acceptance region of a two-sided binomial test at level
// alpha: [q(alpha/2)/n, q(1 - alpha/2)/n] with q the binomial quantile. With
// n = 1000 this reproduces 0.469-0.531 at p = 0.5 and 0.936-0.963 at
// p = 0.95.
CoverageBand binomial_acceptance_band(long n, double p, double alpha = 0.05);

struct QuantityReport {
  double r2 = 0.0;
  double bias = 0.0;
  double cover50 = 0.0;
  double cover95 = 0.0;
};

struct EvalReport {
  std::array<QuantityReport, 3> quantities;  // channel order: reff, log10_prev, log10_cum
  long n_points = 0;
  double crossing_rate = 0.0;
  CoverageBand band50;
  CoverageBand band95;
};

inline constexpr std::array<double, 5> kEvalTaus{0.025, 0.25, 0.5, 0.75, 0.975};

// Quantile estimates at the five evaluation taus for one measurement.
using PredictFn =
    std::function<std::array<QuantileEstimate, 5>(const SimRecord&, const Measurement&)>;

// Queries the predictor at every (record, measurement), then assembles
// per-quantity R^2 and bias on the medians, 50% and 95% interval coverage,
// and the fraction of points with any non-monotone quantile pair. raw_csv,
// when given, receives one row per point.
EvalReport evaluate_predictions(const std::vector<SimRecord>& data, const PredictFn& predict_fn,
                                std::ostream* raw_csv = nullptr);

EvalReport evaluate_model(const NbeModel& model, const std::vector<SimRecord>& data,
                          std::ostream* raw_csv = nullptr);

}  // namespace phylonbe
