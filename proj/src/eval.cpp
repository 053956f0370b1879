#include "phylonbe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace phylonbe {

double r_squared(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw DimensionMismatch("r_squared");
  if (truth.size() < 2) throw std::invalid_argument("r_squared needs at least two points");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (ss_tot == 0.0) throw DegenerateTruth();
  return 1.0 - ss_res / ss_tot;
}

double bias(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw DimensionMismatch("bias");
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += pred[i] - truth[i];
  return truth.empty() ? 0.0 : sum / static_cast<double>(truth.size());
}

double coverage(std::span<const double> truth, std::span<const double> lower,
                std::span<const double> upper) {
  if (truth.size() != lower.size() || truth.size() != upper.size()) {
    throw DimensionMismatch("coverage");
  }
  if (truth.empty()) return 0.0;
  long hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double lo = std::min(lower[i], upper[i]);
    const double hi = std::max(lower[i], upper[i]);
    if (truth[i] >= lo && truth[i] <= hi) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

CoverageBand binomial_acceptance_band(long n, double p, double alpha) {
  // Binomial quantile via a log-space pmf recurrence; n stays small enough
  // (tens of thousands) for the linear scan.
  const double logp = std::log(p);
  const double log1mp = std::log1p(-p);
  double log_pmf = static_cast<double>(n) * log1mp;  // P(X = 0)
  double cdf = std::exp(log_pmf);
  long k = 0;
  long lo = -1;
  long hi = -1;
  const double a_lo = alpha / 2.0;
  const double a_hi = 1.0 - alpha / 2.0;
  if (cdf >= a_lo) lo = 0;
  if (cdf >= a_hi) hi = 0;
  while (k < n && (lo < 0 || hi < 0)) {
    log_pmf += std::log(static_cast<double>(n - k)) - std::log(static_cast<double>(k + 1)) + logp -
               log1mp;
    ++k;
    cdf += std::exp(log_pmf);
    if (lo < 0 && cdf >= a_lo) lo = k;
    if (hi < 0 && cdf >= a_hi) hi = k;
  }
  if (lo < 0) lo = n;
  if (hi < 0) hi = n;
  return CoverageBand{static_cast<double>(lo) / static_cast<double>(n),
                      static_cast<double>(hi) / static_cast<double>(n)};
}

namespace {

void csv_row(std::ostream& out, int record_id, double t,
             const std::array<double, 3>& truth,
             const std::array<std::array<double, 5>, 3>& q) {
  char buf[64];
  out << record_id;
  std::snprintf(buf, sizeof buf, ",%.12g", t);
  out << buf;
  for (int c = 0; c < 3; ++c) {
    std::snprintf(buf, sizeof buf, ",%.12g", truth[static_cast<std::size_t>(c)]);
    out << buf;
    for (int i = 0; i < 5; ++i) {
      std::snprintf(buf, sizeof buf, ",%.12g",
                    q[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]);
      out << buf;
    }
  }
  out << '\n';
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<SimRecord>& data, const PredictFn& predict_fn,
                                std::ostream* raw_csv) {
  if (raw_csv != nullptr) {
    *raw_csv << "record_id,t";
    for (const char* name : kChannelNames) {
      *raw_csv << ",truth_" << name << ",q025_" << name << ",q25_" << name << ",q50_" << name
               << ",q75_" << name << ",q975_" << name;
    }
    *raw_csv << '\n';
  }

  std::array<std::vector<double>, 3> truths;
  std::array<std::array<std::vector<double>, 5>, 3> quantiles;
  long crossings = 0;
  long points = 0;

  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& record = data[r];
    for (const auto& m : record.measurements) {
      const std::array<QuantileEstimate, 5> est = predict_fn(record, m);
      const std::array<double, 3> y = m.targets();
      std::array<std::array<double, 5>, 3> q{};
      for (int i = 0; i < 5; ++i) {
        q[0][static_cast<std::size_t>(i)] = est[static_cast<std::size_t>(i)].q_reff;
        q[1][static_cast<std::size_t>(i)] = est[static_cast<std::size_t>(i)].q_log10_prev;
        q[2][static_cast<std::size_t>(i)] = est[static_cast<std::size_t>(i)].q_log10_cum;
      }
      bool crossed = false;
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i + 1 < 5; ++i) {
          if (q[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] >
              q[static_cast<std::size_t>(c)][static_cast<std::size_t>(i + 1)]) {
            crossed = true;
          }
        }
        truths[static_cast<std::size_t>(c)].push_back(y[static_cast<std::size_t>(c)]);
        for (int i = 0; i < 5; ++i) {
          quantiles[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)].push_back(
              q[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]);
        }
      }
      if (crossed) ++crossings;
      ++points;
      if (raw_csv != nullptr) csv_row(*raw_csv, static_cast<int>(r), m.t, y, q);
    }
  }

  EvalReport report;
  report.n_points = points;
  report.crossing_rate = points > 0 ? static_cast<double>(crossings) / static_cast<double>(points) : 0.0;
  report.band50 = binomial_acceptance_band(points, 0.5);
  report.band95 = binomial_acceptance_band(points, 0.95);
  for (int c = 0; c < 3; ++c) {
    auto& quantity = report.quantities[static_cast<std::size_t>(c)];
    const auto& truth = truths[static_cast<std::size_t>(c)];
    const auto& q = quantiles[static_cast<std::size_t>(c)];
    quantity.r2 = r_squared(truth, q[2]);
    quantity.bias = bias(truth, q[2]);
    quantity.cover50 = coverage(truth, q[1], q[3]);
    quantity.cover95 = coverage(truth, q[0], q[4]);
  }
  return report;
}

EvalReport evaluate_model(const NbeModel& model, const std::vector<SimRecord>& data,
                          std::ostream* raw_csv) {
  // One embedding per record, reused across its measurements and taus.
  std::vector<double> embedding;
  const SimRecord* current = nullptr;
  double t_h = 0.0;
  const PredictFn fn = [&](const SimRecord& record, const Measurement& m) {
    if (current != &record) {
      embedding = btu_embed(model, record.tree);
      t_h = height(record.tree);
      current = &record;
    }
    std::array<QuantileEstimate, 5> out;
    for (std::size_t i = 0; i < kEvalTaus.size(); ++i) {
      out[i] = predict_with_embedding(model, embedding, t_h, 1.0 / record.sigma, m.t, kEvalTaus[i]);
    }
    return out;
  };
  return evaluate_predictions(data, fn, raw_csv);
}

}  // namespace phylonbe
