#include "phylonbe/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "phylonbe/parallel.hpp"

namespace phylonbe {

int TransmissionTree::sample_count() const {
  int n = 0;
  for (const auto& l : lineages) n += l.end == LineageEnd::sampling ? 1 : 0;
  return n;
}

long TransmissionTree::prevalence_at(double t) const {
  long n = 0;
  for (const auto& l : lineages) {
    if (l.birth_time <= t && (l.end == LineageEnd::extant_at_stop ? t <= l.end_time : l.end_time > t)) {
      ++n;
    }
  }
  return n;
}

long TransmissionTree::cumulative_at(double t) const {
  long n = 1;  // the index case is the first infection
  for (std::size_t i = 1; i < lineages.size(); ++i) {
    if (lineages[i].birth_time <= t) ++n;
  }
  return n;
}

std::array<double, 3> Measurement::targets() const {
  return {reff_at, std::log10(static_cast<double>(n_prev)), std::log10(static_cast<double>(n_cum))};
}

namespace {

std::vector<double> sorted_change_times(int k, double t_stop, RngStream& rng) {
  std::vector<double> times(static_cast<std::size_t>(k));
  for (auto& t : times) t = rng.uniform(0.0, t_stop);
  std::sort(times.begin(), times.end());
  return times;
}

}  // namespace

EpidemicParams sample_prior(const PriorConfig& prior, RngStream& rng) {
  EpidemicParams params;
  params.t_stop = static_cast<int>(rng.uniform_int(prior.t_stop_min, prior.t_stop_max));
  params.sigma = rng.lognormal(prior.sigma_log_mean, prior.sigma_log_sd);
  const int k = static_cast<int>(rng.uniform_int(prior.changes_min, prior.changes_max));
  params.reff.change_times = sorted_change_times(k, params.t_stop, rng);
  params.reff.values.resize(static_cast<std::size_t>(k) + 1);
  for (auto& v : params.reff.values) v = rng.lognormal(prior.reff_log_mean, prior.reff_log_sd);
  params.p_psi.change_times = sorted_change_times(k, params.t_stop, rng);
  params.p_psi.values.resize(static_cast<std::size_t>(k) + 1);
  for (auto& v : params.p_psi.values) v = rng.beta(prior.p_psi_alpha, prior.p_psi_beta);
  return params;
}

EpidemicParams sample_prior_delayed(const PriorConfig& prior, const DelayedSamplingConfig& delayed,
                                    RngStream& rng) {
  EpidemicParams params = sample_prior(prior, rng);
  // Replace the sampled-proportion function: zero until activation, then a
  // single Beta draw.
  const double t_act = rng.uniform(delayed.activation_low, delayed.activation_high);
  params.p_psi.change_times = {t_act * params.t_stop};
  params.p_psi.values = {0.0, rng.beta(prior.p_psi_alpha, prior.p_psi_beta)};
  return params;
}

Rates rates_from_params(const EpidemicParams& params) {
  Rates rates;
  rates.lambda.change_times = params.reff.change_times;
  rates.lambda.values.reserve(params.reff.values.size());
  for (double r : params.reff.values) rates.lambda.values.push_back(r * params.sigma);
  rates.mu.change_times = params.p_psi.change_times;
  rates.psi.change_times = params.p_psi.change_times;
  for (double p : params.p_psi.values) {
    rates.psi.values.push_back(p * params.sigma);
    rates.mu.values.push_back((1.0 - p) * params.sigma);
  }
  return rates;
}

RawSimResult simulate_raw(const Rates& rates, double t_stop, double prevalence_cap, int sample_cap,
                          RngStream& rng) {
  RawSimResult out;
  auto& lineages = out.tree.lineages;
  lineages.push_back(Lineage{0.0, -1, 0.0, LineageEnd::extant_at_stop});
  std::vector<std::int32_t> alive{0};
  int samples = 0;
  double t = 0.0;

  // Union of rate change times; clocks restart at each of them.
  std::vector<double> changes;
  changes.reserve(rates.lambda.change_times.size() + rates.mu.change_times.size());
  changes.insert(changes.end(), rates.lambda.change_times.begin(), rates.lambda.change_times.end());
  changes.insert(changes.end(), rates.mu.change_times.begin(), rates.mu.change_times.end());
  std::sort(changes.begin(), changes.end());
  std::size_t next_change = 0;

  const auto finish = [&](StopReason reason, double stop_time) {
    out.stop = reason;
    out.tree.end_time = stop_time;
    for (std::int32_t id : alive) {
      lineages[static_cast<std::size_t>(id)].end_time = stop_time;
      lineages[static_cast<std::size_t>(id)].end = LineageEnd::extant_at_stop;
    }
    out.accepted = reason != StopReason::extinct && samples >= 2;
  };

  for (;;) {
    while (next_change < changes.size() && changes[next_change] <= t) ++next_change;
    const double segment_end =
        next_change < changes.size() ? std::min(changes[next_change], t_stop) : t_stop;
    const double lam = rates.lambda.at(t);
    const double mu = rates.mu.at(t);
    const double psi = rates.psi.at(t);
    const double per_lineage = lam + mu + psi;
    const double total = per_lineage * static_cast<double>(alive.size());

    double t_next = std::numeric_limits<double>::infinity();
    if (total > 0.0) t_next = t + rng.exponential(total);
    if (t_next >= segment_end) {
      if (segment_end >= t_stop) {
        finish(StopReason::time_reached, t_stop);
        return out;
      }
      t = segment_end;  // cross the change point, redraw the clock
      continue;
    }
    t = t_next;

    const double u = rng.uniform01() * per_lineage;
    const std::size_t pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(alive.size()) - 1));
    const std::int32_t id = alive[pick];
    if (u < lam) {
      lineages.push_back(Lineage{t, id, 0.0, LineageEnd::extant_at_stop});
      alive.push_back(static_cast<std::int32_t>(lineages.size() - 1));
      if (static_cast<double>(alive.size()) >= prevalence_cap) {
        finish(StopReason::prevalence_cap, t);
        return out;
      }
    } else {
      auto& lineage = lineages[static_cast<std::size_t>(id)];
      lineage.end_time = t;
      lineage.end = u < lam + mu ? LineageEnd::death : LineageEnd::sampling;
      alive[pick] = alive.back();
      alive.pop_back();
      if (lineage.end == LineageEnd::sampling) ++samples;
      if (alive.empty()) {
        // Extinction wins over a simultaneous cap: the conditioning requires
        // prevalence > 0 at the trigger time.
        finish(StopReason::extinct, t);
        return out;
      }
      if (lineage.end == LineageEnd::sampling && samples >= sample_cap) {
        finish(StopReason::sample_cap, t);
        return out;
      }
    }
  }
}

ConditionedSim condition_and_resample(const ParamsSampler& sampler, double prevalence_cap,
                                      int sample_cap, int max_rejections, RngStream& rng) {
  ConditionedSim out;
  for (int attempt = 0; attempt <= max_rejections; ++attempt) {
    EpidemicParams params = sampler(rng);
    RawSimResult raw = simulate_raw(rates_from_params(params), params.t_stop, prevalence_cap,
                                    sample_cap, rng);
    if (raw.accepted) {
      out.params = std::move(params);
      out.tree = std::move(raw.tree);
      out.rejections = attempt;
      return out;
    }
  }
  throw TooManyRejections(max_rejections);
}

PrunedTree prune_to_reconstructed(const TransmissionTree& tt) {
  const auto& lineages = tt.lineages;
  const auto n = static_cast<std::int32_t>(lineages.size());

  // Children are born after their parents, so a reverse sweep suffices to
  // mark every lineage with a sampled descendant.
  std::vector<char> has_sample(lineages.size(), 0);
  for (std::int32_t i = n - 1; i >= 0; --i) {
    if (lineages[static_cast<std::size_t>(i)].end == LineageEnd::sampling) {
      has_sample[static_cast<std::size_t>(i)] = 1;
    }
    const std::int32_t parent = lineages[static_cast<std::size_t>(i)].parent;
    if (parent >= 0 && has_sample[static_cast<std::size_t>(i)]) {
      has_sample[static_cast<std::size_t>(parent)] = 1;
    }
  }

  // Sample-bearing children of each lineage, in birth order.
  std::vector<std::vector<std::int32_t>> rel(lineages.size());
  for (std::int32_t i = 1; i < n; ++i) {
    if (has_sample[static_cast<std::size_t>(i)]) {
      rel[static_cast<std::size_t>(lineages[static_cast<std::size_t>(i)].parent)].push_back(i);
    }
  }

  // Tip labels follow sampling-time order: s0 is the earliest sample.
  std::vector<std::int32_t> sampled;
  for (std::int32_t i = 0; i < n; ++i) {
    if (lineages[static_cast<std::size_t>(i)].end == LineageEnd::sampling) sampled.push_back(i);
  }
  if (sampled.size() < 2) throw FewerThanTwoSamples();
  std::sort(sampled.begin(), sampled.end(), [&](std::int32_t a, std::int32_t b) {
    const auto& la = lineages[static_cast<std::size_t>(a)];
    const auto& lb = lineages[static_cast<std::size_t>(b)];
    return la.end_time != lb.end_time ? la.end_time < lb.end_time : a < b;
  });
  std::vector<std::int32_t> tip_rank(lineages.size(), -1);
  for (std::size_t r = 0; r < sampled.size(); ++r) {
    tip_rank[static_cast<std::size_t>(sampled[r])] = static_cast<std::int32_t>(r);
  }

  ReconTree tree;
  tree.nodes.reserve(2 * sampled.size() - 1);
  std::vector<double> node_time;
  node_time.reserve(2 * sampled.size() - 1);

  const auto own_sample = [&](std::int32_t j) {
    return lineages[static_cast<std::size_t>(j)].end == LineageEnd::sampling;
  };

  // Builds the subtree for lineage j considering its sample-bearing births
  // from position k onward. Degree-2 points (a birth with no sample beyond
  // it on the continuing lineage) are passed through, which suppresses them.
  const std::function<std::int32_t(std::int32_t, std::size_t)> build =
      [&](std::int32_t j, std::size_t k) -> std::int32_t {
    for (;;) {
      const auto& births = rel[static_cast<std::size_t>(j)];
      if (k == births.size()) {
        const auto& lineage = lineages[static_cast<std::size_t>(j)];
        tree.nodes.push_back(ReconTree::Node{
            0.0, -1, -1, "s" + std::to_string(tip_rank[static_cast<std::size_t>(j)])});
        node_time.push_back(lineage.end_time);
        return static_cast<std::int32_t>(tree.nodes.size() - 1);
      }
      const std::int32_t child = births[k];
      const bool sample_beyond = k + 1 < births.size() || own_sample(j);
      if (!sample_beyond) {
        j = child;  // pass through the degree-2 point
        k = 0;
        continue;
      }
      const double split_time = lineages[static_cast<std::size_t>(child)].birth_time;
      const std::int32_t left = build(j, k + 1);   // the transmitting lineage continues
      const std::int32_t right = build(child, 0);  // the new infection branches off
      tree.nodes.push_back(ReconTree::Node{0.0, left, right, {}});
      node_time.push_back(split_time);
      return static_cast<std::int32_t>(tree.nodes.size() - 1);
    }
  };

  tree.root = build(0, 0);

  // Branch lengths from absolute node times; everything above the MRCA is
  // discarded so the root branch stays zero.
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    if (!node.is_leaf()) {
      tree.nodes[static_cast<std::size_t>(node.left)].branch_length =
          node_time[static_cast<std::size_t>(node.left)] - node_time[i];
      tree.nodes[static_cast<std::size_t>(node.right)].branch_length =
          node_time[static_cast<std::size_t>(node.right)] - node_time[i];
    }
  }

  const double t_present = lineages[static_cast<std::size_t>(sampled.back())].end_time;
  return PrunedTree{std::move(tree), t_present};
}

std::vector<Measurement> measure(const TransmissionTree& tt, const EpidemicParams& params,
                                 double t_present, int J, RngStream& rng) {
  std::vector<Measurement> out;
  out.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    Measurement m;
    m.t = rng.uniform(0.0, t_present);
    m.n_prev = tt.prevalence_at(m.t);
    m.n_cum = tt.cumulative_at(m.t);
    m.reff_at = params.reff.at(m.t);
    out.push_back(m);
  }
  return out;
}

SimRecord simulate_record(const SimulatorConfig& config, std::uint64_t record_seed) {
  RngStream rng(record_seed);
  const ParamsSampler sampler = [&config](RngStream& r) {
    return config.model == SimModel::standard
               ? sample_prior(config.prior, r)
               : sample_prior_delayed(config.prior, config.delayed, r);
  };
  ConditionedSim sim = condition_and_resample(sampler, config.prevalence_cap, config.sample_cap,
                                              config.max_rejections, rng);
  PrunedTree pruned = prune_to_reconstructed(sim.tree);
  SimRecord record;
  record.measurements =
      measure(sim.tree, sim.params, pruned.t_present, config.measurements_per_record, rng);
  record.tree = std::move(pruned.tree);
  record.sigma = sim.params.sigma;
  record.truth = std::move(sim.params);
  record.t_present = pruned.t_present;
  record.seed = record_seed;
  return record;
}

std::vector<SimRecord> simulate_dataset(const SimulatorConfig& config, int n_records,
                                        std::uint64_t base_seed, std::uint64_t index_offset,
                                        int threads) {
  std::vector<SimRecord> records(static_cast<std::size_t>(n_records));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(n_records, threads, [&](int i) {
    try {
      records[static_cast<std::size_t>(i)] =
          simulate_record(config, mix_seed(base_seed, index_offset + static_cast<std::uint64_t>(i)));
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return records;
}

}  // namespace phylonbe
