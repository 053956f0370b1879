#include "phylonbe/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "phylonbe/dataset.hpp"
#include "phylonbe/eval.hpp"
#include "phylonbe/model.hpp"
#include "phylonbe/parallel.hpp"
#include "phylonbe/train.hpp"

namespace phylonbe {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Resolved config + its hash, written next to every command's outputs.
std::string write_resolved_config(const fs::path& dir, json resolved) {
  const std::string hash = fnv1a_hex(resolved.dump());
  resolved["config_hash"] = hash;
  write_text(dir / "config.json", resolved.dump(1) + "\n");
  return hash;
}

int resolve_threads(int requested) {
  if (requested > 0) {
    const int cap = default_thread_count();
    return std::min(requested, cap);
  }
  return default_thread_count();
}

json simulate_options_json(const SimulateOptions& o) {
  return json{{"command", "simulate"},
              {"n_train", o.n_train},
              {"n_val", o.n_val},
              {"n_test", o.n_test},
              {"measurements", o.measurements},
              {"model", o.model},
              {"seed", o.seed},
              {"out_dir", o.out_dir},
              {"max_rejections", o.max_rejections},
              {"prevalence_cap", o.prevalence_cap},
              {"sample_cap", o.sample_cap},
              {"prior_check", o.prior_check},
              {"t_stop_min", o.prior.t_stop_min},
              {"t_stop_max", o.prior.t_stop_max},
              {"changes_min", o.prior.changes_min},
              {"changes_max", o.prior.changes_max},
              {"reff_log_mean", o.prior.reff_log_mean},
              {"reff_log_sd", o.prior.reff_log_sd},
              {"sigma_log_mean", o.prior.sigma_log_mean},
              {"sigma_log_sd", o.prior.sigma_log_sd},
              {"p_psi_alpha", o.prior.p_psi_alpha},
              {"p_psi_beta", o.prior.p_psi_beta},
              {"activation_low", o.delayed.activation_low},
              {"activation_high", o.delayed.activation_high},
              {"seed_ranges",
               {{"train", {0, o.n_train}},
                {"val", {o.n_train, o.n_train + o.n_val}},
                {"test", {o.n_train + o.n_val, o.n_train + o.n_val + o.n_test}}}}};
}

json quantity_json(const QuantityReport& q) {
  return json{{"r2", q.r2}, {"bias", q.bias}, {"cover50", q.cover50}, {"cover95", q.cover95}};
}

struct PriorSummary {
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

PriorSummary summarize(std::vector<double>& draws) {
  std::sort(draws.begin(), draws.end());
  const auto pick = [&](double q) {
    const auto idx = static_cast<std::size_t>(
        std::llround(q * static_cast<double>(draws.size() - 1)));
    return draws[idx];
  };
  return PriorSummary{pick(0.5), pick(0.025), pick(0.975)};
}

json prior_summary_json(const PriorSummary& s) {
  return json{{"median", s.median}, {"q025", s.q025}, {"q975", s.q975}};
}

int run_prior_check(const SimulateOptions& options) {
  constexpr int kDraws = 1000000;
  RngStream rng(options.seed);
  std::vector<double> reff(kDraws), sigma(kDraws), p_psi(kDraws);
  for (int i = 0; i < kDraws; ++i) {
    reff[static_cast<std::size_t>(i)] =
        rng.lognormal(options.prior.reff_log_mean, options.prior.reff_log_sd);
    sigma[static_cast<std::size_t>(i)] =
        rng.lognormal(options.prior.sigma_log_mean, options.prior.sigma_log_sd);
    p_psi[static_cast<std::size_t>(i)] = rng.beta(options.prior.p_psi_alpha, options.prior.p_psi_beta);
  }
  json out{{"draws", kDraws},
           {"reff", prior_summary_json(summarize(reff))},
           {"sigma", prior_summary_json(summarize(sigma))},
           {"p_psi", prior_summary_json(summarize(p_psi))}};
  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  write_text(dir / "prior_check.json", out.dump(1) + "\n");
  write_resolved_config(dir, simulate_options_json(options));
  std::cout << out.dump(1) << std::endl;
  return 0;
}

}  // namespace

int run_simulate(const SimulateOptions& options) {
  if (options.prior_check) return run_prior_check(options);

  SimulatorConfig config;
  config.prior = options.prior;
  config.delayed = options.delayed;
  config.prevalence_cap = options.prevalence_cap;
  config.sample_cap = options.sample_cap;
  config.max_rejections = options.max_rejections;
  config.measurements_per_record = options.measurements;
  if (options.model == "standard") {
    config.model = SimModel::standard;
  } else if (options.model == "delayed-sampling") {
    config.model = SimModel::delayed_sampling;
  } else {
    std::cerr << "unknown model '" << options.model << "'\n";
    return 2;
  }

  const int threads = resolve_threads(options.threads);
  const fs::path dir(options.out_dir);
  fs::create_directories(dir);

  // Disjoint seed index ranges per split.
  std::uint64_t offset = 0;
  const auto make_split = [&](const char* name, int n) {
    const auto records = simulate_dataset(config, n, options.seed, offset, threads);
    offset += static_cast<std::uint64_t>(n);
    write_jsonl(dir / (std::string(name) + ".jsonl"), records);
  };
  make_split("train", options.n_train);
  make_split("val", options.n_val);
  make_split("test", options.n_test);
  write_resolved_config(dir, simulate_options_json(options));
  return 0;
}

int run_train(const TrainOptions& options, bool finetune) {
  const fs::path data_dir(options.data_dir);
  const auto train_data = read_jsonl(data_dir / "train.jsonl");
  const auto val_data = read_jsonl(data_dir / "val.jsonl");

  NbeModel model;
  if (finetune) {
    if (options.init_checkpoint.empty()) {
      std::cerr << "finetune requires --init\n";
      return 2;
    }
    model = load_checkpoint(options.init_checkpoint);
  } else {
    RngStream init_rng(mix_seed(options.seed, 0x1417ULL));
    model = make_model(BtuConfig{options.embedding_dim, options.g_depth, options.g_width},
                       PredConfig{options.h_depth, options.h_width}, init_rng);
  }

  TrainConfig config;
  config.batch_size = options.batch_size;
  config.epochs = options.epochs;
  config.tau_beta_a = options.tau_beta_a;
  config.tau_beta_b = options.tau_beta_b;
  config.tau_per_batch = options.tau_per_batch;
  config.adamw = AdamWConfig{options.learning_rate, options.beta1, options.beta2, options.epsilon,
                             options.weight_decay};
  config.dropout_rate = options.dropout;
  config.mode = finetune ? TrainMode::prediction_unit_only : TrainMode::full;
  config.seed = options.seed;
  config.threads = resolve_threads(options.threads);

  const TrainResult result = train(std::move(model), train_data, val_data, config);

  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.json", result.model,
                  CheckpointMeta{options.seed, result.best_epoch, result.best_val_loss});

  std::string curves = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < result.curves.size(); ++e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", e + 1, result.curves[e].train_loss,
                  result.curves[e].val_loss);
    curves += buf;
  }
  write_text(dir / "curves.csv", curves);

  json resolved{{"command", finetune ? "finetune" : "train"},
                {"data_dir", options.data_dir},
                {"out_dir", options.out_dir},
                {"seed", options.seed},
                {"epochs", options.epochs},
                {"batch_size", options.batch_size},
                {"learning_rate", options.learning_rate},
                {"beta1", options.beta1},
                {"beta2", options.beta2},
                {"epsilon", options.epsilon},
                {"weight_decay", options.weight_decay},
                {"dropout", options.dropout},
                {"tau_beta_a", options.tau_beta_a},
                {"tau_beta_b", options.tau_beta_b},
                {"tau_per_batch", options.tau_per_batch},
                {"embedding_dim", options.embedding_dim},
                {"g_depth", options.g_depth},
                {"g_width", options.g_width},
                {"h_depth", options.h_depth},
                {"h_width", options.h_width},
                {"init_checkpoint", options.init_checkpoint}};
  write_resolved_config(dir, std::move(resolved));

  // Wall time lives in its own file: it differs between reruns, every other
  // output is byte-identical for a fixed config and seed.
  char timing[128];
  std::snprintf(timing, sizeof timing, "wall_seconds=%.3f best_epoch=%d\n", result.wall_seconds,
                result.best_epoch);
  write_text(dir / "timing.log", timing);
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  const auto colon = std::count(text.begin(), text.end(), ':');
  if (colon == 2) {
    double lo = 0.0, hi = 0.0;
    long n = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%ld", &lo, &hi, &n) != 3 || n < 1) {
      throw std::invalid_argument("bad grid '" + text + "', expected lo:hi:n");
    }
    for (long i = 0; i < n; ++i) {
      out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return out;
  }
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stod(token));
  }
  if (out.empty()) throw std::invalid_argument("empty grid '" + text + "'");
  return out;
}

int run_predict(const PredictOptions& options) {
  const NbeModel model = load_checkpoint(options.checkpoint);
  std::ifstream in(options.newick_file, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open tree file " << options.newick_file << "\n";
    return 2;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
    text.pop_back();
  }
  const ReconTree tree = parse_newick(text);
  if (options.sigma <= 0.0) {
    std::cerr << "--sigma must be > 0\n";
    return 2;
  }
  const auto grid = trajectory(model, tree, 1.0 / options.sigma, options.times, options.taus);

  std::string csv = "t,tau,q_reff,q_log10_prev,q_log10_cum\n";
  std::size_t idx = 0;
  for (double t : options.times) {
    for (double tau : options.taus) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g\n", t, tau, grid[idx].q_reff,
                    grid[idx].q_log10_prev, grid[idx].q_log10_cum);
      csv += buf;
      ++idx;
    }
  }
  if (options.out_file.empty()) {
    std::cout << csv;
  } else {
    write_text(options.out_file, csv);
  }
  return 0;
}

int run_evaluate(const EvaluateOptions& options) {
  const auto data = read_jsonl(options.test_file);
  const fs::path dir(options.out_dir);
  fs::create_directories(dir);

  std::ostringstream raw_csv;
  EvalReport report;
  if (options.oracle) {
    // Identity oracle: medians equal the truth, intervals are tight bands
    // around it. Pins the (1, 0, 1, 1) contract of the report pipeline.
    const PredictFn oracle = [](const SimRecord&, const Measurement& m) {
      const auto y = m.targets();
      std::array<QuantileEstimate, 5> out;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double delta = 1e-6 * (static_cast<double>(i) - 2.0);
        out[i] = QuantileEstimate{y[0] + delta, y[1] + delta, y[2] + delta};
      }
      return out;
    };
    report = evaluate_predictions(data, oracle, &raw_csv);
  } else {
    const NbeModel model = load_checkpoint(options.checkpoint);
    report = evaluate_model(model, data, &raw_csv);
  }
  write_text(dir / "raw.csv", raw_csv.str());

  json resolved{{"command", "evaluate"},
                {"checkpoint", options.checkpoint},
                {"test_file", options.test_file},
                {"out_dir", options.out_dir},
                {"oracle", options.oracle},
                {"strict", options.strict}};
  const std::string hash = write_resolved_config(dir, std::move(resolved));

  json j{{"n_points", report.n_points},
         {"crossing_rate", report.crossing_rate},
         {"bands",
          {{"50", {report.band50.lo, report.band50.hi}},
           {"95", {report.band95.lo, report.band95.hi}}}},
         {"config_hash", hash}};
  for (int c = 0; c < 3; ++c) {
    j[kChannelNames[static_cast<std::size_t>(c)]] =
        quantity_json(report.quantities[static_cast<std::size_t>(c)]);
  }
  write_text(dir / "report.json", j.dump(1) + "\n");
  std::cout << j.dump(1) << std::endl;

  if (options.strict) {
    for (const auto& q : report.quantities) {
      if (q.cover95 < report.band95.lo) return 1;
    }
  }
  return 0;
}

}  // namespace phylonbe
