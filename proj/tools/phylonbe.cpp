#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phylonbe/commands.hpp"

namespace {

using nlohmann::json;

// The config file is applied before flag parsing, so explicit flags win.
json load_config_json(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw std::runtime_error(std::string("cannot open config ") + argv[i + 1]);
      json j;
      in >> j;
      return j;
    }
  }
  return json::object();
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void grid_from_config(const json& j, const char* key, std::vector<double>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_string()) {
    out = phylonbe::parse_grid(j.at(key).get<std::string>());
  } else {
    out = j.at(key).get<std::vector<double>>();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Birth-death-sampling simulator and neural Bayes estimator for epidemic trajectories"};
  app.require_subcommand(1);

  json cfg;
  try {
    cfg = load_config_json(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  std::string config_path;

  // ---- simulate ----
  phylonbe::SimulateOptions sim;
  maybe(cfg, "n_train", sim.n_train);
  maybe(cfg, "n_val", sim.n_val);
  maybe(cfg, "n_test", sim.n_test);
  maybe(cfg, "measurements", sim.measurements);
  maybe(cfg, "model", sim.model);
  maybe(cfg, "seed", sim.seed);
  maybe(cfg, "out_dir", sim.out_dir);
  maybe(cfg, "threads", sim.threads);
  maybe(cfg, "max_rejections", sim.max_rejections);
  maybe(cfg, "prevalence_cap", sim.prevalence_cap);
  maybe(cfg, "sample_cap", sim.sample_cap);
  maybe(cfg, "prior_check", sim.prior_check);
  maybe(cfg, "t_stop_min", sim.prior.t_stop_min);
  maybe(cfg, "t_stop_max", sim.prior.t_stop_max);
  maybe(cfg, "changes_min", sim.prior.changes_min);
  maybe(cfg, "changes_max", sim.prior.changes_max);
  maybe(cfg, "reff_log_mean", sim.prior.reff_log_mean);
  maybe(cfg, "reff_log_sd", sim.prior.reff_log_sd);
  maybe(cfg, "sigma_log_mean", sim.prior.sigma_log_mean);
  maybe(cfg, "sigma_log_sd", sim.prior.sigma_log_sd);
  maybe(cfg, "p_psi_alpha", sim.prior.p_psi_alpha);
  maybe(cfg, "p_psi_beta", sim.prior.p_psi_beta);
  maybe(cfg, "activation_low", sim.delayed.activation_low);
  maybe(cfg, "activation_high", sim.delayed.activation_high);

  auto* simulate = app.add_subcommand("simulate", "Generate train/val/test JSONL datasets");
  simulate->add_option("--config", config_path, "JSON config file; flags override its keys");
  simulate->add_option("--n-train", sim.n_train, "training records");
  simulate->add_option("--n-val", sim.n_val, "validation records");
  simulate->add_option("--n-test", sim.n_test, "test records");
  simulate->add_option("--measurements,-J", sim.measurements, "measurements per record");
  simulate->add_option("--model", sim.model, "standard | delayed-sampling");
  auto* sim_seed = simulate->add_option("--seed", sim.seed, "base seed (required)");
  simulate->add_option("--out", sim.out_dir, "output directory");
  simulate->add_option("--threads", sim.threads, "worker threads (0 = auto)");
  simulate->add_option("--max-rejections", sim.max_rejections, "per-record rejection cap");
  simulate->add_option("--prevalence-cap", sim.prevalence_cap, "stop when prevalence reaches this");
  simulate->add_option("--sample-cap", sim.sample_cap, "stop at this many sequenced infections");
  simulate->add_flag("--prior-check", sim.prior_check, "1e6-draw dry run of the prior marginals");
  simulate->add_option("--t-stop-min", sim.prior.t_stop_min);
  simulate->add_option("--t-stop-max", sim.prior.t_stop_max);
  simulate->add_option("--changes-min", sim.prior.changes_min);
  simulate->add_option("--changes-max", sim.prior.changes_max);
  simulate->add_option("--reff-log-mean", sim.prior.reff_log_mean);
  simulate->add_option("--reff-log-sd", sim.prior.reff_log_sd);
  simulate->add_option("--sigma-log-mean", sim.prior.sigma_log_mean);
  simulate->add_option("--sigma-log-sd", sim.prior.sigma_log_sd);
  simulate->add_option("--p-psi-alpha", sim.prior.p_psi_alpha);
  simulate->add_option("--p-psi-beta", sim.prior.p_psi_beta);
  simulate->add_option("--activation-low", sim.delayed.activation_low);
  simulate->add_option("--activation-high", sim.delayed.activation_high);

  // ---- train / finetune ----
  phylonbe::TrainOptions tr;
  maybe(cfg, "data_dir", tr.data_dir);
  maybe(cfg, "out_dir", tr.out_dir);
  maybe(cfg, "seed", tr.seed);
  maybe(cfg, "epochs", tr.epochs);
  maybe(cfg, "batch_size", tr.batch_size);
  maybe(cfg, "learning_rate", tr.learning_rate);
  maybe(cfg, "beta1", tr.beta1);
  maybe(cfg, "beta2", tr.beta2);
  maybe(cfg, "epsilon", tr.epsilon);
  maybe(cfg, "weight_decay", tr.weight_decay);
  maybe(cfg, "dropout", tr.dropout);
  maybe(cfg, "tau_beta_a", tr.tau_beta_a);
  maybe(cfg, "tau_beta_b", tr.tau_beta_b);
  maybe(cfg, "tau_per_batch", tr.tau_per_batch);
  maybe(cfg, "embedding_dim", tr.embedding_dim);
  maybe(cfg, "g_depth", tr.g_depth);
  maybe(cfg, "g_width", tr.g_width);
  maybe(cfg, "h_depth", tr.h_depth);
  maybe(cfg, "h_width", tr.h_width);
  maybe(cfg, "init_checkpoint", tr.init_checkpoint);
  maybe(cfg, "threads", tr.threads);

  const auto add_train_flags = [&](CLI::App* cmd, bool finetune) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its keys");
    cmd->add_option("--data", tr.data_dir, "directory with train.jsonl and val.jsonl")->required();
    cmd->add_option("--out", tr.out_dir, "output directory");
    auto* seed_opt = cmd->add_option("--seed", tr.seed, "training seed (required)");
    cmd->add_option("--epochs", tr.epochs);
    cmd->add_option("--batch-size", tr.batch_size);
    cmd->add_option("--learning-rate", tr.learning_rate);
    cmd->add_option("--beta1", tr.beta1);
    cmd->add_option("--beta2", tr.beta2);
    cmd->add_option("--epsilon", tr.epsilon);
    cmd->add_option("--weight-decay", tr.weight_decay);
    cmd->add_option("--dropout", tr.dropout);
    cmd->add_option("--tau-beta-a", tr.tau_beta_a);
    cmd->add_option("--tau-beta-b", tr.tau_beta_b);
    cmd->add_flag("--tau-per-batch", tr.tau_per_batch, "one tau per batch instead of per record");
    cmd->add_option("--threads", tr.threads, "worker threads (0 = auto)");
    if (finetune) {
      cmd->add_option("--init", tr.init_checkpoint, "checkpoint to fine-tune")->required();
    } else {
      cmd->add_option("--embedding-dim", tr.embedding_dim);
      cmd->add_option("--g-depth", tr.g_depth);
      cmd->add_option("--g-width", tr.g_width);
      cmd->add_option("--h-depth", tr.h_depth);
      cmd->add_option("--h-width", tr.h_width);
    }
    return seed_opt;
  };

  auto* train_cmd = app.add_subcommand("train", "Train the estimator from scratch");
  auto* train_seed = add_train_flags(train_cmd, false);
  auto* finetune_cmd = app.add_subcommand("finetune", "Retrain the prediction unit of a checkpoint");
  auto* finetune_seed = add_train_flags(finetune_cmd, true);

  // ---- predict ----
  phylonbe::PredictOptions pr;
  maybe(cfg, "checkpoint", pr.checkpoint);
  maybe(cfg, "newick_file", pr.newick_file);
  maybe(cfg, "out_file", pr.out_file);
  maybe(cfg, "sigma", pr.sigma);
  grid_from_config(cfg, "times", pr.times);
  grid_from_config(cfg, "taus", pr.taus);

  std::string times_text, taus_text;
  auto* predict = app.add_subcommand("predict", "Quantile trajectories for one tree");
  predict->add_option("--config", config_path, "JSON config file; flags override its keys");
  predict->add_option("--checkpoint", pr.checkpoint, "trained model checkpoint");
  predict->add_option("--tree", pr.newick_file, "Newick file with >= 2 tips");
  predict->add_option("--sigma", pr.sigma, "net becoming-uninfectious rate, per day");
  predict->add_option("--times", times_text, "grid: lo:hi:n or comma list (days)");
  predict->add_option("--taus", taus_text, "grid: lo:hi:n or comma list in [0,1]");
  predict->add_option("--out", pr.out_file, "CSV path (default stdout)");

  // ---- evaluate ----
  phylonbe::EvaluateOptions ev;
  maybe(cfg, "checkpoint", ev.checkpoint);
  maybe(cfg, "test_file", ev.test_file);
  maybe(cfg, "out_dir", ev.out_dir);
  maybe(cfg, "oracle", ev.oracle);
  maybe(cfg, "strict", ev.strict);

  auto* evaluate = app.add_subcommand("evaluate", "Calibration and accuracy report on a test split");
  evaluate->add_option("--config", config_path, "JSON config file; flags override its keys");
  evaluate->add_option("--checkpoint", ev.checkpoint, "trained model checkpoint");
  evaluate->add_option("--test", ev.test_file, "test JSONL file");
  evaluate->add_option("--out", ev.out_dir, "output directory");
  evaluate->add_flag("--oracle", ev.oracle, "identity oracle instead of the model");
  evaluate->add_flag("--strict", ev.strict, "nonzero exit if any cover95 is below its band");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      if (sim_seed->count() == 0 && !cfg.contains("seed")) {
        std::cerr << "simulate: --seed is required\n";
        return 2;
      }
      return phylonbe::run_simulate(sim);
    }
    if (train_cmd->parsed() || finetune_cmd->parsed()) {
      const bool finetune = finetune_cmd->parsed();
      if ((finetune ? finetune_seed : train_seed)->count() == 0 && !cfg.contains("seed")) {
        std::cerr << (finetune ? "finetune" : "train") << ": --seed is required\n";
        return 2;
      }
      return phylonbe::run_train(tr, finetune);
    }
    if (predict->parsed()) {
      if (!times_text.empty()) pr.times = phylonbe::parse_grid(times_text);
      if (!taus_text.empty()) pr.taus = phylonbe::parse_grid(taus_text);
      if (pr.times.empty() || pr.taus.empty()) {
        std::cerr << "predict: --times and --taus are required\n";
        return 2;
      }
      return phylonbe::run_predict(pr);
    }
    if (evaluate->parsed()) return phylonbe::run_evaluate(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
