#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phylonbe/sim.hpp"

namespace phylonbe {

// Command options are plain structs; every field has a config-file
// equivalent (same key, JSON) and a CLI flag. Each run writes its resolved
// configuration next to its outputs.

struct SimulateOptions {
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  int measurements = 10;  // J
  std::string model = "standard";  // standard | delayed-sampling
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int threads = 0;  // 0 -> hardware default, capped by NBE_THREADS
  int max_rejections = 10000;
  double prevalence_cap = 50000.0;
  int sample_cap = 1000;
  bool prior_check = false;  // 1e6-draw dry run of the prior marginals
  PriorConfig prior;
  DelayedSamplingConfig delayed;
};

struct TrainOptions {
  std::string data_dir;  // expects train.jsonl and val.jsonl
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int epochs = 250;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double dropout = 0.1;
  double tau_beta_a = 0.5;
  double tau_beta_b = 0.5;
  bool tau_per_batch = false;
  int embedding_dim = 50;
  int g_depth = 2;
  int g_width = 64;
  int h_depth = 3;
  int h_width = 128;
  std::string init_checkpoint;  // finetune: checkpoint to start from
  int threads = 0;
};

struct PredictOptions {
  std::string checkpoint;
  std::string newick_file;
  std::string out_file;  // empty -> stdout
  double sigma = 0.0;    // net becoming-uninfectious rate, per day
  std::vector<double> times;
  std::vector<double> taus;
};

struct EvaluateOptions {
  std::string checkpoint;
  std::string test_file;
  std::string out_dir = ".";
  bool oracle = false;  // identity oracle instead of the model, sanity mode
  bool strict = false;  // nonzero exit if any cover95 falls below its band
};

int run_simulate(const SimulateOptions& options);
int run_train(const TrainOptions& options, bool finetune);
int run_predict(const PredictOptions& options);
int run_evaluate(const EvaluateOptions& options);

// "lo:hi:n" linspace or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

}  // namespace phylonbe
