#include "phylonbe/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

namespace phylonbe {

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(mix_seed(seed, a), b), c);
}

// Static partition so that results are identical for any worker count.
void run_partitioned(int n, int threads, const std::function<void(int, int)>& body) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

void accumulate(DenseNet& into, const DenseNet& from) {
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    auto& dst = into.layers[l];
    const auto& src = from.layers[l];
    for (std::size_t i = 0; i < dst.w.a.size(); ++i) dst.w.a[i] += src.w.a[i];
    for (std::size_t i = 0; i < dst.b.size(); ++i) dst.b[i] += src.b[i];
  }
}

void zero_net(DenseNet& net) {
  for (auto& layer : net.layers) {
    std::fill(layer.w.a.begin(), layer.w.a.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
}

std::array<double, 3> training_target_means(const std::vector<SimRecord>& data) {
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  std::size_t n = 0;
  for (const auto& record : data) {
    for (const auto& m : record.measurements) {
      const auto t = m.targets();
      for (int k = 0; k < 3; ++k) sums[static_cast<std::size_t>(k)] += t[static_cast<std::size_t>(k)];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("training data has no measurements");
  for (auto& s : sums) s /= static_cast<double>(n);
  return sums;
}

void init_output_layer(NbeModel& model, const std::array<double, 3>& means) {
  auto& last = model.pred.layers.back();
  std::fill(last.w.a.begin(), last.w.a.end(), 0.0);
  last.b[0] = softplus_inv(means[0]);  // softplus(bias) == mean reff
  last.b[1] = means[1];
  last.b[2] = means[2];
}

std::vector<std::vector<double>> cache_embeddings(const NbeModel& model,
                                                  const std::vector<SimRecord>& data, int threads) {
  std::vector<std::vector<double>> cache(data.size());
  run_partitioned(static_cast<int>(data.size()), threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      cache[static_cast<std::size_t>(i)] = btu_embed(model, data[static_cast<std::size_t>(i)].tree);
    }
  });
  return cache;
}

double validation_loss_impl(const NbeModel& model, const std::vector<SimRecord>& data,
                            std::span<const double> tau_grid, int threads,
                            const std::vector<std::vector<double>>* embed_cache) {
  std::vector<double> record_sums(data.size(), 0.0);
  run_partitioned(static_cast<int>(data.size()), threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const auto& record = data[static_cast<std::size_t>(i)];
      const std::vector<double>& embedding =
          embed_cache != nullptr ? (*embed_cache)[static_cast<std::size_t>(i)]
                                 : btu_embed(model, record.tree);
      const double t_h = height(record.tree);
      const double sigma_inv = 1.0 / record.sigma;
      double sum = 0.0;
      for (const auto& m : record.measurements) {
        const auto y = m.targets();
        for (double tau : tau_grid) {
          const QuantileEstimate q = predict_with_embedding(model, embedding, t_h, sigma_inv, m.t, tau);
          sum += pinball_loss(tau, q.q_reff, y[0]);
          sum += pinball_loss(tau, q.q_log10_prev, y[1]);
          sum += pinball_loss(tau, q.q_log10_cum, y[2]);
        }
      }
      record_sums[static_cast<std::size_t>(i)] = sum;
    }
  });
  double total = 0.0;
  std::size_t points = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += record_sums[i];
    points += data[i].measurements.size() * tau_grid.size();
  }
  return total / static_cast<double>(points);
}

}  // namespace

double validation_loss(const NbeModel& model, const std::vector<SimRecord>& data,
                       std::span<const double> tau_grid, int threads) {
  return validation_loss_impl(model, data, tau_grid, threads, nullptr);
}

TrainResult train(NbeModel model, const std::vector<SimRecord>& train_data,
                  const std::vector<SimRecord>& val_data, const TrainConfig& config) {
  if (train_data.empty() || val_data.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (config.batch_size < 1 || config.epochs < 1) {
    throw std::invalid_argument("train: batch_size and epochs must be >= 1");
  }
  const auto t_start = std::chrono::steady_clock::now();

  const bool train_btu = config.mode == TrainMode::full;

  // The mean-matching output initialization applies to fresh training only;
  // fine-tuning continues from the pretrained prediction unit.
  if (train_btu) {
    model.target_means = training_target_means(train_data);
    init_output_layer(model, model.target_means);
  }

  // Frozen embeddings never change, so fold each tree exactly once.
  std::vector<std::vector<double>> embed_cache;
  std::vector<std::vector<double>> val_embed_cache;
  if (!train_btu) {
    embed_cache = cache_embeddings(model, train_data, config.threads);
    val_embed_cache = cache_embeddings(model, val_data, config.threads);
  }

  RngStream order_rng(mix_seed(config.seed, 0x5eedULL));

  const int n_train = static_cast<int>(train_data.size());
  std::vector<int> order(static_cast<std::size_t>(n_train));
  for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;

  OptimizerState btu_opt = make_optimizer(model.btu, config.adamw);
  OptimizerState pred_opt = make_optimizer(model.pred, config.adamw);

  const int slots = config.batch_size;
  std::vector<ModelGrads> slot_grads;
  slot_grads.reserve(static_cast<std::size_t>(slots));
  for (int s = 0; s < slots; ++s) slot_grads.push_back(zero_grads(model));
  std::vector<double> slot_losses(static_cast<std::size_t>(slots), 0.0);
  ModelGrads total_grads = zero_grads(model);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  NbeModel best = model;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Fisher-Yates with our own stream; std::shuffle is implementation-defined.
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(order_rng.uniform_int(0, i));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double epoch_loss_sum = 0.0;
    std::size_t epoch_points = 0;
    const int n_batches = (n_train + config.batch_size - 1) / config.batch_size;
    for (int b = 0; b < n_batches; ++b) {
      const int begin = b * config.batch_size;
      const int end = std::min(n_train, begin + config.batch_size);
      const int batch_n = end - begin;

      std::vector<double> taus(static_cast<std::size_t>(batch_n));
      if (config.tau_per_batch) {
        const double tau = order_rng.beta(config.tau_beta_a, config.tau_beta_b);
        std::fill(taus.begin(), taus.end(), tau);
      } else {
        for (auto& tau : taus) tau = order_rng.beta(config.tau_beta_a, config.tau_beta_b);
      }

      std::size_t batch_points = 0;
      for (int s = 0; s < batch_n; ++s) {
        batch_points +=
            train_data[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + s)])]
                .measurements.size();
      }
      const double grad_scale = 1.0 / static_cast<double>(batch_points);

      run_partitioned(batch_n, config.threads, [&](int s_begin, int s_end) {
        GradTape tape;
        for (int s = s_begin; s < s_end; ++s) {
          const int rec_index = order[static_cast<std::size_t>(begin + s)];
          const auto& record = train_data[static_cast<std::size_t>(rec_index)];
          auto& grads = slot_grads[static_cast<std::size_t>(s)];
          if (train_btu) zero_net(grads.btu);
          zero_net(grads.pred);
          RngStream dropout_rng(derive(config.seed, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(b),
                                       static_cast<std::uint64_t>(rec_index)));
          const std::vector<double>* cached =
              train_btu ? nullptr : &embed_cache[static_cast<std::size_t>(rec_index)];
          slot_losses[static_cast<std::size_t>(s)] = record_loss(
              model, record, taus[static_cast<std::size_t>(s)], config.dropout_rate, &dropout_rng,
              grad_scale, &grads, train_btu, cached, tape);
        }
      });

      double batch_sum = 0.0;
      if (train_btu) zero_net(total_grads.btu);
      zero_net(total_grads.pred);
      for (int s = 0; s < batch_n; ++s) {
        batch_sum += slot_losses[static_cast<std::size_t>(s)];
        if (train_btu) accumulate(total_grads.btu, slot_grads[static_cast<std::size_t>(s)].btu);
        accumulate(total_grads.pred, slot_grads[static_cast<std::size_t>(s)].pred);
      }
      if (!std::isfinite(batch_sum)) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      epoch_loss_sum += batch_sum;
      epoch_points += batch_points;

      if (train_btu) adamw_step(model.btu, total_grads.btu, btu_opt);
      adamw_step(model.pred, total_grads.pred, pred_opt);
    }

    EpochStats stats;
    stats.train_loss = epoch_loss_sum / static_cast<double>(epoch_points);
    stats.val_loss = validation_loss_impl(model, val_data, config.val_tau_grid, config.threads,
                                          train_btu ? nullptr : &val_embed_cache);
    if (!std::isfinite(stats.val_loss)) {
      throw NonFiniteLoss("validation at epoch " + std::to_string(epoch));
    }
    result.curves.push_back(stats);

    if (stats.val_loss < result.best_val_loss) {
      result.best_val_loss = stats.val_loss;
      result.best_epoch = epoch;
      best = model;
    }
  }

  result.model = std::move(best);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

TrainResult fine_tune(NbeModel pretrained, const std::vector<SimRecord>& alt_train,
                      const std::vector<SimRecord>& alt_val, TrainConfig config) {
  config.mode = TrainMode::prediction_unit_only;
  return train(std::move(pretrained), alt_train, alt_val, config);
}

}  // namespace phylonbe
