#include "phylonbe/model.hpp"

#include <fstream>

#include <json.hpp>

namespace phylonbe {

NbeModel make_model(const BtuConfig& btu_config, const PredConfig& pred_config, RngStream& rng) {
  const int n = btu_config.embedding_dim;
  if (n < 2) throw DimensionMismatch("embedding_dim must be >= 2");
  NbeModel model;
  model.btu_config = btu_config;
  model.pred_config = pred_config;
  model.btu = make_mlp(2 * n + 2, btu_config.hidden_width, btu_config.hidden_depth, n);
  model.pred = make_mlp(n + 4, pred_config.hidden_width, pred_config.hidden_depth, 3);
  init_default(model.btu, rng);
  init_default(model.pred, rng);
  return model;
}

namespace {

struct EmbedContext {
  const NbeModel& model;
  const ReconTree& tree;
  const std::vector<NodeContext>& contexts;
};

std::vector<double> embed_node(const EmbedContext& ctx, std::int32_t id) {
  const auto& node = ctx.tree.nodes[static_cast<std::size_t>(id)];
  const double h = ctx.contexts[static_cast<std::size_t>(id)].supertree_height;
  const double depth_ratio = ctx.contexts[static_cast<std::size_t>(id)].depth / h;
  const double branch_ratio =
      id == ctx.tree.root ? 0.0 : node.branch_length / h;  // BRANCH(root) = 0
  const int n = ctx.model.btu_config.embedding_dim;
  if (node.is_leaf()) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[0] = elu(depth_ratio);
    v[1] = elu(branch_ratio);
    return v;
  }
  const std::vector<double> left = embed_node(ctx, node.left);
  const std::vector<double> right = embed_node(ctx, node.right);
  std::vector<double> input;
  input.reserve(static_cast<std::size_t>(2 * n + 2));
  input.push_back(elu(depth_ratio));
  input.push_back(elu(branch_ratio));
  input.insert(input.end(), left.begin(), left.end());
  input.insert(input.end(), right.begin(), right.end());
  return forward(ctx.model.btu, input);
}

}  // namespace

std::vector<double> btu_embed(const NbeModel& model, const ReconTree& tree) {
  if (tree.empty()) throw DegenerateTree("empty tree");
  const int n = model.btu_config.embedding_dim;
  if (tree.nodes[static_cast<std::size_t>(tree.root)].is_leaf()) {
    // A lone root leaf has depth 0 and branch 0; no normalization needed.
    return std::vector<double>(static_cast<std::size_t>(n), 0.0);
  }
  if (!(height(tree) > 0.0)) throw DegenerateTree("zero height");
  const auto contexts = annotate_depths(tree);
  const EmbedContext ctx{model, tree, contexts};
  return embed_node(ctx, tree.root);
}

QuantileEstimate predict_with_embedding(const NbeModel& model, std::span<const double> embedding,
                                        double tree_height, double sigma_inv, double t,
                                        double tau) {
  std::vector<double> input(embedding.begin(), embedding.end());
  input.push_back(tree_height);
  input.push_back(sigma_inv / tree_height);
  input.push_back(t / tree_height);
  input.push_back(tau);
  const std::vector<double> y = forward(model.pred, input);
  return QuantileEstimate{softplus(y[0]), y[1], y[2]};
}

QuantileEstimate predict(const NbeModel& model, const ReconTree& tree, double sigma_inv, double t,
                         double tau) {
  if (tree.tip_count() < 2) throw DegenerateTree("estimator input needs at least two tips");
  const double h = height(tree);
  if (!(h > 0.0)) throw DegenerateTree("zero height");
  const std::vector<double> embedding = btu_embed(model, tree);
  return predict_with_embedding(model, embedding, h, sigma_inv, t, tau);
}

std::vector<QuantileEstimate> trajectory(const NbeModel& model, const ReconTree& tree,
                                         double sigma_inv, std::span<const double> times,
                                         std::span<const double> taus) {
  if (tree.tip_count() < 2) throw DegenerateTree("estimator input needs at least two tips");
  const double h = height(tree);
  if (!(h > 0.0)) throw DegenerateTree("zero height");
  const std::vector<double> embedding = btu_embed(model, tree);
  std::vector<QuantileEstimate> grid;
  grid.reserve(times.size() * taus.size());
  for (double t : times) {
    for (double tau : taus) {
      grid.push_back(predict_with_embedding(model, embedding, h, sigma_inv, t, tau));
    }
  }
  return grid;
}

ModelGrads zero_grads(const NbeModel& model) {
  return ModelGrads{zeros_like(model.btu), zeros_like(model.pred)};
}

namespace {

int tape_embed_node(GradTape& tape, const NbeModel& model, DenseNet* btu_sink,
                    const ReconTree& tree, const std::vector<NodeContext>& contexts,
                    std::int32_t id, double dropout_rate, RngStream* rng) {
  const auto& node = tree.nodes[static_cast<std::size_t>(id)];
  const double h = contexts[static_cast<std::size_t>(id)].supertree_height;
  const double depth_ratio = contexts[static_cast<std::size_t>(id)].depth / h;
  const double branch_ratio = id == tree.root ? 0.0 : node.branch_length / h;
  const int n = model.btu_config.embedding_dim;
  if (node.is_leaf()) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[0] = depth_ratio;
    v[1] = branch_ratio;
    return tape.elu(tape.input(v));
  }
  const int left = tape_embed_node(tape, model, btu_sink, tree, contexts, node.left, dropout_rate, rng);
  const int right = tape_embed_node(tape, model, btu_sink, tree, contexts, node.right, dropout_rate, rng);
  const int pair = tape.elu(tape.input({depth_ratio, branch_ratio}));
  const int cat = tape.concat({pair, left, right});
  return tape_mlp(tape, model.btu, btu_sink, cat, dropout_rate, rng);
}

}  // namespace

double record_loss(const NbeModel& model, const SimRecord& record, double tau, double dropout_rate,
                   RngStream* dropout_rng, double grad_scale, ModelGrads* grads, bool train_btu,
                   const std::vector<double>* cached_embedding, GradTape& tape) {
  tape.reset();
  const double t_h = height(record.tree);
  if (!(t_h > 0.0)) throw DegenerateTree("zero height");
  int embed_slot;
  if (cached_embedding != nullptr) {
    embed_slot = tape.input(*cached_embedding);
  } else {
    const auto contexts = annotate_depths(record.tree);
    DenseNet* btu_sink = grads != nullptr && train_btu ? &grads->btu : nullptr;
    embed_slot = tape_embed_node(tape, model, btu_sink, record.tree, contexts, record.tree.root,
                                 dropout_rate, dropout_rng);
  }
  const double sigma_inv = 1.0 / record.sigma;
  std::vector<int> losses;
  losses.reserve(record.measurements.size());
  for (const auto& m : record.measurements) {
    const int extras = tape.input({t_h, sigma_inv / t_h, m.t / t_h, tau});
    const int cat = tape.concat({embed_slot, extras});
    const int raw = tape_mlp(tape, model.pred, grads != nullptr ? &grads->pred : nullptr, cat,
                             dropout_rate, dropout_rng);
    const int estimate = tape.softplus_at(raw, 0);
    losses.push_back(tape.pinball3(estimate, m.targets(), tau));
  }
  const int total = tape.sum(losses);
  if (grads != nullptr) tape.backward(total, grad_scale);
  return tape.scalar(total);
}

double batch_loss(const NbeModel& model, std::span<const SimRecord> batch,
                  std::span<const double> taus, double dropout_rate, RngStream* dropout_rng) {
  if (batch.size() != taus.size()) {
    throw DimensionMismatch("batch_loss: one tau per record required");
  }
  GradTape tape;
  double total = 0.0;
  std::size_t points = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += record_loss(model, batch[i], taus[i], dropout_rate, dropout_rng, 1.0, nullptr, false,
                         nullptr, tape);
    points += batch[i].measurements.size();
  }
  return total / static_cast<double>(points);
}

namespace {

nlohmann::json layer_to_json(const DenseLayer& layer) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < layer.w.rows; ++i) {
    rows.push_back(std::vector<double>(layer.w.row(i), layer.w.row(i) + layer.w.cols));
  }
  return nlohmann::json{{"w", rows}, {"b", layer.b}};
}

nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& layer : net.layers) params.push_back(layer_to_json(layer));
  return nlohmann::json{{"arch", {{"dims", net.dims()}, {"activation", "elu"}}},
                        {"params", params}};
}

DenseNet net_from_json(const nlohmann::json& j) {
  DenseNet net;
  for (const auto& jl : j.at("params")) {
    const auto rows = jl.at("w").get<std::vector<std::vector<double>>>();
    DenseLayer layer;
    layer.w = Matrix(static_cast<int>(rows.size()), static_cast<int>(rows.at(0).size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw std::runtime_error("checkpoint: ragged weight matrix");
      std::copy(rows[i].begin(), rows[i].end(), layer.w.row(static_cast<int>(i)));
    }
    layer.b = jl.at("b").get<std::vector<double>>();
    if (layer.b.size() != rows.size()) throw std::runtime_error("checkpoint: bias/weight shape mismatch");
    net.layers.push_back(std::move(layer));
  }
  const auto dims = j.at("arch").at("dims").get<std::vector<int>>();
  if (dims != net.dims()) throw std::runtime_error("checkpoint: declared dims do not match parameters");
  return net;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NbeModel& model,
                     const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format"] = "nbe-checkpoint-v1";
  j["config"] = {{"embedding_dim", model.btu_config.embedding_dim},
                 {"g_hidden_depth", model.btu_config.hidden_depth},
                 {"g_hidden_width", model.btu_config.hidden_width},
                 {"h_hidden_depth", model.pred_config.hidden_depth},
                 {"h_hidden_width", model.pred_config.hidden_width},
                 {"channel_order", kChannelNames}};
  j["btu"] = net_to_json(model.btu);
  j["pred"] = net_to_json(model.pred);
  j["normalization"] = nlohmann::json::object();
  j["meta"] = {{"seed", meta.seed},
               {"epoch", meta.epoch},
               {"val_loss", meta.val_loss},
               {"target_means", model.target_means}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

NbeModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  in >> j;
  NbeModel model;
  const auto& config = j.at("config");
  model.btu_config.embedding_dim = config.at("embedding_dim").get<int>();
  model.btu_config.hidden_depth = config.at("g_hidden_depth").get<int>();
  model.btu_config.hidden_width = config.at("g_hidden_width").get<int>();
  model.pred_config.hidden_depth = config.at("h_hidden_depth").get<int>();
  model.pred_config.hidden_width = config.at("h_hidden_width").get<int>();
  model.btu = net_from_json(j.at("btu"));
  model.pred = net_from_json(j.at("pred"));
  const int n = model.btu_config.embedding_dim;
  if (model.btu.input_dim() != 2 * n + 2 || model.btu.output_dim() != n ||
      model.pred.input_dim() != n + 4 || model.pred.output_dim() != 3) {
    throw std::runtime_error("checkpoint: incompatible network dimensions");
  }
  const auto means = j.at("meta").at("target_means").get<std::vector<double>>();
  std::copy(means.begin(), means.end(), model.target_means.begin());
  if (meta != nullptr) {
    meta->seed = j.at("meta").at("seed").get<std::uint64_t>();
    meta->epoch = j.at("meta").at("epoch").get<int>();
    meta->val_loss = j.at("meta").at("val_loss").get<double>();
  }
  return model;
}

}  // namespace phylonbe
