#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "phylonbe/rng.hpp"
#include "phylonbe/sim.hpp"
#include "phylonbe/tree.hpp"

namespace testsupport {

// Random binary topology: repeatedly split a random leaf; Exp(1) branches.
inline phylonbe::ReconTree random_tree(int tips, phylonbe::RngStream& rng) {
  using phylonbe::ReconTree;
  ReconTree tree;
  tree.nodes.push_back(ReconTree::Node{0.0, -1, -1, {}});
  tree.root = 0;
  std::vector<std::int32_t> leaves{0};
  for (int t = 1; t < tips; ++t) {
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(leaves.size()) - 1));
    const std::int32_t id = leaves[pick];
    ReconTree::Node left{rng.exponential(1.0), -1, -1, {}};
    ReconTree::Node right{rng.exponential(1.0), -1, -1, {}};
    tree.nodes.push_back(left);
    const auto left_id = static_cast<std::int32_t>(tree.nodes.size() - 1);
    tree.nodes.push_back(right);
    const auto right_id = static_cast<std::int32_t>(tree.nodes.size() - 1);
    tree.nodes[static_cast<std::size_t>(id)].left = left_id;
    tree.nodes[static_cast<std::size_t>(id)].right = right_id;
    leaves[pick] = left_id;
    leaves.push_back(right_id);
  }
  return tree;
}

inline phylonbe::ReconTree scaled_tree(const phylonbe::ReconTree& tree, double c) {
  phylonbe::ReconTree out = tree;
  for (auto& node : out.nodes) node.branch_length *= c;
  if (out.root >= 0) out.nodes[static_cast<std::size_t>(out.root)].branch_length = 0.0;
  return out;
}

inline bool trees_close(const phylonbe::ReconTree& a, const phylonbe::ReconTree& b, double tol,
                        bool compare_labels = false) {
  const std::function<bool(std::int32_t, std::int32_t)> eq = [&](std::int32_t ia, std::int32_t ib) {
    const auto& na = a.nodes[static_cast<std::size_t>(ia)];
    const auto& nb = b.nodes[static_cast<std::size_t>(ib)];
    if (na.is_leaf() != nb.is_leaf()) return false;
    if (std::abs(na.branch_length - nb.branch_length) > tol) return false;
    if (compare_labels && na.label != nb.label) return false;
    if (na.is_leaf()) return true;
    return eq(na.left, nb.left) && eq(na.right, nb.right);
  };
  return !a.empty() && !b.empty() && eq(a.root, b.root);
}

// Small, fast simulations for property tests.
inline phylonbe::SimulatorConfig toy_sim_config() {
  phylonbe::SimulatorConfig config;
  config.prior.t_stop_min = 6;
  config.prior.t_stop_max = 12;
  config.prior.sigma_log_mean = std::log(0.4);
  config.prior.sigma_log_sd = 0.1;
  config.prior.reff_log_mean = std::log(1.6);
  config.prior.reff_log_sd = 0.3;
  config.prior.p_psi_alpha = 2.0;
  config.prior.p_psi_beta = 4.0;
  config.sample_cap = 200;
  config.measurements_per_record = 5;
  return config;
}

// Transmission-tree path distance between two sampling events: both paths
// are followed lineage by lineage from the root; they share the deepest
// common lineage up to the earlier exit point.
inline double tt_sample_distance(const phylonbe::TransmissionTree& tt, std::int32_t a, std::int32_t b) {
  const auto chain = [&](std::int32_t leaf) {
    std::vector<std::int32_t> path;
    for (std::int32_t cur = leaf; cur >= 0; cur = tt.lineages[static_cast<std::size_t>(cur)].parent) {
      path.push_back(cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
  };
  const auto pa = chain(a);
  const auto pb = chain(b);
  std::size_t k = 0;
  while (k < pa.size() && k < pb.size() && pa[k] == pb[k]) ++k;
  const std::int32_t common = pa[k - 1];
  const auto exit_time = [&](const std::vector<std::int32_t>& path, std::size_t depth,
                             std::int32_t leaf) {
    if (depth < path.size()) {
      return tt.lineages[static_cast<std::size_t>(path[depth])].birth_time;
    }
    return tt.lineages[static_cast<std::size_t>(leaf)].end_time;  // sample on the common lineage
  };
  (void)common;
  const double ta = exit_time(pa, k, a);
  const double tb = exit_time(pb, k, b);
  const double t_div = std::min(ta, tb);
  const double sa = tt.lineages[static_cast<std::size_t>(a)].end_time;
  const double sb = tt.lineages[static_cast<std::size_t>(b)].end_time;
  return (sa - t_div) + (sb - t_div);
}

// Patristic distance between two tips of a ReconTree, by label.
inline double recon_tip_distance(const phylonbe::ReconTree& tree, const std::string& la,
                                 const std::string& lb) {
  const auto contexts = phylonbe::annotate_depths(tree);
  const auto parents = phylonbe::parent_map(tree);
  std::int32_t ia = -1, ib = -1;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].is_leaf() && tree.nodes[i].label == la) ia = static_cast<std::int32_t>(i);
    if (tree.nodes[i].is_leaf() && tree.nodes[i].label == lb) ib = static_cast<std::int32_t>(i);
  }
  std::vector<std::int32_t> pa;
  for (std::int32_t cur = ia; cur >= 0; cur = parents[static_cast<std::size_t>(cur)]) pa.push_back(cur);
  std::reverse(pa.begin(), pa.end());
  std::vector<std::int32_t> pb;
  for (std::int32_t cur = ib; cur >= 0; cur = parents[static_cast<std::size_t>(cur)]) pb.push_back(cur);
  std::reverse(pb.begin(), pb.end());
  std::size_t k = 0;
  while (k < pa.size() && k < pb.size() && pa[k] == pb[k]) ++k;
  const std::int32_t lca = pa[k - 1];
  return contexts[static_cast<std::size_t>(ia)].depth + contexts[static_cast<std::size_t>(ib)].depth -
         2.0 * contexts[static_cast<std::size_t>(lca)].depth;
}

// The Fig-1-style hand-encoded history used by the pruning tests: 13
// infections (12 transmissions + the index case), 6 samples, 4 deaths and 3
// lineages still infectious at the end of the 10-day window.
inline phylonbe::TransmissionTree fig1_history() {
  using phylonbe::Lineage;
  using phylonbe::LineageEnd;
  phylonbe::TransmissionTree tt;
  const auto add = [&](double birth, std::int32_t parent, double end, LineageEnd kind) {
    tt.lineages.push_back(Lineage{birth, parent, end, kind});
  };
  add(0.0, -1, 10.0, LineageEnd::extant_at_stop);  // 0: index case
  add(1.0, 0, 7.5, LineageEnd::sampling);          // 1
  add(2.0, 0, 5.2, LineageEnd::death);             // 2
  add(2.5, 1, 4.2, LineageEnd::sampling);          // 3
  add(3.0, 2, 10.0, LineageEnd::extant_at_stop);   // 4
  add(3.5, 3, 5.8, LineageEnd::sampling);          // 5
  add(4.0, 0, 9.0, LineageEnd::death);             // 6
  add(4.5, 4, 6.4, LineageEnd::sampling);          // 7
  add(5.0, 5, 7.2, LineageEnd::death);             // 8
  add(5.5, 6, 8.5, LineageEnd::sampling);          // 9
  add(6.0, 7, 7.8, LineageEnd::death);             // 10
  add(6.5, 8, 8.0, LineageEnd::sampling);          // 11
  add(7.0, 9, 10.0, LineageEnd::extant_at_stop);   // 12
  tt.end_time = 10.0;
  return tt;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("phylonbe_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline std::string slurp(const std::filesystem::path& p) {
  FILE* f = std::fopen(p.string().c_str(), "rb");
  if (f == nullptr) return {};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace testsupport
