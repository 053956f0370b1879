#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "phylonbe/sim.hpp"
#include "phylonbe/tree.hpp"
#include "support.hpp"

using namespace phylonbe;

TEST_CASE("height of a single leaf is zero") {
  CHECK(height(ReconTree::single_leaf("A")) == 0.0);
}

TEST_CASE("height is the maximum root-to-tip path") {
  CHECK(height(parse_newick("(A:1.0,B:2.0):0.0;")) == doctest::Approx(2.0));
  // all root-to-tip sums: A = 1+1 = 2, B = 1+1 = 2, C = 0.5
  CHECK(height(parse_newick("((A:1,B:1):1,C:0.5):0;")) == doctest::Approx(2.0));
}

TEST_CASE("parse_newick builds the expected structure") {
  const ReconTree tree = parse_newick("(A:1.0,B:2.0);");
  REQUIRE(tree.nodes.size() == 3);
  const auto& root = tree.nodes[static_cast<std::size_t>(tree.root)];
  CHECK(root.branch_length == 0.0);
  CHECK_FALSE(root.is_leaf());
  const auto& left = tree.nodes[static_cast<std::size_t>(root.left)];
  const auto& right = tree.nodes[static_cast<std::size_t>(root.right)];
  CHECK(left.label == "A");
  CHECK(left.branch_length == doctest::Approx(1.0));
  CHECK(right.label == "B");
  CHECK(right.branch_length == doctest::Approx(2.0));
  CHECK(tree.tip_count() == 2);
}

TEST_CASE("parse_newick rejects malformed input") {
  CHECK_THROWS_AS(parse_newick("(A:1.0,B:2.0,C:3.0);"), NonBinary);
  CHECK_THROWS_AS(parse_newick("(A:1.0);"), NonBinary);
  CHECK_THROWS_AS(parse_newick("(A:1.0,B:2.0)"), MalformedNewick);
  CHECK_THROWS_AS(parse_newick("(A:1.0,B:2.0;"), MalformedNewick);
  CHECK_THROWS_AS(parse_newick("(A:zzz,B:2.0);"), MalformedNewick);
  CHECK_THROWS_AS(parse_newick("(A:-1.0,B:2.0);"), NegativeBranch);
  CHECK_THROWS_AS(parse_newick("(A,B:1);"), MalformedNewick);   // missing non-root length
  CHECK_THROWS_AS(parse_newick("(A:1,B:1); junk"), MalformedNewick);
  CHECK_THROWS_AS(parse_newick("(:1.0,B:2.0);"), MalformedNewick);  // unnamed leaf
}

TEST_CASE("root branch length token is accepted but stored as zero") {
  const ReconTree tree = parse_newick("(A:1,B:2):5;");
  CHECK(tree.nodes[static_cast<std::size_t>(tree.root)].branch_length == 0.0);
}

TEST_CASE("serialize_newick canonical forms") {
  CHECK(serialize_newick(ReconTree::single_leaf("tip0")) == "tip0;");
  CHECK(serialize_newick(ReconTree::single_leaf()) == "tip0;");  // unnamed tips auto-label

  ReconTree cherry;
  cherry.nodes.push_back(ReconTree::Node{1.0, -1, -1, {}});
  cherry.nodes.push_back(ReconTree::Node{2.0, -1, -1, {}});
  cherry.nodes.push_back(ReconTree::Node{0.0, 0, 1, {}});
  cherry.root = 2;
  CHECK(serialize_newick(cherry) == "(tip0:1,tip1:2);");
}

TEST_CASE("parse/serialize round-trips simulated trees") {
  const SimulatorConfig config = testsupport::toy_sim_config();
  int done = 0;
  std::uint64_t seed = 0;
  while (done < 1000) {
    const SimRecord record = simulate_record(config, mix_seed(42, seed++));
    const std::string text = serialize_newick(record.tree);
    const ReconTree parsed = parse_newick(text);
    CHECK(testsupport::trees_close(record.tree, parsed, 1e-9, /*compare_labels=*/true));
    // bit-compatible after one serialize -> parse -> serialize cycle
    CHECK(serialize_newick(parsed) == text);
    // tip count == 1 + commas for binary trees
    const auto commas = std::count(text.begin(), text.end(), ',');
    CHECK(parsed.tip_count() == static_cast<int>(commas) + 1);
    ++done;
  }
}

TEST_CASE("annotate_depths assigns root depth zero and cumulative depths") {
  const ReconTree tree = parse_newick("(A:1.0,B:2.0);");
  const auto contexts = annotate_depths(tree);
  CHECK(contexts[static_cast<std::size_t>(tree.root)].depth == 0.0);
  const auto& root = tree.nodes[static_cast<std::size_t>(tree.root)];
  CHECK(contexts[static_cast<std::size_t>(root.left)].depth == doctest::Approx(1.0));
  CHECK(contexts[static_cast<std::size_t>(root.right)].depth == doctest::Approx(2.0));
  for (const auto& c : contexts) CHECK(c.supertree_height == doctest::Approx(2.0));
}

TEST_CASE("depth decomposes along branches on random trees") {
  RngStream rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const ReconTree tree = testsupport::random_tree(2 + static_cast<int>(rng.uniform_int(0, 30)), rng);
    const auto contexts = annotate_depths(tree);
    const auto parents = parent_map(tree);
    const double h = height(tree);
    double max_depth = 0.0;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto parent = parents[i];
      if (parent >= 0) {
        CHECK(contexts[i].depth ==
              doctest::Approx(contexts[static_cast<std::size_t>(parent)].depth +
                              tree.nodes[i].branch_length));
      }
      CHECK(contexts[i].depth >= 0.0);
      CHECK(contexts[i].depth <= h + 1e-9);
      max_depth = std::max(max_depth, contexts[i].depth);
    }
    CHECK(max_depth == doctest::Approx(h));
  }
}
