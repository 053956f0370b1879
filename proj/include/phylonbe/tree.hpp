#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phylonbe {

struct MalformedNewick : std::runtime_error {
  explicit MalformedNewick(const std::string& what) : std::runtime_error("malformed newick: " + what) {}
};

struct NonBinary : std::runtime_error {
  explicit NonBinary(const std::string& what) : std::runtime_error("non-binary tree: " + what) {}
};

struct NegativeBranch : std::runtime_error {
  explicit NegativeBranch(const std::string& what) : std::runtime_error("negative branch length: " + what) {}
};

// Raised when a tree cannot be fed to the estimator (zero height, or fewer
// than two tips where the conditioning requires them).
struct DegenerateTree : std::runtime_error {
  explicit DegenerateTree(const std::string& what) : std::runtime_error("degenerate tree: " + what) {}
};

// Rooted binary tree with branch lengths. Nodes live in a flat vector and
// refer to children by index; a tree is immutable once built and safe to
// share across threads read-only.
struct ReconTree {
  struct Node {
    double branch_length = 0.0;  // length of the edge to the parent; 0 at the root
    std::int32_t left = -1;      // -1 on leaves
    std::int32_t right = -1;
    std::string label;           // opaque; tips usually named, internals usually not

    bool is_leaf() const { return left < 0; }
  };

  std::vector<Node> nodes;
  std::int32_t root = -1;

  bool empty() const { return nodes.empty(); }
  int tip_count() const;

  static ReconTree single_leaf(std::string label = {});
};

// Depth (distance from the root) plus the height of the whole tree, for
// every node. The root has depth 0.
struct NodeContext {
  double depth = 0.0;
  double supertree_height = 0.0;
};

// Maximum root-to-tip path length; 0 for a single leaf.
double height(const ReconTree& tree);

// Parses a rooted binary Newick string with branch lengths on every non-root
// edge. Tip and internal labels are preserved as opaque strings. A branch
// length on the root is accepted in the input but the stored root branch is
// always zero. Throws MalformedNewick, NonBinary or NegativeBranch.
ReconTree parse_newick(std::string_view text);

// Canonical form: children left-then-right, lengths with 12 significant
// digits, root branch length omitted, terminated by ';'. Unnamed tips are
// emitted as tip0, tip1, ... in left-to-right order.
std::string serialize_newick(const ReconTree& tree);

// Depth and supertree height for every node, indexed by node id.
std::vector<NodeContext> annotate_depths(const ReconTree& tree);

// Parent of each node by id; -1 at the root.
std::vector<std::int32_t> parent_map(const ReconTree& tree);

}  // namespace phylonbe
