#include "phylonbe/tree.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

namespace phylonbe {

int ReconTree::tip_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
  return n;
}

ReconTree ReconTree::single_leaf(std::string label) {
  ReconTree t;
  t.nodes.push_back(Node{0.0, -1, -1, std::move(label)});
  t.root = 0;
  return t;
}

double height(const ReconTree& tree) {
  if (tree.empty()) return 0.0;
  double best = 0.0;
  // (node, accumulated depth) stack; the root's own branch does not count.
  std::vector<std::pair<std::int32_t, double>> stack{{tree.root, 0.0}};
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      if (depth > best) best = depth;
    } else {
      const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
      const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
      stack.emplace_back(node.left, depth + l.branch_length);
      stack.emplace_back(node.right, depth + r.branch_length);
    }
  }
  return best;
}

std::vector<NodeContext> annotate_depths(const ReconTree& tree) {
  std::vector<NodeContext> out(tree.nodes.size());
  const double h = height(tree);
  std::vector<std::pair<std::int32_t, double>> stack{{tree.root, 0.0}};
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    out[static_cast<std::size_t>(id)] = NodeContext{depth, h};
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    if (!node.is_leaf()) {
      const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
      const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
      stack.emplace_back(node.left, depth + l.branch_length);
      stack.emplace_back(node.right, depth + r.branch_length);
    }
  }
  return out;
}

std::vector<std::int32_t> parent_map(const ReconTree& tree) {
  std::vector<std::int32_t> parent(tree.nodes.size(), -1);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    if (!node.is_leaf()) {
      parent[static_cast<std::size_t>(node.left)] = static_cast<std::int32_t>(i);
      parent[static_cast<std::size_t>(node.right)] = static_cast<std::int32_t>(i);
    }
  }
  return parent;
}

namespace {

bool is_label_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  ReconTree parse() {
    skip_ws();
    const std::int32_t root = parse_subtree(/*at_root=*/true);
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != ';') throw MalformedNewick("missing ';'");
    ++pos_;
    skip_ws();
    if (pos_ != text_.size()) throw MalformedNewick("trailing characters after ';'");
    tree_.root = root;
    // BRANCH(root) is zero by definition; any explicit root length was
    // validated for sign above and is dropped here.
    tree_.nodes[static_cast<std::size_t>(root)].branch_length = 0.0;
    return std::move(tree_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  ReconTree tree_;

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  std::int32_t parse_subtree(bool at_root) {
    skip_ws();
    ReconTree::Node node;
    if (peek() == '(') {
      ++pos_;
      std::vector<std::int32_t> children;
      children.push_back(parse_subtree(false));
      skip_ws();
      while (peek() == ',') {
        ++pos_;
        children.push_back(parse_subtree(false));
        skip_ws();
      }
      if (peek() != ')') throw MalformedNewick("unbalanced parentheses");
      ++pos_;
      if (children.size() != 2) {
        throw NonBinary("node with " + std::to_string(children.size()) + " children");
      }
      node.left = children[0];
      node.right = children[1];
    } else if (!is_label_char(peek())) {
      throw MalformedNewick(std::string("unexpected character '") + peek() + "'");
    }
    skip_ws();
    node.label = parse_label();
    skip_ws();
    bool has_length = false;
    if (peek() == ':') {
      ++pos_;
      node.branch_length = parse_length();
      has_length = true;
    }
    if (node.is_leaf() && node.label.empty()) {
      throw MalformedNewick("leaf without a label");
    }
    if (!at_root && !has_length) {
      throw MalformedNewick("missing branch length on a non-root edge");
    }
    if (node.branch_length < 0.0) {
      throw NegativeBranch(std::to_string(node.branch_length));
    }
    tree_.nodes.push_back(std::move(node));
    return static_cast<std::int32_t>(tree_.nodes.size() - 1);
  }

  std::string parse_label() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_label_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  double parse_length() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '+' ||
            text_[pos_] == '-' || text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
    }
    if (pos_ == start) throw MalformedNewick("expected a branch length after ':'");
    const std::string token(text_.substr(start, pos_ - start));
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(value)) {
      throw MalformedNewick("non-numeric branch length '" + token + "'");
    }
    return value;
  }
};

void format_length(std::string& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

void serialize_node(const ReconTree& tree, std::int32_t id, bool at_root, int& tip_counter,
                    std::string& out) {
  const auto& node = tree.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) {
    if (node.label.empty()) {
      out += "tip" + std::to_string(tip_counter);
    } else {
      out += node.label;
    }
    ++tip_counter;
  } else {
    out += '(';
    serialize_node(tree, node.left, false, tip_counter, out);
    out += ',';
    serialize_node(tree, node.right, false, tip_counter, out);
    out += ')';
    out += node.label;
  }
  if (!at_root) {
    out += ':';
    format_length(out, node.branch_length);
  }
}

}  // namespace

ReconTree parse_newick(std::string_view text) {
  return NewickParser(text).parse();
}

std::string serialize_newick(const ReconTree& tree) {
  std::string out;
  out.reserve(tree.nodes.size() * 12);
  int tip_counter = 0;
  serialize_node(tree, tree.root, true, tip_counter, out);
  out += ';';
  return out;
}

}  // namespace phylonbe
