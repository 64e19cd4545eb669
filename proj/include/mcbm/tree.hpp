#pragma once

#include "mcbm/data.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace mcbm
{

enum class FeatureKind
{
  hard,
  soft
};

/// A node of a binary decision tree. Internal nodes send a row left iff
/// row[feature] <= threshold. Every node keeps its training class counts.
struct TreeNode
{
  int id = 0;
  int depth = 0;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Eigen::VectorXi counts;
  int n_samples = 0;
  int predicted_class = 0;
  double gain = 0.0; // information gain of the split in bits; 0 for leaves

  bool is_leaf() const { return feature < 0; }
};

/// Nodes are stored in preorder; node ids are vector indices and nodes[0] is the root.
struct DecisionTree
{
  std::vector<TreeNode> nodes;
  int msl = 1;
  int n_classes = 2;
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> feature_kind;

  const TreeNode& root() const { return nodes.front(); }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int leaf_count() const;
  int depth() const;
  int num_features() const { return static_cast<int>(feature_kind.size()); }
  bool is_soft(int feature) const { return feature_kind[static_cast<std::size_t>(feature)] == FeatureKind::soft; }

  /// Structural invariants: child links, count conservation, msl, argmax labels.
  void validate() const;
};

struct TreeOptions
{
  int msl = 1;
  int max_depth = -1; // negative: unlimited
};

/// Greedy CART induction with the entropy criterion. Candidate thresholds are
/// midpoints between consecutive distinct values; a split is taken whenever
/// the node is impure and both children keep >= msl samples, even at zero
/// gain. Gain ties (within 1e-12 bits) go to the lower feature index, then
/// the lower threshold.
DecisionTree fit_tree(const Matrix& features, const Labels& labels, int n_classes, const TreeOptions& opts = {},
                      std::vector<std::string> feature_names = {}, std::vector<FeatureKind> feature_kind = {});

struct PathCondition
{
  int feature = 0;
  double threshold = 0.0;
  bool goes_left = true; // true: value <= threshold, false: value > threshold

  template<typename Derived> bool holds(const Eigen::DenseBase<Derived>& row) const
  {
    return goes_left ? row(feature) <= threshold : row(feature) > threshold;
  }
};

struct DecisionPath
{
  std::vector<PathCondition> conditions;
  int leaf_id = 0;
  std::vector<int> features; // distinct feature indices used on the path, ascending
  int n_samples = 0;
  Eigen::VectorXi counts;
  int predicted_class = 0;
};

/// One path per leaf, ordered by leaf id.
std::vector<DecisionPath> decompose(const DecisionTree& tree);

template<typename Derived> int route(const DecisionTree& tree, const Eigen::DenseBase<Derived>& row)
{
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    id = row(node.feature) <= node.threshold ? node.left : node.right;
  }
  return id;
}

std::vector<int> route_all(const DecisionTree& tree, const Matrix& features);
Labels predict(const DecisionTree& tree, const Matrix& features);

struct DotOptions
{
  std::vector<std::string> class_names;
  std::map<int, std::string> node_notes; // extra label line per node id
  std::string graph_name = "tree";
};

/// Graphviz rendering: hard-feature splits dark, soft-feature splits light and boxed.
std::string export_dot(const DecisionTree& tree, const DotOptions& opts = {});

nlohmann::json to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);

} // namespace mcbm
