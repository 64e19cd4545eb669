#include "mcbm/tree.hpp"
#include "mcbm/information.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcbm
{

int DecisionTree::leaf_count() const
{
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int DecisionTree::depth() const
{
  int d = 0;
  for (const auto& n : nodes)
    d = std::max(d, n.depth);
  return d;
}

static int argmax_lowest(const Eigen::VectorXi& counts)
{
  int best = 0;
  for (int c = 1; c < counts.size(); ++c)
    if (counts(c) > counts(best))
      best = c;
  return best;
}

void DecisionTree::validate() const
{
  if (nodes.empty())
    throw std::logic_error("tree: no nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.id != static_cast<int>(i))
      throw std::logic_error("tree: node id does not match position");
    if (n.counts.size() != n_classes || n.counts.sum() != n.n_samples)
      throw std::logic_error("tree: class counts inconsistent at node " + std::to_string(i));
    if (n.predicted_class != argmax_lowest(n.counts))
      throw std::logic_error("tree: predicted class is not the count argmax at node " + std::to_string(i));
    if (n.is_leaf()) {
      if (n.n_samples < msl && i != 0)
        throw std::logic_error("tree: leaf " + std::to_string(i) + " has fewer than msl samples");
      continue;
    }
    if (n.feature >= num_features())
      throw std::logic_error("tree: split feature out of range at node " + std::to_string(i));
    if (n.left <= n.id || n.right <= n.id || n.left >= node_count() || n.right >= node_count())
      throw std::logic_error("tree: bad child links at node " + std::to_string(i));
    const TreeNode& l = nodes[static_cast<std::size_t>(n.left)];
    const TreeNode& r = nodes[static_cast<std::size_t>(n.right)];
    if (l.counts + r.counts != n.counts)
      throw std::logic_error("tree: children counts do not sum to parent at node " + std::to_string(i));
    if (l.depth != n.depth + 1 || r.depth != n.depth + 1)
      throw std::logic_error("tree: depth inconsistent at node " + std::to_string(i));
    if (l.n_samples < msl || r.n_samples < msl)
      throw std::logic_error("tree: child below msl at node " + std::to_string(i));
    if (!(n.gain >= 0))
      throw std::logic_error("tree: negative split gain at node " + std::to_string(i));
  }
}

namespace
{

constexpr double kGainTieTolerance = 1e-12;

// count * log2(count), with 0 log 0 = 0
inline double xlog2x(double c)
{
  return c > 0 ? c * std::log2(c) : 0.0;
}

struct SplitChoice
{
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Task
{
  IndexList rows;
  int parent = -1;
  bool is_left = false;
  int depth = 0;
};

class TreeBuilder
{
public:
  TreeBuilder(const Matrix& F, const Labels& Y, int n_classes, const TreeOptions& opts)
    : F_(F), Y_(Y), r_(n_classes), opts_(opts)
  {}

  std::vector<TreeNode> build()
  {
    std::vector<TreeNode> nodes;
    std::vector<Task> stack;
    IndexList all(static_cast<std::size_t>(Y_.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    stack.push_back({std::move(all), -1, false, 0});

    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();

      TreeNode node;
      node.id = static_cast<int>(nodes.size());
      node.depth = task.depth;
      node.counts = Eigen::VectorXi::Zero(r_);
      for (auto i : task.rows)
        ++node.counts(Y_(i));
      node.n_samples = static_cast<int>(task.rows.size());
      node.predicted_class = argmax_lowest(node.counts);
      if (task.parent >= 0)
        (task.is_left ? nodes[static_cast<std::size_t>(task.parent)].left : nodes[static_cast<std::size_t>(task.parent)].right) =
          node.id;

      SplitChoice choice = may_split(node, task.depth) ? best_split(task.rows, node.counts) : SplitChoice{};
      if (choice.feature < 0) {
        nodes.push_back(std::move(node));
        continue;
      }

      IndexList left_rows, right_rows;
      Eigen::VectorXi lc = Eigen::VectorXi::Zero(r_);
      for (auto i : task.rows) {
        if (F_(i, choice.feature) <= choice.threshold) {
          left_rows.push_back(i);
          ++lc(Y_(i));
        } else {
          right_rows.push_back(i);
        }
      }
      node.feature = choice.feature;
      node.threshold = choice.threshold;
      node.gain = split_leakage(node.counts, lc, Eigen::VectorXi(node.counts - lc));
      const int id = node.id;
      nodes.push_back(std::move(node));
      // right first so the left subtree is numbered first (preorder)
      stack.push_back({std::move(right_rows), id, false, task.depth + 1});
      stack.push_back({std::move(left_rows), id, true, task.depth + 1});
    }
    return nodes;
  }

private:
  bool may_split(const TreeNode& node, int depth) const
  {
    if (opts_.max_depth >= 0 && depth >= opts_.max_depth)
      return false;
    if (node.n_samples < 2 * opts_.msl)
      return false;
    return (node.counts.array() > 0).count() > 1;
  }

  SplitChoice best_split(const IndexList& rows, const Eigen::VectorXi& counts) const
  {
    const auto m = static_cast<Eigen::Index>(rows.size());
    const double n = static_cast<double>(m);
    double parent_sum = 0;
    for (int c = 0; c < r_; ++c)
      parent_sum += xlog2x(counts(c));
    const double h_parent = std::log2(n) - parent_sum / n;

    SplitChoice best;
    double best_gain = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, int>> column(rows.size());
    Eigen::VectorXd left(r_);

    for (Eigen::Index f = 0; f < F_.cols(); ++f) {
      for (std::size_t t = 0; t < rows.size(); ++t)
        column[t] = {F_(rows[t], f), Y_(rows[t])};
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first)
        continue;

      left.setZero();
      double left_sum = 0; // sum of xlog2x over left counts, kept incrementally
      double right_sum = parent_sum;
      for (Eigen::Index t = 0; t + 1 < m; ++t) {
        const int y = column[static_cast<std::size_t>(t)].second;
        const double before_left = left(y);
        const double before_right = counts(y) - before_left;
        left_sum += xlog2x(before_left + 1) - xlog2x(before_left);
        right_sum += xlog2x(before_right - 1) - xlog2x(before_right);
        left(y) += 1;

        const double v = column[static_cast<std::size_t>(t)].first;
        const double next = column[static_cast<std::size_t>(t + 1)].first;
        if (v == next)
          continue;
        const Eigen::Index nl = t + 1;
        const Eigen::Index nr = m - nl;
        if (nl < opts_.msl || nr < opts_.msl)
          continue;
        const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
        const double children = (xlog2x(dl) - left_sum + xlog2x(dr) - right_sum) / n;
        const double gain = h_parent - children;
        if (gain > best_gain + kGainTieTolerance) {
          double thr = v + (next - v) / 2.0;
          if (!(thr < next))
            thr = v;
          best_gain = gain;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    if (best.feature >= 0 && best_gain < -kGainTieTolerance)
      return {};
    return best;
  }

  const Matrix& F_;
  const Labels& Y_;
  int r_;
  TreeOptions opts_;
};

} // namespace

DecisionTree fit_tree(const Matrix& features, const Labels& labels, int n_classes, const TreeOptions& opts,
                      std::vector<std::string> feature_names, std::vector<FeatureKind> feature_kind)
{
  if (opts.msl < 1)
    throw std::invalid_argument("fit_tree: msl must be >= 1");
  if (features.rows() != labels.size())
    throw std::invalid_argument("fit_tree: feature and label row counts differ");
  if (labels.size() == 0)
    throw std::invalid_argument("fit_tree: empty training set");
  if (opts.msl > labels.size())
    throw std::invalid_argument("fit_tree: msl (" + std::to_string(opts.msl) + ") exceeds sample count (" +
                                std::to_string(labels.size()) + ")");
  if (n_classes < 1 || labels.minCoeff() < 0 || labels.maxCoeff() >= n_classes)
    throw std::invalid_argument("fit_tree: labels out of range");
  if (!features.allFinite())
    throw std::invalid_argument("fit_tree: non-finite feature value");
  if (feature_kind.empty())
    feature_kind.assign(static_cast<std::size_t>(features.cols()), FeatureKind::hard);
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      feature_names.push_back("c" + std::to_string(j));
  if (static_cast<Eigen::Index>(feature_kind.size()) != features.cols() ||
      static_cast<Eigen::Index>(feature_names.size()) != features.cols())
    throw std::invalid_argument("fit_tree: feature metadata width does not match feature matrix");

  DecisionTree tree;
  tree.msl = opts.msl;
  tree.n_classes = n_classes;
  tree.feature_names = std::move(feature_names);
  tree.feature_kind = std::move(feature_kind);
  tree.nodes = TreeBuilder(features, labels, n_classes, opts).build();
  return tree;
}

std::vector<DecisionPath> decompose(const DecisionTree& tree)
{
  std::vector<DecisionPath> paths;
  std::vector<std::pair<int, std::vector<PathCondition>>> stack{{0, {}}};
  while (!stack.empty()) {
    auto [id, conds] = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      DecisionPath p;
      p.leaf_id = id;
      p.n_samples = node.n_samples;
      p.counts = node.counts;
      p.predicted_class = node.predicted_class;
      for (const auto& c : conds)
        p.features.push_back(c.feature);
      std::sort(p.features.begin(), p.features.end());
      p.features.erase(std::unique(p.features.begin(), p.features.end()), p.features.end());
      p.conditions = std::move(conds);
      paths.push_back(std::move(p));
      continue;
    }
    auto right = conds;
    right.push_back({node.feature, node.threshold, false});
    conds.push_back({node.feature, node.threshold, true});
    stack.emplace_back(node.right, std::move(right));
    stack.emplace_back(node.left, std::move(conds));
  }
  std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) { return a.leaf_id < b.leaf_id; });
  return paths;
}

std::vector<int> route_all(const DecisionTree& tree, const Matrix& features)
{
  if (features.cols() != tree.num_features())
    throw std::invalid_argument("route: feature width does not match tree");
  std::vector<int> leaves(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    leaves[static_cast<std::size_t>(i)] = route(tree, features.row(i));
  return leaves;
}

Labels predict(const DecisionTree& tree, const Matrix& features)
{
  const auto leaves = route_all(tree, features);
  Labels out(features.rows());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) = tree.nodes[static_cast<std::size_t>(leaves[static_cast<std::size_t>(i)])].predicted_class;
  return out;
}

static std::string dot_escape(const std::string& s)
{
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\')
      out += '\\';
    out += ch;
  }
  return out;
}

std::string export_dot(const DecisionTree& tree, const DotOptions& opts)
{
  std::ostringstream out;
  out << "digraph " << opts.graph_name << " {\n";
  out << "  node [fontname=\"Helvetica\", style=\"filled\"];\n";
  out << "  edge [fontname=\"Helvetica\"];\n";
  auto class_name = [&](int c) {
    return c < static_cast<int>(opts.class_names.size()) ? opts.class_names[static_cast<std::size_t>(c)]
                                                          : "class " + std::to_string(c);
  };
  for (const auto& n : tree.nodes) {
    std::vector<std::string> lines;
    if (n.is_leaf())
      lines.push_back(class_name(n.predicted_class));
    else
      lines.push_back(tree.feature_names[static_cast<std::size_t>(n.feature)] + " <= " + format_double(n.threshold));
    lines.push_back("n = " + std::to_string(n.n_samples));
    std::string counts = "[";
    for (Eigen::Index c = 0; c < n.counts.size(); ++c)
      counts += (c ? ", " : "") + std::to_string(n.counts(c));
    lines.push_back(counts + "]");
    if (auto it = opts.node_notes.find(n.id); it != opts.node_notes.end())
      lines.push_back(it->second);

    out << "  n" << n.id << " [label=\"";
    for (std::size_t i = 0; i < lines.size(); ++i)
      out << (i ? "\\n" : "") << dot_escape(lines[i]);
    out << "\"";
    if (n.is_leaf())
      out << ", shape=ellipse, fillcolor=\"white\"";
    else if (tree.is_soft(n.feature))
      out << ", shape=box, fillcolor=\"gray90\"";
    else
      out << ", shape=ellipse, fillcolor=\"gray35\", fontcolor=\"white\"";
    out << "];\n";
  }
  for (const auto& n : tree.nodes) {
    if (n.is_leaf())
      continue;
    out << "  n" << n.id << " -> n" << n.left << " [label=\"yes\"];\n";
    out << "  n" << n.id << " -> n" << n.right << " [label=\"no\"];\n";
  }
  out << "}\n";
  return out.str();
}

nlohmann::json to_json(const DecisionTree& tree)
{
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nlohmann::json j = {{"id", n.id},
                        {"kind", n.is_leaf() ? "leaf" : "split"},
                        {"depth", n.depth},
                        {"n", n.n_samples},
                        {"counts", std::vector<int>(n.counts.data(), n.counts.data() + n.counts.size())}};
    if (!n.is_leaf()) {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["gain"] = n.gain;
      j["children"] = {n.left, n.right};
    }
    nodes.push_back(std::move(j));
  }
  std::vector<std::string> kinds;
  for (auto k : tree.feature_kind)
    kinds.emplace_back(k == FeatureKind::soft ? "soft" : "hard");
  return {{"msl", tree.msl},
          {"n_classes", tree.n_classes},
          {"feature_names", tree.feature_names},
          {"feature_kind", kinds},
          {"nodes", nodes}};
}

DecisionTree tree_from_json(const nlohmann::json& j)
{
  DecisionTree tree;
  tree.msl = j.at("msl").get<int>();
  tree.n_classes = j.at("n_classes").get<int>();
  tree.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& k : j.at("feature_kind"))
    tree.feature_kind.push_back(k == "soft" ? FeatureKind::soft : FeatureKind::hard);
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.id = jn.at("id").get<int>();
    n.depth = jn.at("depth").get<int>();
    n.n_samples = jn.at("n").get<int>();
    const auto counts = jn.at("counts").get<std::vector<int>>();
    n.counts = Eigen::Map<const Eigen::VectorXi>(counts.data(), static_cast<Eigen::Index>(counts.size()));
    n.predicted_class = argmax_lowest(n.counts);
    if (jn.at("kind") == "split") {
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.gain = jn.at("gain").get<double>();
      n.left = jn.at("children").at(0).get<int>();
      n.right = jn.at("children").at(1).get<int>();
    }
    tree.nodes.push_back(std::move(n));
  }
  tree.validate();
  return tree;
}

} // namespace mcbm
