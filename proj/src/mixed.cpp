#include "mcbm/mixed.hpp"

#include <stdexcept>

namespace mcbm
{

const DecisionPath& McbmModel::path_for_leaf(int leaf_id) const
{
  auto it = std::lower_bound(paths.begin(), paths.end(), leaf_id,
                             [](const DecisionPath& p, int id) { return p.leaf_id < id; });
  if (it == paths.end() || it->leaf_id != leaf_id)
    throw std::out_of_range("mcbm: no decision path ends at node " + std::to_string(leaf_id));
  return *it;
}

MixedConceptMatrix build_mixed_matrix(const DecisionPath& path, const Matrix& hard, const Matrix& soft)
{
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols())
    throw std::invalid_argument("build_mixed_matrix: hard and soft matrices differ in shape");
  MixedConceptMatrix out{hard, std::vector<FeatureKind>(static_cast<std::size_t>(hard.cols()), FeatureKind::hard)};
  for (int k : path.features) {
    if (k < 0 || k >= hard.cols())
      throw std::invalid_argument("build_mixed_matrix: path concept index out of range");
    out.values.col(k) = soft.col(k);
    out.kinds[static_cast<std::size_t>(k)] = FeatureKind::soft;
  }
  return out;
}

static bool has_leaky_split(const DecisionTree& tree)
{
  for (const auto& n : tree.nodes)
    if (!n.is_leaf() && tree.is_soft(n.feature) && n.gain > kMinLeakyGain)
      return true;
  return false;
}

void fit_subtrees(McbmModel& model, const Matrix& hard, const Matrix& probs, const Labels& labels)
{
  const int msl = model.msl;
  const ConceptSchema& schema = model.schema;
  model.subtrees.clear();
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(model.global.node_count()));
  const auto leaves = route_all(model.global, hard);
  for (Eigen::Index i = 0; i < hard.rows(); ++i)
    members[static_cast<std::size_t>(leaves[static_cast<std::size_t>(i)])].push_back(i);

  for (const auto& path : model.paths) {
    const auto& rows = members[static_cast<std::size_t>(path.leaf_id)];
    const TreeNode& leaf = model.global.nodes[static_cast<std::size_t>(path.leaf_id)];
    if ((leaf.counts.array() > 0).count() < 2 || static_cast<int>(rows.size()) < 2 * msl)
      continue; // pure or too small: no split can be taken
    const Matrix hard_m = hard(rows, Eigen::all);
    const Matrix soft_m = probs(rows, Eigen::all);
    const Labels y_m = labels(rows);
    MixedConceptMatrix mixed = build_mixed_matrix(path, hard_m, soft_m);
    DecisionTree sub = fit_tree(mixed.values, y_m, schema.num_classes(), {msl, -1}, schema.concepts, mixed.kinds);
    if (has_leaky_split(sub))
      model.subtrees.emplace(path.leaf_id, std::move(sub));
  }
}

McbmModel fit_mcbm(const Matrix& hard, const Matrix& probs, const Labels& labels, const ConceptSchema& schema, int msl,
                   SourceMode mode)
{
  if (hard.rows() != labels.size() || probs.rows() != labels.size())
    throw std::invalid_argument("fit_mcbm: row counts differ");
  if (hard.cols() != schema.num_concepts() || probs.cols() != schema.num_concepts())
    throw std::invalid_argument("fit_mcbm: concept width does not match schema");

  McbmModel model;
  model.schema = schema;
  model.mode = mode;
  model.msl = msl;
  model.global = fit_tree(hard, labels, schema.num_classes(), {msl, -1}, schema.concepts);
  model.paths = decompose(model.global);

  fit_subtrees(model, hard, probs, labels);
  return model;
}

McbmModel fit_mcbm(const Dataset& train, const ProbabilitySource& src, int msl, SourceMode mode)
{
  if (src.mode() != mode)
    throw std::invalid_argument(std::string("fit_mcbm: ") + to_string(mode) + " fitting requires a " + to_string(mode) +
                                " probability source, got " + to_string(src.mode()));
  if (mode == SourceMode::sequential && !src.calibrated())
    throw std::invalid_argument("fit_mcbm: sequential mode requires calibrated concept probabilities");
  if (mode == SourceMode::joint && src.calibration())
    throw std::invalid_argument("fit_mcbm: joint mode requires uncalibrated concept probabilities");
  if (!(src.schema() == train.schema))
    throw std::invalid_argument("fit_mcbm: probability source schema differs from dataset schema");
  McbmModel model = fit_mcbm(train.C, src.probs(train), train.Y, train.schema, msl, mode);
  model.source = src;
  return model;
}

Evaluation evaluate_detailed(const McbmModel& model, const Matrix& probs, const Matrix* annotated)
{
  Matrix hard;
  if (annotated) {
    if (annotated->rows() != probs.rows() || annotated->cols() != probs.cols())
      throw std::invalid_argument("evaluate: annotated concepts differ in shape from probabilities");
    hard = *annotated;
  } else {
    hard = binarize(probs, model.schema);
  }

  Evaluation out;
  out.predictions.resize(probs.rows());
  out.global_leaf.resize(static_cast<std::size_t>(probs.rows()));
  Vector mixed(probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int leaf = route(model.global, hard.row(i));
    out.global_leaf[static_cast<std::size_t>(i)] = leaf;
    auto it = model.subtrees.find(leaf);
    if (it == model.subtrees.end()) {
      out.predictions(i) = model.global.nodes[static_cast<std::size_t>(leaf)].predicted_class;
      continue;
    }
    mixed = hard.row(i).transpose();
    for (int k : model.path_for_leaf(leaf).features)
      mixed(k) = probs(i, k);
    const DecisionTree& sub = it->second;
    out.predictions(i) = sub.nodes[static_cast<std::size_t>(route(sub, mixed))].predicted_class;
  }
  return out;
}

Labels evaluate(const McbmModel& model, const Matrix& probs, const Matrix* annotated)
{
  return evaluate_detailed(model, probs, annotated).predictions;
}

Labels evaluate(const McbmModel& model, const Dataset& test, ConceptMode mode)
{
  if (!model.source)
    throw std::invalid_argument("evaluate: model has no probability source attached");
  const Matrix probs = model.source->probs(test);
  if (mode == ConceptMode::annotated) {
    if (test.C.rows() != test.size() || test.C.cols() != test.schema.num_concepts())
      throw std::invalid_argument("evaluate: annotated mode requires ground-truth concepts");
    return evaluate(model, probs, &test.C);
  }
  return evaluate(model, probs, nullptr);
}

Matrix merged_features(const Matrix& hard, const Matrix& probs)
{
  Matrix out(hard.rows(), hard.cols() + probs.cols());
  out << hard, probs;
  return out;
}

namespace
{

struct Merger
{
  const McbmModel& model;
  int k;
  std::vector<TreeNode> out;

  // Appends `src` node `id` (and its subtree) in preorder; returns the new id.
  int copy_subtree(const DecisionTree& src, int id, int depth, bool remap_soft)
  {
    const TreeNode& node = src.nodes[static_cast<std::size_t>(id)];
    const int new_id = static_cast<int>(out.size());
    TreeNode copy = node;
    copy.id = new_id;
    copy.depth = depth;
    if (!node.is_leaf() && remap_soft && src.is_soft(node.feature))
      copy.feature = node.feature + k;
    out.push_back(copy);
    if (node.is_leaf())
      return new_id;
    const int l = copy_subtree(src, node.left, depth + 1, remap_soft);
    const int r = copy_subtree(src, node.right, depth + 1, remap_soft);
    out[static_cast<std::size_t>(new_id)].left = l;
    out[static_cast<std::size_t>(new_id)].right = r;
    return new_id;
  }

  int copy_global(int id)
  {
    const TreeNode& node = model.global.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      if (auto it = model.subtrees.find(id); it != model.subtrees.end())
        return copy_subtree(it->second, 0, node.depth, true);
    }
    const int new_id = static_cast<int>(out.size());
    TreeNode copy = node;
    copy.id = new_id;
    out.push_back(copy);
    if (node.is_leaf())
      return new_id;
    const int l = copy_global(node.left);
    const int r = copy_global(node.right);
    out[static_cast<std::size_t>(new_id)].left = l;
    out[static_cast<std::size_t>(new_id)].right = r;
    return new_id;
  }
};

} // namespace

DecisionTree merge(const McbmModel& model)
{
  const ConceptSchema& schema = model.schema;
  const int k = schema.num_concepts();
  DecisionTree merged;
  merged.msl = model.msl;
  merged.n_classes = model.global.n_classes;
  merged.feature_names = schema.concepts;
  for (const auto& c : schema.concepts)
    merged.feature_names.push_back("p(" + c + ")");
  merged.feature_kind.assign(static_cast<std::size_t>(k), FeatureKind::hard);
  merged.feature_kind.resize(static_cast<std::size_t>(2 * k), FeatureKind::soft);
  Merger m{model, k, {}};
  m.copy_global(0);
  merged.nodes = std::move(m.out);
  return merged;
}

const char* to_string(BaselineVariant v)
{
  switch (v) {
  case BaselineVariant::hard:
    return "hard";
  case BaselineVariant::independent:
    return "independent";
  case BaselineVariant::sequential_soft:
    return "sequential_soft";
  }
  return "unknown";
}

BaselineModel fit_baseline(const Matrix& hard, const Matrix& probs, const Labels& labels, const ConceptSchema& schema,
                           int msl, BaselineVariant variant)
{
  BaselineModel model;
  model.variant = variant;
  if (variant == BaselineVariant::sequential_soft) {
    model.tree = fit_tree(probs, labels, schema.num_classes(), {msl, -1}, schema.concepts,
                          std::vector<FeatureKind>(static_cast<std::size_t>(schema.num_concepts()), FeatureKind::soft));
  } else {
    // hard and independent CBMs share one tree trained on ground-truth concepts
    model.tree = fit_tree(hard, labels, schema.num_classes(), {msl, -1}, schema.concepts);
  }
  return model;
}

Matrix baseline_inputs(const BaselineModel& model, const Matrix& probs, const Matrix* annotated,
                       const ConceptSchema& schema)
{
  if (model.variant == BaselineVariant::hard)
    return annotated ? *annotated : binarize(probs, schema);
  return probs;
}

Labels predict_baseline(const BaselineModel& model, const Matrix& probs, const Matrix* annotated,
                        const ConceptSchema& schema)
{
  return predict(model.tree, baseline_inputs(model, probs, annotated, schema));
}

nlohmann::json to_json(const McbmModel& model)
{
  nlohmann::json subs = nlohmann::json::object();
  for (const auto& [leaf, tree] : model.subtrees)
    subs[std::to_string(leaf)] = to_json(tree);
  return {{"global_tree", to_json(model.global)},
          {"subtrees", subs},
          {"schema",
           {{"concepts", model.schema.concepts},
            {"groups", model.schema.groups},
            {"independents", model.schema.independents},
            {"classes", model.schema.classes}}},
          {"mode", to_string(model.mode)},
          {"msl", model.msl}};
}

McbmModel mcbm_from_json(const nlohmann::json& j)
{
  McbmModel model;
  const auto& js = j.at("schema");
  model.schema.concepts = js.at("concepts").get<std::vector<std::string>>();
  model.schema.groups = js.at("groups").get<std::vector<std::vector<int>>>();
  model.schema.independents = js.at("independents").get<std::vector<int>>();
  model.schema.classes = js.at("classes").get<std::vector<std::string>>();
  model.schema.validate();
  model.global = tree_from_json(j.at("global_tree"));
  model.paths = decompose(model.global);
  model.mode = parse_source_mode(j.at("mode").get<std::string>());
  model.msl = j.at("msl").get<int>();
  for (const auto& [leaf, tree] : j.at("subtrees").items()) {
    const int id = std::stoi(leaf);
    const TreeNode& node = model.global.nodes.at(static_cast<std::size_t>(id));
    if (!node.is_leaf())
      throw std::runtime_error("mcbm bundle: subtree attached to a non-leaf node " + leaf);
    DecisionTree sub = tree_from_json(tree);
    if (sub.root().n_samples != node.n_samples || sub.msl != model.msl)
      throw std::runtime_error("mcbm bundle: subtree " + leaf + " does not match its global leaf");
    model.subtrees.emplace(id, std::move(sub));
  }
  return model;
}

} // namespace mcbm
