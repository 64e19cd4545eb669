#include "mcbm/leakage.hpp"
#include "mcbm/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcbm
{

std::vector<LeakySplit> leaky_splits(const DecisionTree& subtree, const ConceptSchema& schema)
{
  std::vector<LeakySplit> out;
  for (const auto& n : subtree.nodes) {
    if (n.is_leaf() || !subtree.is_soft(n.feature))
      continue;
    const auto& l = subtree.nodes[static_cast<std::size_t>(n.left)].counts;
    const auto& r = subtree.nodes[static_cast<std::size_t>(n.right)].counts;
    const double bits = split_leakage(n.counts, l, r);
    if (bits != n.gain)
      throw std::logic_error("leakage: stored split gain disagrees with recomputed information gain");
    out.push_back({n.id, n.feature, schema.concepts[static_cast<std::size_t>(n.feature)], n.threshold, bits});
  }
  return out;
}

double accuracy(const Labels& predicted, const Labels& truth)
{
  if (truth.size() == 0)
    return 0.0;
  return static_cast<double>((predicted.array() == truth.array()).count()) / static_cast<double>(truth.size());
}

double concept_accuracy(const Matrix& probs, const Matrix& truth, const ConceptSchema& schema)
{
  if (probs.rows() == 0 || probs.cols() == 0)
    return 1.0;
  const Matrix bin = binarize(probs, schema);
  return static_cast<double>((bin.array() == truth.array()).count()) / static_cast<double>(bin.size());
}

RuleReplay replay_rules(const DecisionTree& tree, const Matrix& tree_inputs, const Labels& model_predictions,
                        const Labels& truth)
{
  const auto paths = decompose(tree);
  Eigen::Index correct = 0, agree = 0;
  for (Eigen::Index i = 0; i < tree_inputs.rows(); ++i) {
    const DecisionPath* match = nullptr;
    for (const auto& p : paths) {
      const bool fires = std::all_of(p.conditions.begin(), p.conditions.end(),
                                     [&](const PathCondition& c) { return c.holds(tree_inputs.row(i)); });
      if (!fires)
        continue;
      if (match)
        throw std::logic_error("rule replay: row " + std::to_string(i) + " satisfies more than one decision rule");
      match = &p;
    }
    if (!match)
      throw std::logic_error("rule replay: row " + std::to_string(i) + " satisfies no decision rule");
    correct += match->predicted_class == truth(i);
    agree += match->predicted_class == model_predictions(i);
  }
  const double n = static_cast<double>(std::max<Eigen::Index>(1, tree_inputs.rows()));
  return {static_cast<double>(correct) / n, tree_inputs.rows() ? static_cast<double>(agree) / n : 1.0};
}

static void require_full_fidelity(const RuleReplay& r)
{
  if (r.fidelity != 1.0)
    throw std::logic_error("tree predictor fidelity is " + std::to_string(r.fidelity) + ", expected exactly 1");
}

StandardMetrics standard_metrics(const McbmModel& model, const Matrix& probs, const Matrix& concepts, const Labels& truth,
                                 ConceptMode mode)
{
  const Matrix hard = mode == ConceptMode::annotated ? concepts : binarize(probs, model.schema);
  const Labels pred = evaluate(model, probs, &hard);
  const RuleReplay replay = replay_rules(merge(model), merged_features(hard, probs), pred, truth);
  require_full_fidelity(replay);
  return {accuracy(pred, truth), concept_accuracy(probs, concepts, model.schema), replay.explanation_accuracy,
          replay.fidelity};
}

StandardMetrics standard_metrics(const BaselineModel& model, const Matrix& probs, const Matrix& concepts,
                                 const Labels& truth, const ConceptSchema& schema, ConceptMode mode)
{
  const Matrix* annotated = mode == ConceptMode::annotated ? &concepts : nullptr;
  const Matrix inputs = baseline_inputs(model, probs, annotated, schema);
  const Labels pred = predict(model.tree, inputs);
  const RuleReplay replay = replay_rules(model.tree, inputs, pred, truth);
  require_full_fidelity(replay);
  return {accuracy(pred, truth), concept_accuracy(probs, concepts, schema), replay.explanation_accuracy,
          replay.fidelity};
}

LeakageReport path_report(const McbmModel& model, const Matrix& test_probs, const Matrix& test_concepts,
                          const Labels& test_labels, ConceptMode mode)
{
  LeakageReport report;
  const Matrix hard = mode == ConceptMode::annotated ? test_concepts : binarize(test_probs, model.schema);
  const Evaluation eval = evaluate_detailed(model, test_probs, &hard);

  for (const auto& path : model.paths) {
    PathRow row;
    row.path_id = path.leaf_id;
    row.n_train = path.n_samples;
    Eigen::Index hard_ok = 0, mcbm_ok = 0;
    for (Eigen::Index i = 0; i < test_labels.size(); ++i) {
      if (eval.global_leaf[static_cast<std::size_t>(i)] != path.leaf_id)
        continue;
      ++row.n_test;
      hard_ok += path.predicted_class == test_labels(i);
      mcbm_ok += eval.predictions(i) == test_labels(i);
    }
    if (row.n_test > 0) {
      row.hard_accuracy = static_cast<double>(hard_ok) / row.n_test;
      row.mcbm_accuracy = static_cast<double>(mcbm_ok) / row.n_test;
    }
    if (auto it = model.subtrees.find(path.leaf_id); it != model.subtrees.end())
      row.leaky_splits = leaky_splits(it->second, model.schema);
    for (const auto& s : row.leaky_splits)
      report.total_leakage_bits += s.bits;
    report.n_extended_paths += row.leaky_splits.empty() ? 0 : 1;
    report.rows.push_back(std::move(row));
  }

  const RuleReplay replay = replay_rules(merge(model), merged_features(hard, test_probs), eval.predictions, test_labels);
  require_full_fidelity(replay);
  report.metrics = {accuracy(eval.predictions, test_labels), concept_accuracy(test_probs, test_concepts, model.schema),
                    replay.explanation_accuracy, replay.fidelity};
  return report;
}

LeakageReport path_report(const McbmModel& model, const Dataset& train, const Dataset& test, ConceptMode mode)
{
  if (!model.source)
    throw std::invalid_argument("path_report: model has no probability source attached");
  LeakageReport report = path_report(model, model.source->probs(test), test.C, test.Y, mode);
  // training rows are assigned by their annotated concepts, as during fitting
  const auto train_leaves = route_all(model.global, train.C);
  for (auto& row : report.rows)
    row.n_train = static_cast<int>(std::count(train_leaves.begin(), train_leaves.end(), row.path_id));
  return report;
}

nlohmann::json to_json(const StandardMetrics& m)
{
  return {{"task_accuracy", m.task_accuracy},
          {"concept_accuracy", m.concept_accuracy},
          {"explanation_accuracy", m.explanation_accuracy},
          {"fidelity", m.fidelity}};
}

nlohmann::json to_json(const LeakageReport& report)
{
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json splits = nlohmann::json::array();
    for (const auto& s : r.leaky_splits)
      splits.push_back({{"node", s.node}, {"concept", s.concept_name}, {"threshold", s.threshold}, {"bits", s.bits}});
    rows.push_back({{"path_id", r.path_id},
                    {"n_train", r.n_train},
                    {"n_test", r.n_test},
                    {"hard_accuracy", r.hard_accuracy ? nlohmann::json(*r.hard_accuracy) : nlohmann::json(nullptr)},
                    {"mcbm_accuracy", r.mcbm_accuracy ? nlohmann::json(*r.mcbm_accuracy) : nlohmann::json(nullptr)},
                    {"leaky_splits", splits}});
  }
  nlohmann::json totals = to_json(report.metrics);
  totals["total_leakage_bits"] = report.total_leakage_bits;
  totals["n_extended_paths"] = report.n_extended_paths;
  return {{"rows", rows}, {"totals", totals}};
}

std::string render_table(const LeakageReport& report)
{
  auto pct = [](const std::optional<double>& v) {
    if (!v)
      return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %8s %8s %10s %10s  %s\n", "Path", "n_train", "n_test", "Hard Acc%",
                "MCBM Acc%", "IG (bits)");
  out << line;
  for (const auto& r : report.rows) {
    std::string igs;
    for (const auto& s : r.leaky_splits) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s%s<=%.3f: %.3f", igs.empty() ? "" : ", ", s.concept_name.c_str(), s.threshold,
                    s.bits);
      igs += buf;
    }
    std::snprintf(line, sizeof(line), "%-6d %8d %8d %10s %10s  ", r.path_id, r.n_train, r.n_test,
                  pct(r.hard_accuracy).c_str(), pct(r.mcbm_accuracy).c_str());
    out << line << (igs.empty() ? "-" : igs) << '\n';
  }
  std::snprintf(line, sizeof(line),
                "\ntotal leakage %.6f bits over %d extended paths; task %.2f%%, concept %.2f%%, explanation %.2f%%, "
                "fidelity %.2f%%\n",
                report.total_leakage_bits, report.n_extended_paths, 100 * report.metrics.task_accuracy,
                100 * report.metrics.concept_accuracy, 100 * report.metrics.explanation_accuracy,
                100 * report.metrics.fidelity);
  out << line;
  return out.str();
}

static std::vector<double> average_ranks(const std::vector<double>& v)
{
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b)
{
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equally sized samples of length >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const Eigen::Map<const Vector> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Vector> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Vector dx = x.array() - x.mean(), dy = y.array() - y.mean();
  const double denom = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  return denom > 0 ? dx.dot(dy) / denom : 0.0;
}

} // namespace mcbm
