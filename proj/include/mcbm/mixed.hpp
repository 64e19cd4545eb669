#pragma once

#include "mcbm/data.hpp"
#include "mcbm/probability_source.hpp"
#include "mcbm/tree.hpp"

#include <filesystem>
#include <map>
#include <optional>

namespace mcbm
{

/// How hard concept values are obtained at evaluation time: binarized
/// predictions, or human-annotated ground truth.
enum class ConceptMode
{
  predicted,
  annotated
};

/// Per-leaf concept matrix: soft probabilities on the concepts used by the
/// leaf's decision path, hard values everywhere else.
struct MixedConceptMatrix
{
  Matrix values;
  std::vector<FeatureKind> kinds;
};

MixedConceptMatrix build_mixed_matrix(const DecisionPath& path, const Matrix& hard, const Matrix& soft);

/// Subtrees must contain a soft split at least this informative to be kept.
inline constexpr double kMinLeakyGain = 1e-12;

/// Global hard tree plus leaky extensions for the leaves where soft
/// probabilities of the path's own concepts still separate the labels.
struct McbmModel
{
  DecisionTree global;
  std::vector<DecisionPath> paths;        // decompose(global)
  std::map<int, DecisionTree> subtrees;   // global leaf id -> extension
  std::optional<ProbabilitySource> source;
  ConceptSchema schema;
  SourceMode mode = SourceMode::sequential;
  int msl = 1;

  const DecisionPath& path_for_leaf(int leaf_id) const;
  bool is_extended(int leaf_id) const { return subtrees.count(leaf_id) != 0; }
};

/// Core fit from aligned hard concepts, probabilities and labels.
McbmModel fit_mcbm(const Matrix& hard, const Matrix& probs, const Labels& labels, const ConceptSchema& schema, int msl,
                   SourceMode mode = SourceMode::sequential);

/// Sub-tree phase alone: refits the extensions of `model.global`'s leaves.
void fit_subtrees(McbmModel& model, const Matrix& hard, const Matrix& probs, const Labels& labels);

/// Full fit: checks that the source's mode and calibration state match `mode`,
/// computes probabilities for `train` and keeps the source for evaluation.
McbmModel fit_mcbm(const Dataset& train, const ProbabilitySource& src, int msl, SourceMode mode);

struct Evaluation
{
  Labels predictions;
  std::vector<int> global_leaf; // leaf of the global tree reached by each row
};

/// `annotated` supplies ground-truth hard concepts; when null the
/// probabilities are binarized for routing and for non-path concepts.
Evaluation evaluate_detailed(const McbmModel& model, const Matrix& probs, const Matrix* annotated);
Labels evaluate(const McbmModel& model, const Matrix& probs, const Matrix* annotated = nullptr);
Labels evaluate(const McbmModel& model, const Dataset& test, ConceptMode mode = ConceptMode::predicted);

/// Feature layout of a merged tree: the k hard values followed by the k soft values.
Matrix merged_features(const Matrix& hard, const Matrix& probs);

/// Replaces each extended leaf by its subtree. Global splits read hard
/// columns; soft subtree splits read the soft half of merged_features.
DecisionTree merge(const McbmModel& model);

enum class BaselineVariant
{
  hard,
  independent,
  sequential_soft
};

const char* to_string(BaselineVariant v);

struct BaselineModel
{
  BaselineVariant variant = BaselineVariant::hard;
  DecisionTree tree;
};

BaselineModel fit_baseline(const Matrix& hard, const Matrix& probs, const Labels& labels, const ConceptSchema& schema,
                           int msl, BaselineVariant variant);

/// The tree input a baseline routes at test time.
Matrix baseline_inputs(const BaselineModel& model, const Matrix& probs, const Matrix* annotated,
                       const ConceptSchema& schema);
Labels predict_baseline(const BaselineModel& model, const Matrix& probs, const Matrix* annotated,
                        const ConceptSchema& schema);

nlohmann::json to_json(const McbmModel& model);
McbmModel mcbm_from_json(const nlohmann::json& j);

} // namespace mcbm
