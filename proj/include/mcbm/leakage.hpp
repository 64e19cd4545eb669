#pragma once

#include "mcbm/information.hpp"
#include "mcbm/mixed.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mcbm
{

/// One soft-concept split of a leaf's extension and the bits it leaks.
struct LeakySplit
{
  int node = 0;          // node id inside the subtree
  int concept_index = 0;
  std::string concept_name;
  double threshold = 0.0;
  double bits = 0.0;
};

struct PathRow
{
  int path_id = 0; // global leaf id
  int n_train = 0;
  int n_test = 0;
  std::optional<double> hard_accuracy; // empty when the path has no test samples
  std::optional<double> mcbm_accuracy;
  std::vector<LeakySplit> leaky_splits;
};

struct StandardMetrics
{
  double task_accuracy = 0.0;
  double concept_accuracy = 0.0;
  double explanation_accuracy = 0.0;
  double fidelity = 0.0;
};

struct LeakageReport
{
  std::vector<PathRow> rows;
  double total_leakage_bits = 0.0;
  int n_extended_paths = 0;
  StandardMetrics metrics;
};

/// Soft-column splits of one subtree, with IG recomputed from stored training counts.
std::vector<LeakySplit> leaky_splits(const DecisionTree& subtree, const ConceptSchema& schema);

/// Accuracy of decision paths replayed as explicit rule predicates, and the
/// fraction of rows where the replayed rule agrees with `model_predictions`.
/// Throws std::logic_error when a row satisfies no rule or several rules.
struct RuleReplay
{
  double explanation_accuracy = 0.0;
  double fidelity = 0.0;
};
RuleReplay replay_rules(const DecisionTree& tree, const Matrix& tree_inputs, const Labels& model_predictions,
                        const Labels& truth);

/// Mean per-concept accuracy of binarized predictions against ground truth.
double concept_accuracy(const Matrix& probs, const Matrix& truth, const ConceptSchema& schema);

double accuracy(const Labels& predicted, const Labels& truth);

/// Task, concept, explanation accuracy and fidelity for a fitted MCBM on
/// (probs, C, Y). Fidelity below 1 is reported as a std::logic_error.
StandardMetrics standard_metrics(const McbmModel& model, const Matrix& probs, const Matrix& concepts, const Labels& truth,
                                 ConceptMode mode = ConceptMode::predicted);
StandardMetrics standard_metrics(const BaselineModel& model, const Matrix& probs, const Matrix& concepts,
                                 const Labels& truth, const ConceptSchema& schema,
                                 ConceptMode mode = ConceptMode::predicted);

/// Per-path accuracies and leakage. Test rows are assigned to global paths by
/// routing their hard concepts (binarized predictions or annotations).
LeakageReport path_report(const McbmModel& model, const Matrix& test_probs, const Matrix& test_concepts,
                          const Labels& test_labels, ConceptMode mode = ConceptMode::predicted);
LeakageReport path_report(const McbmModel& model, const Dataset& train, const Dataset& test,
                          ConceptMode mode = ConceptMode::predicted);

nlohmann::json to_json(const LeakageReport& report);
nlohmann::json to_json(const StandardMetrics& metrics);

/// Plain-text table: Path, Hard Acc%, MCBM Acc%, IG list.
std::string render_table(const LeakageReport& report);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

} // namespace mcbm
