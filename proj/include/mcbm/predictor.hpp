#pragma once

#include "mcbm/data.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace mcbm
{

enum class Activation
{
  relu,
  tanh
};

/// Fully connected concept predictor x -> concept logits. weights[l] is
/// (fan_in x fan_out) so a batch forward pass is H * W + b^T.
struct MlpParams
{
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Activation activation = Activation::relu;

  std::vector<int> layer_sizes() const;
  Eigen::Index input_dim() const { return weights.front().rows(); }
  Eigen::Index output_dim() const { return weights.back().cols(); }
  Eigen::Index parameter_count() const;
  bool all_finite() const;

  bool operator==(const MlpParams&) const;
};

/// Linear label head used only by joint training: class logits = P * W + b^T.
struct LinearHead
{
  Matrix weight; // k x r
  Vector bias;   // r
};

struct TrainHyper
{
  int epochs = 30;
  int joint_epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  double lambda_c = 1.0;
  std::vector<int> hidden = {64};
  Activation activation = Activation::relu;
  bool warm_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

MlpParams init_mlp(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed);
MlpParams zero_mlp(const std::vector<int>& layer_sizes, Activation activation);

Matrix predict_logits(const MlpParams& params, const Matrix& X);
Matrix predict_probs(const MlpParams& params, const Matrix& X, const ConceptSchema& schema);

/// Mean over samples of (sum of BCE over independents + sum of CE over groups), nats.
double concept_loss(const MlpParams& params, const Matrix& X, const Matrix& C, const ConceptSchema& schema);
double concept_loss(const MlpParams& params, const Dataset& batch);

/// Mean label cross-entropy of head(sigma(f(x))) plus lambda_c * concept_loss.
double joint_loss(const MlpParams& params, const LinearHead& head, const Matrix& X, const Matrix& C, const Labels& Y,
                  const ConceptSchema& schema, double lambda_c);

/// Analytic gradient of the active objective: concept_loss when `head` is null,
/// joint_loss otherwise. Layout matches flatten_parameters.
struct LossGradient
{
  double loss = 0;
  Vector gradient;
};
LossGradient loss_gradient(const MlpParams& params, const LinearHead* head, const Matrix& X, const Matrix& C,
                           const Labels& Y, const ConceptSchema& schema, double lambda_c);

Vector flatten_parameters(const MlpParams& params, const LinearHead* head);
void unflatten_parameters(const Vector& flat, MlpParams& params, LinearHead* head);

/// Max over parameters of |g_a - g_n| / max(1, |g_a| + |g_n|) against central
/// differences with step 1e-5.
double gradient_check(const MlpParams& params, const LinearHead* head, const Matrix& X, const Matrix& C, const Labels& Y,
                      const ConceptSchema& schema, double lambda_c, double step = 1e-5);

MlpParams train_independent(const Dataset& train, const TrainHyper& hyper);

struct JointModel
{
  MlpParams mlp;
  LinearHead head;
};
JointModel train_joint(const Dataset& train, const TrainHyper& hyper);

/// Thresholding for independents (p > 0.5) and argmax for groups (ties to the lowest index).
Vector binarize(const Vector& probs, const ConceptSchema& schema);
Matrix binarize(const Matrix& probs, const ConceptSchema& schema);

void save_mlp(const MlpParams& params, const ConceptSchema& schema, const std::filesystem::path& path,
              const LinearHead* head = nullptr, const std::string& config_hash = {}, std::uint64_t seed = 0);
struct LoadedModel
{
  MlpParams mlp;
  std::optional<LinearHead> head;
};
LoadedModel load_mlp(const std::filesystem::path& path, const ConceptSchema& schema);

} // namespace mcbm
