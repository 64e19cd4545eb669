#pragma once

#include "mcbm/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mcbm
{

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-12;

template<typename Scalar> Scalar sigmoid(Scalar z)
{
  // branch keeps exp() from overflowing for large |z|
  if (z >= Scalar(0)) {
    const Scalar e = std::exp(-z);
    return Scalar(1) / (Scalar(1) + e);
  }
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template<typename Scalar> Scalar clamp_prob(Scalar p)
{
  return std::clamp(p, Scalar(kProbClamp), Scalar(1) - Scalar(kProbClamp));
}

/// Numerically stable softmax of a vector expression.
template<typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& z)
{
  using Scalar = typename Derived::Scalar;
  const Scalar m = z.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

template<typename Derived> typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z)
{
  using Scalar = typename Derived::Scalar;
  const Scalar m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// Maps an n x k logit matrix to concept probabilities: sigmoid per
/// independent concept, softmax within each mutually exclusive group.
inline Matrix logits_to_probs(const Matrix& logits, const ConceptSchema& schema)
{
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (int j : schema.independents)
      probs(i, j) = sigmoid(logits(i, j));
    for (const auto& g : schema.groups) {
      Vector z(static_cast<Eigen::Index>(g.size()));
      for (std::size_t t = 0; t < g.size(); ++t)
        z(static_cast<Eigen::Index>(t)) = logits(i, g[t]);
      const Vector p = softmax(z);
      for (std::size_t t = 0; t < g.size(); ++t)
        probs(i, g[t]) = p(static_cast<Eigen::Index>(t));
    }
  }
  return probs;
}

/// Inverse of logits_to_probs up to a per-group additive constant
/// (log-odds for independents, log-probabilities within groups).
inline Matrix probs_to_logits(const Matrix& probs, const ConceptSchema& schema)
{
  Matrix logits(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (int j : schema.independents) {
      const double p = clamp_prob(probs(i, j));
      logits(i, j) = std::log(p) - std::log1p(-p);
    }
    for (const auto& g : schema.groups)
      for (int j : g)
        logits(i, j) = std::log(clamp_prob(probs(i, j)));
  }
  return logits;
}

} // namespace mcbm
