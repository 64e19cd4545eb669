#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcbm
{

/// Shannon entropy, in bits, of the class distribution given by `counts`.
template<typename Derived> double entropy_bits(const Eigen::DenseBase<Derived>& counts)
{
  double total = 0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts(i) < 0)
      throw std::invalid_argument("entropy_bits: negative count");
    total += static_cast<double>(counts(i));
  }
  if (total <= 0)
    throw std::invalid_argument("entropy_bits: all counts are zero");
  double h = 0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts(i) > 0) {
      const double p = static_cast<double>(counts(i)) / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

/// Information gain of splitting `parent` into `left` and `right`, in bits:
/// H(parent) - (|left|/|parent|) H(left) - (|right|/|parent|) H(right).
/// This is the per-split leakage of a soft-concept split.
template<typename P, typename L, typename R>
double split_leakage(const Eigen::DenseBase<P>& parent, const Eigen::DenseBase<L>& left, const Eigen::DenseBase<R>& right)
{
  if (parent.size() != left.size() || parent.size() != right.size())
    throw std::invalid_argument("split_leakage: count vectors differ in length");
  double n = 0, nl = 0, nr = 0;
  for (Eigen::Index i = 0; i < parent.size(); ++i) {
    if (left(i) + right(i) != parent(i))
      throw std::invalid_argument("split_leakage: children counts do not sum to parent counts");
    n += static_cast<double>(parent(i));
    nl += static_cast<double>(left(i));
    nr += static_cast<double>(right(i));
  }
  const double h_parent = entropy_bits(parent);
  const double h_left = nl > 0 ? entropy_bits(left) : 0.0;
  const double h_right = nr > 0 ? entropy_bits(right) : 0.0;
  // concavity makes the exact value >= 0; rounding may not
  return std::max(0.0, h_parent - (nl / n * h_left + nr / n * h_right));
}

} // namespace mcbm
