#pragma once

// Reference tree builders used to cross-check fit_tree. Written for clarity,
// not speed: every candidate split is scored from scratch.

#include "mcbm/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

namespace oracle
{

using mcbm::Labels;
using mcbm::Matrix;

inline double entropy(const std::vector<int>& counts)
{
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  double h = 0;
  for (int c : counts)
    if (c > 0)
      h -= (c / n) * std::log2(c / n);
  return h;
}

inline std::vector<int> class_counts(const Labels& y, const std::vector<int>& rows, int r)
{
  std::vector<int> c(static_cast<std::size_t>(r), 0);
  for (int i : rows)
    ++c[static_cast<std::size_t>(y(i))];
  return c;
}

inline int majority(const std::vector<int>& counts)
{
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

struct Split
{
  int feature = -1;
  double threshold = 0;
};

// One node of the reference greedy tree, flattened in preorder.
struct Node
{
  Split split;
  int prediction = 0;
};

// Greedy entropy tree with the documented conventions: midpoint thresholds,
// "<= goes left", split only impure nodes with both children >= msl, a later
// candidate wins only by more than 1e-12 bits.
class GreedyTree
{
public:
  GreedyTree(const Matrix& F, const Labels& y, int r, int msl) : F_(F), y_(y), r_(r), msl_(msl)
  {
    std::vector<int> all(static_cast<std::size_t>(F.rows()));
    std::iota(all.begin(), all.end(), 0);
    grow(all);
  }

  const std::vector<Node>& nodes() const { return nodes_; }

  int predict(const Eigen::RowVectorXd& row) const
  {
    std::size_t i = 0;
    while (nodes_[i].split.feature >= 0) {
      const bool left = row(nodes_[i].split.feature) <= nodes_[i].split.threshold;
      i = left ? i + 1 : static_cast<std::size_t>(skip(i + 1));
    }
    return nodes_[i].prediction;
  }

  int training_correct() const
  {
    int ok = 0;
    for (Eigen::Index i = 0; i < F_.rows(); ++i)
      ok += predict(F_.row(i)) == y_(i);
    return ok;
  }

private:
  // index just past the subtree rooted at i
  int skip(std::size_t i) const
  {
    if (nodes_[i].split.feature < 0)
      return static_cast<int>(i) + 1;
    return skip(static_cast<std::size_t>(skip(i + 1)));
  }

  void grow(const std::vector<int>& rows)
  {
    const auto counts = class_counts(y_, rows, r_);
    Node node;
    node.prediction = majority(counts);
    const std::size_t at = nodes_.size();
    nodes_.push_back(node);
    const bool pure = *std::max_element(counts.begin(), counts.end()) == static_cast<int>(rows.size());
    if (pure || static_cast<int>(rows.size()) < 2 * msl_)
      return;

    const double parent = entropy(counts);
    double best_gain = -1;
    Split best;
    for (int f = 0; f < F_.cols(); ++f) {
      std::set<double> values;
      for (int i : rows)
        values.insert(F_(i, f));
      std::vector<double> v(values.begin(), values.end());
      for (std::size_t t = 0; t + 1 < v.size(); ++t) {
        // midpoint written as v + gap / 2, falling back to v when it rounds up to the next value
        double thr = v[t] + (v[t + 1] - v[t]) / 2.0;
        if (!(thr < v[t + 1]))
          thr = v[t];
        std::vector<int> l, rr;
        for (int i : rows)
          (F_(i, f) <= thr ? l : rr).push_back(i);
        if (static_cast<int>(l.size()) < msl_ || static_cast<int>(rr.size()) < msl_)
          continue;
        const double n = static_cast<double>(rows.size());
        const double gain = parent - l.size() / n * entropy(class_counts(y_, l, r_)) -
                            rr.size() / n * entropy(class_counts(y_, rr, r_));
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = {f, thr};
        }
      }
    }
    if (best.feature < 0)
      return;
    nodes_[at].split = best;
    std::vector<int> l, rr;
    for (int i : rows)
      (F_(i, best.feature) <= best.threshold ? l : rr).push_back(i);
    grow(l);
    grow(rr);
  }

  const Matrix& F_;
  const Labels& y_;
  int r_;
  int msl_;
  std::vector<Node> nodes_;
};

// Best training accuracy (number of correct rows) reachable by any binary
// tree whose leaves all hold >= msl rows, over binary features.
inline int optimal_correct(const Matrix& F, const Labels& y, const std::vector<int>& rows, int r, int msl)
{
  const auto counts = class_counts(y, rows, r);
  const int maj = *std::max_element(counts.begin(), counts.end());
  if (maj == static_cast<int>(rows.size()) || static_cast<int>(rows.size()) < 2 * msl)
    return maj;
  int best = maj;
  for (int f = 0; f < F.cols(); ++f) {
    std::vector<int> l, rr;
    for (int i : rows)
      (F(i, f) <= 0.5 ? l : rr).push_back(i);
    if (static_cast<int>(l.size()) < msl || static_cast<int>(rr.size()) < msl)
      continue;
    best = std::max(best, optimal_correct(F, y, l, r, msl) + optimal_correct(F, y, rr, r, msl));
  }
  return best;
}

} // namespace oracle
