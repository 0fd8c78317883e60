#pragma once

// Axis-aligned multi-output regression trees with l1/box-constrained leaves.
//
// A MultiTree with p leaves maps x in R^d to the leaf row w_{t(x)} in R^q, where
// every leaf row satisfies ||w_l||_1 <= tau and ||w_l||_inf <= 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mobound/detail/parallel.hpp"
#include "mobound/errors.hpp"
#include "mobound/matrix.hpp"

namespace mobound {

inline constexpr double kConstraintSlack = 1e-12;

/// Euclidean projection of v onto {w : ||w||_1 <= tau, ||w||_inf <= 1}.
///
/// The solution has the form w_j = sign(v_j) * clamp(|v_j| - mu, 0, 1) with the
/// smallest mu >= 0 meeting the l1 budget; mu is located on the sorted
/// breakpoints of the piecewise-linear budget function.
inline std::vector<double> project_l1_box(std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  for (double x : v)
    if (!std::isfinite(x)) throw DataError("projection input must be finite");

  auto mass = [&](double mu) {
    double s = 0.0;
    for (double x : v) s += std::clamp(std::abs(x) - mu, 0.0, 1.0);
    return s;
  };
  auto shrink = [&](double mu) {
    std::vector<double> w(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double m = std::clamp(std::abs(v[j]) - mu, 0.0, 1.0);
      w[j] = v[j] < 0.0 ? -m : m;
    }
    return w;
  };

  if (mass(0.0) <= tau + 1e-14 * std::max(1.0, tau)) return shrink(0.0);

  std::vector<double> breaks{0.0};
  for (double x : v) {
    const double a = std::abs(x);
    breaks.push_back(a);
    if (a > 1.0) breaks.push_back(a - 1.0);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  // mass() is non-increasing; find the segment where it crosses tau.
  double lo = breaks.front(), mass_lo = mass(lo);
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const double hi = breaks[i];
    const double mass_hi = mass(hi);
    if (mass_hi <= tau) {
      const double mu = (mass_lo == mass_hi) ? hi : lo + (mass_lo - tau) * (hi - lo) / (mass_lo - mass_hi);
      return shrink(mu);
    }
    lo = hi;
    mass_lo = mass_hi;
  }
  return shrink(breaks.back());
}

/// Internal node: x[feature] <= threshold goes left. A child value c >= 0 is a node
/// index; c < 0 refers to leaf -c - 1.
struct TreeNode {
  int feature = 0;
  double threshold = 0.0;
  int left = -1;
  int right = -2;

  bool operator==(const TreeNode&) const = default;
};

inline constexpr int leaf_ref(int leaf) { return -leaf - 1; }
inline constexpr int leaf_of(int ref) { return -ref - 1; }

class MultiTree {
 public:
  MultiTree() = default;

  /// Validates the structure and both leaf constraints; throws DataError on failure.
  MultiTree(std::vector<TreeNode> nodes, Matrix leaves, double tau, int d)
      : nodes_(std::move(nodes)), leaves_(std::move(leaves)), tau_(tau), d_(d) {
    validate();
  }

  int leaf_count() const { return static_cast<int>(leaves_.rows()); }
  int input_dim() const { return d_; }
  int output_dim() const { return static_cast<int>(leaves_.cols()); }
  double tau() const { return tau_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const Matrix& leaves() const { return leaves_; }

  int leaf_index(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(d_)) throw DataError("feature vector has wrong dimension");
    int ref = 0;
    while (ref >= 0) {
      const TreeNode& node = nodes_[static_cast<std::size_t>(ref)];
      ref = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return leaf_of(ref);
  }

  std::span<const double> predict(std::span<const double> x) const {
    return leaves_.row(static_cast<std::size_t>(leaf_index(x)));
  }

  bool operator==(const MultiTree&) const = default;

 private:
  void validate() const {
    const auto p = leaves_.rows();
    if (p < 2) throw DataError("a tree needs at least two leaves");
    if (leaves_.cols() < 1) throw DataError("a tree needs q >= 1");
    if (d_ < 1) throw DataError("a tree needs d >= 1");
    if (!(tau_ > 0.0)) throw DataError("tree tau must be positive");
    if (nodes_.size() != p - 1) throw DataError("a binary tree with p leaves has p - 1 internal nodes");

    std::vector<int> node_hits(nodes_.size(), 0), leaf_hits(p, 0);
    node_hits[0] = 1;  // root
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const TreeNode& n = nodes_[i];
      if (n.feature < 0 || n.feature >= d_) throw DataError("split feature out of range");
      if (!std::isfinite(n.threshold)) throw DataError("split threshold must be finite");
      for (int child : {n.left, n.right}) {
        if (child >= 0) {
          // Children come after their parent, which rules out cycles.
          if (static_cast<std::size_t>(child) <= i || static_cast<std::size_t>(child) >= nodes_.size())
            throw DataError("bad child node reference");
          ++node_hits[static_cast<std::size_t>(child)];
        } else {
          const int leaf = leaf_of(child);
          if (leaf < 0 || static_cast<std::size_t>(leaf) >= p) throw DataError("bad leaf reference");
          ++leaf_hits[static_cast<std::size_t>(leaf)];
        }
      }
    }
    for (int h : node_hits)
      if (h != 1) throw DataError("every internal node must have exactly one parent");
    for (int h : leaf_hits)
      if (h != 1) throw DataError("every leaf must be referenced exactly once");

    for (std::size_t l = 0; l < p; ++l) {
      double l1 = 0.0;
      for (double w : leaves_.row(l)) {
        if (!std::isfinite(w)) throw DataError("leaf weights must be finite");
        if (std::abs(w) > 1.0 + kConstraintSlack) throw DataError("leaf weight exceeds the box constraint");
        l1 += std::abs(w);
      }
      if (l1 > tau_ + kConstraintSlack) throw DataError("leaf row exceeds the l1 budget");
    }
  }

  std::vector<TreeNode> nodes_;
  Matrix leaves_;
  double tau_ = 1.0;
  int d_ = 1;
};

struct SplitCandidates {
  enum class Mode { Exhaustive, Quantile };
  Mode mode = Mode::Exhaustive;
  int count = 32;  // thresholds per feature in quantile mode
};

struct TreeConfig {
  int leaves = 4;  // p, exact leaf count of every fitted tree
  double tau = 1.0;
  int min_samples_leaf = 1;
  SplitCandidates split_candidates{};

  void validate() const {
    if (leaves < 2) throw DomainError("trees need at least two leaves");
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    if (min_samples_leaf < 1) throw DomainError("min_samples_leaf must be >= 1");
    if (split_candidates.mode == SplitCandidates::Mode::Quantile && split_candidates.count < 1)
      throw DomainError("quantile split count must be >= 1");
  }
};

namespace detail {

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct GrowingLeaf {
  std::vector<std::size_t> rows;
  std::vector<double> mean;  // weighted residual mean (inherited when empty)
  int parent = -1;           // node that references this leaf, -1 for the root
  bool is_left = true;
  SplitChoice best;
};

inline std::vector<double> weighted_mean(const Matrix& R, std::span<const double> w,
                                         const std::vector<std::size_t>& rows, std::vector<double> fallback) {
  double total = 0.0;
  std::vector<double> acc(R.cols(), 0.0);
  for (auto i : rows) {
    total += w[i];
    for (std::size_t j = 0; j < R.cols(); ++j) acc[j] += w[i] * R(i, j);
  }
  if (!(total > 0.0)) return fallback;
  for (double& a : acc) a /= total;
  return acc;
}

/// Best axis-aligned split of one leaf by weighted squared-error reduction.
inline SplitChoice best_split(const Matrix& X, const Matrix& R, std::span<const double> w,
                              const std::vector<std::size_t>& rows, const TreeConfig& cfg) {
  const std::size_t n = rows.size(), q = R.cols(), d = X.cols();
  const auto min_leaf = static_cast<std::size_t>(cfg.min_samples_leaf);
  if (n < 2 * min_leaf) return {};

  double total_w = 0.0, total_sq = 0.0;
  std::vector<double> total_s(q, 0.0);
  for (auto i : rows) {
    total_w += w[i];
    for (std::size_t j = 0; j < q; ++j) {
      total_s[j] += w[i] * R(i, j);
      total_sq += w[i] * R(i, j) * R(i, j);
    }
  }
  auto explained = [q](const std::vector<double>& s, double wt) {
    if (!(wt > 0.0)) return 0.0;
    double e = 0.0;
    for (std::size_t j = 0; j < q; ++j) e += s[j] * s[j];
    return e / wt;
  };
  const double parent = explained(total_s, total_w);
  const double min_gain = 1e-12 * std::max(total_sq, 1e-300);

  std::vector<SplitChoice> per_feature(d);
  parallel_for(
      d,
      [&](std::size_t f) {
        std::vector<std::size_t> order(rows);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });

        std::vector<std::size_t> cuts;  // cut after sorted position k
        for (std::size_t k = 0; k + 1 < n; ++k)
          if (X(order[k], f) < X(order[k + 1], f) && k + 1 >= min_leaf && n - k - 1 >= min_leaf)
            cuts.push_back(k);
        if (cfg.split_candidates.mode == SplitCandidates::Mode::Quantile &&
            cuts.size() > static_cast<std::size_t>(cfg.split_candidates.count)) {
          const auto c = static_cast<std::size_t>(cfg.split_candidates.count);
          std::vector<std::size_t> kept;
          for (std::size_t i = 0; i < c; ++i) kept.push_back(cuts[(2 * i + 1) * cuts.size() / (2 * c)]);
          cuts = std::move(kept);
        }

        SplitChoice best;
        std::vector<double> left_s(q, 0.0), right_s(q);
        double left_w = 0.0;
        std::size_t k = 0;
        for (std::size_t cut : cuts) {
          for (; k <= cut; ++k) {
            const auto i = order[k];
            left_w += w[i];
            for (std::size_t j = 0; j < q; ++j) left_s[j] += w[i] * R(i, j);
          }
          for (std::size_t j = 0; j < q; ++j) right_s[j] = total_s[j] - left_s[j];
          const double gain = explained(left_s, left_w) + explained(right_s, total_w - left_w) - parent;
          if (gain > min_gain && gain > best.gain) {
            const double lo = X(order[cut], f), hi = X(order[cut + 1], f);
            double mid = lo + 0.5 * (hi - lo);
            if (!(mid < hi)) mid = lo;
            best = {gain, static_cast<int>(f), mid};
          }
        }
        per_feature[f] = best;
      },
      2);

  SplitChoice best;
  for (const auto& s : per_feature)
    if (s.feature >= 0 && s.gain > best.gain) best = s;
  return best;
}

}  // namespace detail

/// Greedy best-first least-squares fit of a p-leaf tree to residual rows R.
///
/// Leaves are split in order of largest weighted squared-error reduction. When no
/// leaf admits a useful split the largest leaf receives a trivial split (all
/// samples left), so the result always has exactly p leaves. Leaf values are the
/// weighted residual means projected onto the l1/box constraint set; an empty
/// leaf inherits its parent's mean.
inline MultiTree fit_tree(const Matrix& X, const Matrix& R, std::span<const double> weights, const TreeConfig& cfg) {
  cfg.validate();
  const std::size_t n = X.rows();
  if (n == 0) throw DataError("cannot fit a tree to empty data");
  if (R.rows() != n || weights.size() != n) throw DataError("X, R and weights must have the same row count");
  if (X.cols() == 0 || R.cols() == 0) throw DataError("X and R need at least one column");
  for (double v : X.data())
    if (std::isnan(v)) throw DataError("NaN in features");
  for (double v : R.data())
    if (std::isnan(v)) throw DataError("NaN in residuals");
  for (double v : weights)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("weights must be finite and non-negative");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<detail::GrowingLeaf> leaves;
  leaves.push_back({all, detail::weighted_mean(R, weights, all, std::vector<double>(R.cols(), 0.0)), -1, true, {}});
  leaves.back().best = detail::best_split(X, R, weights, all, cfg);
  std::vector<TreeNode> nodes;

  while (leaves.size() < static_cast<std::size_t>(cfg.leaves)) {
    std::size_t target = 0;
    bool real = false;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      if (leaves[l].best.feature >= 0 && (!real || leaves[l].best.gain > leaves[target].best.gain)) {
        target = l;
        real = true;
      }
    }
    detail::SplitChoice split;
    if (real) {
      split = leaves[target].best;
    } else {
      for (std::size_t l = 1; l < leaves.size(); ++l)
        if (leaves[l].rows.size() > leaves[target].rows.size()) target = l;
      split.feature = 0;
      split.threshold = 0.0;
      if (!leaves[target].rows.empty()) {
        split.threshold = X(leaves[target].rows.front(), 0);
        for (auto i : leaves[target].rows) split.threshold = std::max(split.threshold, X(i, 0));
      }
    }

    detail::GrowingLeaf& parent = leaves[target];
    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({split.feature, split.threshold, leaf_ref(static_cast<int>(target)),
                     leaf_ref(static_cast<int>(leaves.size()))});
    if (parent.parent >= 0) {
      TreeNode& up = nodes[static_cast<std::size_t>(parent.parent)];
      (parent.is_left ? up.left : up.right) = node_id;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (auto i : parent.rows)
      (X(i, static_cast<std::size_t>(split.feature)) <= split.threshold ? left_rows : right_rows).push_back(i);
    detail::GrowingLeaf right{right_rows, detail::weighted_mean(R, weights, right_rows, parent.mean), node_id, false,
                              {}};
    parent.mean = detail::weighted_mean(R, weights, left_rows, parent.mean);
    parent.rows = std::move(left_rows);
    parent.parent = node_id;
    parent.is_left = true;
    parent.best = detail::best_split(X, R, weights, parent.rows, cfg);
    right.best = detail::best_split(X, R, weights, right.rows, cfg);
    leaves.push_back(std::move(right));
  }

  Matrix values(leaves.size(), R.cols());
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const auto w = project_l1_box(leaves[l].mean, cfg.tau);
    std::copy(w.begin(), w.end(), values.row(l).begin());
  }
  return MultiTree(std::move(nodes), std::move(values), cfg.tau, static_cast<int>(X.cols()));
}

}  // namespace mobound
