#pragma once

// Functional gradient boosting over l1-constrained multi-output trees.
//
// The ensemble is f = sum_t alpha_t h_t with every h_t in H_{p, tau_t} and
// sum_t alpha_t <= beta.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mobound/dataset.hpp"
#include "mobound/detail/parallel.hpp"
#include "mobound/errors.hpp"
#include "mobound/losses.hpp"
#include "mobound/matrix.hpp"
#include "mobound/trees.hpp"

namespace mobound {

inline constexpr double kBudgetSlack = 1e-12;

struct Stage {
  double alpha = 0.0;
  MultiTree tree;

  bool operator==(const Stage&) const = default;
};

class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(LossKind loss, double beta, int q, int d, std::vector<Stage> stages = {})
      : loss_(std::move(loss)), beta_(beta), q_(q), d_(d), stages_(std::move(stages)) {
    if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw DataError("beta must be finite and non-negative");
    if (q_ < 1 || d_ < 1) throw DataError("ensemble dimensions must be positive");
    double total = 0.0;
    for (const auto& s : stages_) {
      if (!(s.alpha > 0.0) || !std::isfinite(s.alpha)) throw DataError("stage weights must be positive");
      if (s.tree.output_dim() != q_ || s.tree.input_dim() != d_) throw DataError("tree dimensions differ from ensemble");
      total += s.alpha;
    }
    if (total > beta_ + kBudgetSlack) throw DataError("stage weights exceed the budget beta");
  }

  const LossKind& loss() const { return loss_; }
  double beta() const { return beta_; }
  int q() const { return q_; }
  int d() const { return d_; }
  const std::vector<Stage>& stages() const { return stages_; }

  double total_alpha() const {
    double total = 0.0;
    for (const auto& s : stages_) total += s.alpha;
    return total;
  }

  /// sum_t alpha_t tau_t, the capacity term of the ensemble bound.
  double weighted_tau() const {
    double total = 0.0;
    for (const auto& s : stages_) total += s.alpha * s.tree.tau();
    return total;
  }

  int max_leaves() const {
    int p = 0;
    for (const auto& s : stages_) p = std::max(p, s.tree.leaf_count());
    return p;
  }

  std::vector<double> predict(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(d_)) throw DataError("feature vector has wrong dimension");
    std::vector<double> out(static_cast<std::size_t>(q_), 0.0);
    for (const auto& s : stages_) {
      const auto w = s.tree.predict(x);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += s.alpha * w[j];
    }
    return out;
  }

  void push(Stage s) {
    if (s.tree.output_dim() != q_ || s.tree.input_dim() != d_) throw DataError("tree dimensions differ from ensemble");
    if (total_alpha() + s.alpha > beta_ + kBudgetSlack) throw DataError("stage would exceed the budget beta");
    stages_.push_back(std::move(s));
  }

  void truncate(std::size_t count) { stages_.resize(std::min(count, stages_.size())); }

  bool operator==(const Ensemble& o) const {
    return beta_ == o.beta_ && q_ == o.q_ && d_ == o.d_ && stages_ == o.stages_;
  }

 private:
  LossKind loss_;
  double beta_ = 1.0;
  int q_ = 1;
  int d_ = 1;
  std::vector<Stage> stages_;
};

namespace detail {

inline double mean_loss(const LossKind& loss, const Matrix& scores, const std::vector<Label>& labels) {
  const std::size_t n = labels.size();
  std::vector<double> per(n);
  parallel_for(n, [&](std::size_t i) { per[i] = eval(loss, scores.row(i), labels[i]); });
  double total = 0.0;
  for (double v : per) total += v;  // fixed order: identical across thread counts
  return total / static_cast<double>(n);
}

inline Matrix ensemble_scores(const Ensemble& ens, const Matrix& X) {
  Matrix F(X.rows(), static_cast<std::size_t>(ens.q()));
  parallel_for(X.rows(), [&](std::size_t i) {
    const auto f = ens.predict(X.row(i));
    std::copy(f.begin(), f.end(), F.row(i).begin());
  });
  return F;
}

}  // namespace detail

/// Mean loss of the ensemble over the dataset.
inline double empirical_risk(const Ensemble& ens, const Dataset& data, const LossKind& loss) {
  if (data.n() == 0) throw DataError("empty dataset");
  if (static_cast<int>(data.d()) != ens.d() || data.q() != ens.q()) throw DataError("dataset and model dimensions differ");
  return detail::mean_loss(loss, detail::ensemble_scores(ens, data.X), data.labels);
}

struct TrainConfig {
  int rounds = 50;         // T
  double shrinkage = 1.0;  // nu
  TreeConfig tree{};
  double tau_decay = 1.0;  // tau_t = tree.tau * tau_decay^t
  double beta = 1.0;
  int patience = 0;        // certify-aware early stop; 0 disables
  std::uint64_t seed = 0;
  int max_halvings = 20;

  void validate() const {
    if (rounds < 0) throw DomainError("rounds must be >= 0");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw DomainError("shrinkage must lie in (0, 1]");
    if (!(tau_decay > 0.0 && tau_decay <= 1.0)) throw DomainError("tau decay must lie in (0, 1]");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("beta must be finite and non-negative");
    if (patience < 0) throw DomainError("patience must be >= 0");
    if (max_halvings < 0) throw DomainError("max_halvings must be >= 0");
    tree.validate();
  }
};

/// Score to minimise for certify-aware early stopping (usually the certificate bound).
using StopMetric = std::function<double(const Ensemble&)>;

struct TrainTrace {
  std::vector<double> risks;    // training risk after round 0..T (index 0: before any stage)
  std::vector<double> metrics;  // StopMetric after each accepted round, when given
  std::string stop_reason = "rounds";
};

/// Gradient boosting with a backtracking line search on the step size.
///
/// Each round fits a tree to the negative loss gradients, then tries
/// alpha = nu * 2^-h for h = 0..max_halvings (capped by the unused budget) and
/// keeps the first step that lowers training risk. Training ends after T rounds,
/// when the budget is spent, or when no step helps. Fully deterministic.
inline Ensemble train(const Dataset& data, const LossKind& loss, const TrainConfig& cfg,
                      const StopMetric& metric = {}, TrainTrace* trace = nullptr) {
  cfg.validate();
  if (data.n() == 0) throw DataError("empty dataset");
  if (!is_differentiable(loss)) throw DomainError("training needs a differentiable loss: " + to_string(loss));
  check_compatible(data, loss);

  const std::size_t n = data.n(), q = static_cast<std::size_t>(data.q());
  Ensemble ens(loss, cfg.beta, data.q(), static_cast<int>(data.d()));
  Matrix F(n, q, 0.0), G(n, q), P(n, q), trial(n, q);
  double risk = detail::mean_loss(loss, F, data.labels);
  TrainTrace local;
  TrainTrace& tr = trace ? *trace : local;
  tr = {};
  tr.risks.push_back(risk);
  const std::vector<double> weights(n, 1.0);

  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_size = 0;
  int since_best = 0;
  if (metric) {
    best_metric = metric(ens);
    tr.metrics.push_back(best_metric);
  }

  for (int t = 0; t < cfg.rounds; ++t) {
    const double remaining = cfg.beta - ens.total_alpha();
    if (!(remaining > 0.0)) {
      tr.stop_reason = "budget";
      break;
    }
    detail::parallel_for(n, [&](std::size_t i) {
      const auto g = grad(loss, F.row(i), data.labels[i]);
      for (std::size_t j = 0; j < q; ++j) G(i, j) = -g[j];
    });
    TreeConfig tcfg = cfg.tree;
    tcfg.tau = cfg.tree.tau * std::pow(cfg.tau_decay, t);
    MultiTree tree = fit_tree(data.X, G, weights, tcfg);
    detail::parallel_for(n, [&](std::size_t i) {
      const auto w = tree.predict(data.X.row(i));
      std::copy(w.begin(), w.end(), P.row(i).begin());
    });

    std::optional<double> accepted;
    double accepted_risk = risk;
    double step = 1.0;
    for (int h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
      const double alpha = std::min(cfg.shrinkage * step, remaining);
      for (std::size_t k = 0; k < F.data().size(); ++k) trial.data()[k] = F.data()[k] + alpha * P.data()[k];
      const double r = detail::mean_loss(loss, trial, data.labels);
      if (r < risk) {
        accepted = alpha;
        accepted_risk = r;
        break;
      }
    }
    if (!accepted) {
      tr.stop_reason = "no decrease";
      break;
    }
    for (std::size_t k = 0; k < F.data().size(); ++k) F.data()[k] += *accepted * P.data()[k];
    ens.push({*accepted, std::move(tree)});
    if (ens.total_alpha() > cfg.beta + kBudgetSlack) throw std::logic_error("budget invariant broken");
    risk = accepted_risk;
    tr.risks.push_back(risk);

    if (metric) {
      const double m = metric(ens);
      tr.metrics.push_back(m);
      if (m < best_metric) {
        best_metric = m;
        best_size = ens.stages().size();
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        ens.truncate(best_size);
        tr.stop_reason = "patience";
        break;
      }
    }
  }
  return ens;
}

}  // namespace mobound
