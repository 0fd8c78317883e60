#pragma once

// Lower-bound construction for SBL losses: 2n support points, targets
// (Delta sigma_r, 0, ..., 0) with Delta = sqrt(kappa / (2n)), loss
// min{(lambda |u - y|_inf)^{1/(1-theta)} / 32, 1}. Simulated learners are
// scored exactly against the finite-support distribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iterator>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobound/detail/parallel.hpp"
#include "mobound/detail/random.hpp"
#include "mobound/errors.hpp"
#include "mobound/loss_spec.hpp"
#include "mobound/losses.hpp"

namespace mobound {

struct MinimaxInstance {
  double lambda = 1.0;
  double theta = 0.0;
  int n = 1;
  int q = 1;
  double kappa = 1.0;
  double delta_gap = 0.0;  // Delta
  std::vector<int> sigma;  // length 2n

  std::size_t support() const { return 2 * static_cast<std::size_t>(n); }
  LossKind loss() const { return MinimaxPower{lambda, theta}; }

  std::vector<double> target(std::size_t r) const {
    std::vector<double> y(static_cast<std::size_t>(q), 0.0);
    y[0] = delta_gap * sigma.at(r);
    return y;
  }
};

inline void check_minimax_params(double lambda, double theta, int n, int q, double kappa) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be positive");
  if (!(theta >= 0.0 && theta <= 0.5)) throw DomainError("theta must lie in [0, 1/2]");
  if (n < 1 || q < 1) throw DomainError("n and q must be >= 1");
  if (!(kappa >= 1.0 && kappa <= n / (lambda * lambda)))
    throw DomainError("kappa must lie in [1, n / lambda^2]");
  if (kappa > 2.0 * n) throw DomainError("kappa must be <= 2n so that |Delta| <= 1");
}

/// Instance with sigma drawn from rng.
inline MinimaxInstance make_instance(double lambda, double theta, int n, int q, double kappa, std::mt19937_64& rng) {
  check_minimax_params(lambda, theta, n, q, kappa);
  MinimaxInstance inst{lambda, theta, n, q, kappa, std::sqrt(kappa / (2.0 * n)), {}};
  inst.sigma.resize(inst.support());
  for (int& s : inst.sigma) s = detail::rademacher(rng);
  return inst;
}

struct MinimaxSample {
  std::size_t index = 0;  // zero-based point r
  std::vector<double> label;
};

inline std::vector<MinimaxSample> sample_dataset(const MinimaxInstance& inst, std::mt19937_64& rng) {
  std::vector<MinimaxSample> out;
  out.reserve(static_cast<std::size_t>(inst.n));
  for (int i = 0; i < inst.n; ++i) {
    const auto r = static_cast<std::size_t>(detail::uniform_index(rng, inst.support()));
    out.push_back({r, inst.target(r)});
  }
  return out;
}

inline std::vector<MinimaxSample> sample_dataset(const MinimaxInstance& inst, std::uint64_t seed) {
  auto rng = detail::stream_rng(seed, 0);
  return sample_dataset(inst, rng);
}

using PointPredictor = std::function<std::vector<double>(std::size_t)>;

/// Mean loss over the uniform support, computed exactly.
inline double true_risk(const MinimaxInstance& inst, const PointPredictor& predictor) {
  const LossKind loss = inst.loss();
  double total = 0.0;
  for (std::size_t r = 0; r < inst.support(); ++r) {
    const auto u = predictor(r);
    if (u.size() != static_cast<std::size_t>(inst.q)) throw DataError("predictor output has wrong dimension");
    total += eval(loss, u, RealVector{inst.target(r)});
  }
  return total / static_cast<double>(inst.support());
}

enum class LearnerKind { ErmMatchObserved, ConstantZero, Oracle };

inline std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::ErmMatchObserved: return "erm_match_observed";
    case LearnerKind::ConstantZero: return "constant_zero";
    case LearnerKind::Oracle: return "oracle";
  }
  return "?";
}

inline constexpr LearnerKind kAllLearners[] = {LearnerKind::ErmMatchObserved, LearnerKind::ConstantZero,
                                               LearnerKind::Oracle};

/// ErmMatchObserved is one empirical risk minimiser among many: observed
/// labels on seen points, zero elsewhere.
inline PointPredictor fit_learner(LearnerKind kind, const MinimaxInstance& inst, const std::vector<MinimaxSample>& data) {
  const std::size_t q = static_cast<std::size_t>(inst.q);
  switch (kind) {
    case LearnerKind::ConstantZero:
      return [q](std::size_t) { return std::vector<double>(q, 0.0); };
    case LearnerKind::Oracle:
      return [inst](std::size_t r) { return inst.target(r); };
    case LearnerKind::ErmMatchObserved: {
      std::vector<std::vector<double>> table(inst.support(), std::vector<double>(q, 0.0));
      for (const auto& s : data) table[s.index] = s.label;
      return [table = std::move(table)](std::size_t r) { return table.at(r); };
    }
  }
  throw std::logic_error("unknown learner");
}

/// 2^-8 (lambda sqrt(kappa / n))^{1/(1-theta)}.
inline double minimax_lower_envelope(double lambda, double theta, double n, double kappa) {
  return std::pow(lambda * std::sqrt(kappa / n), 1.0 / (1.0 - theta)) / 256.0;
}

/// Loss of predicting 0 at a point: min{(lambda Delta)^{1/(1-theta)} / 32, 1}.
inline double minimax_miss_loss(double lambda, double theta, double delta_gap) {
  return std::min(std::pow(lambda * delta_gap, 1.0 / (1.0 - theta)) / 32.0, 1.0);
}

struct LearnerResult {
  LearnerKind learner{};
  double mean_risk = 0.0;
  double se = 0.0;
};

struct MinimaxReport {
  double lambda = 1.0, theta = 0.0, kappa = 1.0;
  int n = 1, q = 1;
  long trials = 0;
  std::uint64_t seed = 0;
  double lower_envelope = 0.0;
  std::vector<LearnerResult> learners;
};

/// Trial t draws sigma and the sample from its own stream (seed, t).
inline MinimaxReport run_experiment(double lambda, double theta, int n, int q, double kappa, long trials,
                                    std::uint64_t seed) {
  check_minimax_params(lambda, theta, n, q, kappa);
  if (trials < 1) throw DomainError("trials must be >= 1");
  constexpr std::size_t L = std::size(kAllLearners);
  std::vector<double> risks(static_cast<std::size_t>(trials) * L);
  detail::parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    auto rng = detail::stream_rng(seed, t);
    const auto inst = make_instance(lambda, theta, n, q, kappa, rng);
    const auto data = sample_dataset(inst, rng);
    for (std::size_t k = 0; k < L; ++k) risks[t * L + k] = true_risk(inst, fit_learner(kAllLearners[k], inst, data));
  });

  MinimaxReport rep{lambda, theta, kappa, n, q, trials, seed, minimax_lower_envelope(lambda, theta, n, kappa), {}};
  for (std::size_t k = 0; k < L; ++k) {
    double sum = 0.0, sq = 0.0;
    for (long t = 0; t < trials; ++t) sum += risks[static_cast<std::size_t>(t) * L + k];
    const double mean = sum / static_cast<double>(trials);
    for (long t = 0; t < trials; ++t) {
      const double e = risks[static_cast<std::size_t>(t) * L + k] - mean;
      sq += e * e;
    }
    const double se = trials > 1 ? std::sqrt(sq / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
    rep.learners.push_back({kAllLearners[k], mean, se});
  }
  return rep;
}

inline void write_minimax_csv_header(std::ostream& os) {
  os << "lambda,theta,n,kappa,learner,mean_risk,se,lower_envelope\n";
}

inline void write_minimax_csv(std::ostream& os, const MinimaxReport& rep) {
  for (const auto& l : rep.learners)
    os << format_double(rep.lambda) << ',' << format_double(rep.theta) << ',' << rep.n << ','
       << format_double(rep.kappa) << ',' << to_string(l.learner) << ',' << format_double(l.mean_risk) << ','
       << format_double(l.se) << ',' << format_double(rep.lower_envelope) << '\n';
}

}  // namespace mobound
