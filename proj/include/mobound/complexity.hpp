#pragma once

// Rademacher complexity: Monte Carlo and exact estimates on an evaluation grid,
// an exact per-draw supremum for l1-constrained stumps, and the analytic
// covering/chaining/contraction bounds used by the risk certificates.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "mobound/detail/parallel.hpp"
#include "mobound/detail/random.hpp"
#include "mobound/errors.hpp"
#include "mobound/matrix.hpp"

namespace mobound {

inline constexpr double kContractionConstant = 512.0;  // 2^9
inline constexpr int kExactEnumerationMaxPoints = 20;

/// Values of a finite function class on m evaluation points: values(i, c) is
/// member c at point i. For projected classes point i*q + j is (x_i, j).
struct EvalGrid {
  Matrix values;
  std::size_t n = 0;
  int q = 1;

  std::size_t points() const { return values.rows(); }
  std::size_t members() const { return values.cols(); }
};

struct RadEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long draws = 0;
  bool exact = false;  // mean is the exact expectation over all sign vectors
};

using VectorFunction = std::function<std::vector<double>(std::span<const double>)>;

/// Grid of pi_j(f(x_i)) for every (i, j); one column per function.
inline EvalGrid project_class(const std::vector<VectorFunction>& fns, const Matrix& X, int q) {
  if (q < 1) throw DataError("q must be positive");
  if (fns.empty()) throw DataError("function class is empty");
  const std::size_t n = X.rows(), uq = static_cast<std::size_t>(q);
  EvalGrid grid{Matrix(n * uq, fns.size()), n, q};
  for (std::size_t c = 0; c < fns.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto out = fns[c](X.row(i));
      if (out.size() != uq) throw DataError("function output dimension differs from q");
      for (std::size_t j = 0; j < uq; ++j) grid.values(i * uq + j, c) = out[j];
    }
  }
  return grid;
}

namespace detail {

inline void check_grid(const EvalGrid& g) {
  if (g.points() == 0 || g.members() == 0) throw DataError("empty evaluation grid");
  for (double v : g.values.data())
    if (!std::isfinite(v)) throw DataError("evaluation grid has non-finite entries");
}

inline RadEstimate summarize(const std::vector<double>& per_draw) {
  const auto k = static_cast<double>(per_draw.size());
  double mean = 0.0;
  for (double v : per_draw) mean += v;
  mean /= k;
  double var = 0.0;
  for (double v : per_draw) var += (v - mean) * (v - mean);
  var = per_draw.size() > 1 ? var / (k - 1.0) : 0.0;
  return {mean, std::sqrt(var / k), static_cast<long>(per_draw.size()), false};
}

}  // namespace detail

/// E_sigma max_c (1/m) sum_i sigma_i values(i, c), estimated from `draws` sign vectors.
inline RadEstimate empirical_rademacher_mc(const EvalGrid& grid, long draws, std::uint64_t seed) {
  detail::check_grid(grid);
  if (draws < 1) throw DomainError("draws must be >= 1");
  const std::size_t m = grid.points(), k = grid.members();
  std::vector<double> per(static_cast<std::size_t>(draws));
  detail::parallel_for(
      per.size(),
      [&](std::size_t t) {
        auto rng = detail::stream_rng(seed, t);
        std::vector<double> acc(k, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const double s = detail::rademacher(rng);
          const auto row = grid.values.row(i);
          for (std::size_t c = 0; c < k; ++c) acc[c] += s * row[c];
        }
        per[t] = *std::max_element(acc.begin(), acc.end()) / static_cast<double>(m);
      },
      16);
  return detail::summarize(per);
}

/// Exact expectation over all 2^m sign vectors (Gray-code walk, m <= 20).
inline RadEstimate empirical_rademacher_exact(const EvalGrid& grid) {
  detail::check_grid(grid);
  const std::size_t m = grid.points(), k = grid.members();
  if (m > static_cast<std::size_t>(kExactEnumerationMaxPoints))
    throw DomainError("exact enumeration is limited to m <= 20 points");
  std::vector<double> acc(k, 0.0);
  for (std::size_t i = 0; i < m; ++i)  // start from sigma = (-1, ..., -1)
    for (std::size_t c = 0; c < k; ++c) acc[c] -= grid.values(i, c);
  const std::uint64_t total = std::uint64_t{1} << m;
  double sum = *std::max_element(acc.begin(), acc.end());
  std::uint64_t signs = 0;  // bit i set: sigma_i = +1
  for (std::uint64_t step = 1; step < total; ++step) {
    const auto flip = static_cast<std::size_t>(std::countr_zero(step));
    signs ^= std::uint64_t{1} << flip;
    const double dir = (signs >> flip) & 1 ? 2.0 : -2.0;
    const auto row = grid.values.row(flip);
    for (std::size_t c = 0; c < k; ++c) acc[c] += dir * row[c];
    sum += *std::max_element(acc.begin(), acc.end());
  }
  return {sum / static_cast<double>(total) / static_cast<double>(m), 0.0, static_cast<long>(total), true};
}

/// Exact enumeration when 2^m <= 2^20, Monte Carlo otherwise.
inline RadEstimate empirical_rademacher(const EvalGrid& grid, long draws = 2000, std::uint64_t seed = 0) {
  if (grid.points() <= static_cast<std::size_t>(kExactEnumerationMaxPoints)) return empirical_rademacher_exact(grid);
  return empirical_rademacher_mc(grid, draws, seed);
}

/// Per-draw exact supremum over projected two-leaf trees with leaves in the l1
/// ball of radius tau (no box constraint), evaluated on w = {(x_i, j)}.
///
/// For a fixed split the supremum over leaf values is tau * sum over leaves of
/// max_j |sum_{i in leaf} sigma_{ij}|, attained at signed basis vectors. Every
/// axis-aligned split of the rows of X is enumerated, including the trivial one.
inline RadEstimate exact_stump_rademacher(const Matrix& X, int q, double tau, long draws, std::uint64_t seed) {
  const std::size_t n = X.rows(), d = X.cols();
  if (n == 0 || d == 0) throw DataError("empty feature matrix");
  if (q < 1) throw DataError("q must be positive");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (draws < 1) throw DomainError("draws must be >= 1");
  for (double v : X.data())
    if (!std::isfinite(v)) throw DataError("non-finite feature");
  const auto uq = static_cast<std::size_t>(q);
  const double m = static_cast<double>(n * uq);
  if (static_cast<double>(d) * (m + 1.0) * std::pow(2.0 * q, 2) > 1e7)
    throw DomainError("stump enumeration guard exceeded: d (m + 1) (2q)^2 > 1e7");

  // Sorted order and cut positions (between distinct values) per feature.
  std::vector<std::vector<std::size_t>> order(d);
  std::vector<std::vector<char>> cut_after(d);
  for (std::size_t f = 0; f < d; ++f) {
    order[f].resize(n);
    for (std::size_t i = 0; i < n; ++i) order[f][i] = i;
    std::stable_sort(order[f].begin(), order[f].end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
    cut_after[f].assign(n, 0);
    for (std::size_t k = 0; k + 1 < n; ++k) cut_after[f][k] = X(order[f][k], f) < X(order[f][k + 1], f);
  }

  std::vector<double> per(static_cast<std::size_t>(draws));
  detail::parallel_for(
      per.size(),
      [&](std::size_t t) {
        auto rng = detail::stream_rng(seed, t);
        std::vector<double> sigma_sum(n * uq);  // per point i, per output j
        std::vector<double> total(uq, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < uq; ++j) total[j] += (sigma_sum[i * uq + j] = detail::rademacher(rng));
        auto peak = [](const std::vector<double>& v) {
          double b = 0.0;
          for (double x : v) b = std::max(b, std::abs(x));
          return b;
        };
        double best = peak(total);  // trivial split
        std::vector<double> left(uq), right(uq);
        for (std::size_t f = 0; f < d; ++f) {
          std::fill(left.begin(), left.end(), 0.0);
          for (std::size_t k = 0; k + 1 < n; ++k) {
            const std::size_t i = order[f][k];
            for (std::size_t j = 0; j < uq; ++j) left[j] += sigma_sum[i * uq + j];
            if (!cut_after[f][k]) continue;
            for (std::size_t j = 0; j < uq; ++j) right[j] = total[j] - left[j];
            best = std::max(best, peak(left) + peak(right));
          }
        }
        per[t] = tau * best / m;
      },
      16);
  return detail::summarize(per);
}

namespace detail {

inline void check_tree_args(int p, double tau, int d, double m, int q) {
  if (p < 2) throw DomainError("tree bound needs p >= 2");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (d < 1 || q < 1 || !(m >= 1.0)) throw DomainError("d, q and the point count must be positive");
}

}  // namespace detail

/// Bound on the empirical complexity of projected p-leaf trees with l1 budget tau over m points:
/// 2 tau sqrt(p log(2 max{d m, q}) / m).
inline double tree_class_rad_bound_points(int p, double tau, int d, double m, int q) {
  detail::check_tree_args(p, tau, d, m, q);
  return 2.0 * tau * std::sqrt(p * std::log(2.0 * std::max(d * m, static_cast<double>(q))) / m);
}

/// The same bound at m = n q, used by certificates.
inline double tree_class_rad_bound(int p, double tau, int d, double n, int q) {
  return tree_class_rad_bound_points(p, tau, d, n * q, q);
}

/// 2 tau sqrt(p log(2 q n d) / (n q)). Coincides with tree_class_rad_bound, since d n q >= q.
inline double tree_class_rad_bound_statement(int p, double tau, int d, double n, int q) {
  detail::check_tree_args(p, tau, d, n * q, q);
  return 2.0 * tau * std::sqrt(p * std::log(2.0 * q * n * d) / (n * q));
}

/// The tighter intermediate step of the same argument:
/// tau sqrt(2((p - 1) log(d (m + 1)) + p log(2 q)) / m).
inline double tree_class_rad_bound_counting(int p, double tau, int d, double m, int q) {
  detail::check_tree_args(p, tau, d, m, q);
  return tau * std::sqrt(2.0 * ((p - 1) * std::log(d * (m + 1.0)) + p * std::log(2.0 * q)) / m);
}

/// Minoration bound on log N(eps, G, rho_inf) for G with range [-beta, beta]:
/// R^2 (4 n / eps^2) log(2 e beta n / eps), valid for eps > 2 R.
inline double minoration_cover_bound(double epsilon, double rad_n, double n, double beta) {
  if (!(rad_n >= 0.0)) throw DomainError("Rademacher complexity must be non-negative");
  if (!(n >= 1.0) || !(beta > 0.0)) throw DomainError("n and beta must be positive");
  if (!(epsilon > 2.0 * rad_n)) throw DomainError("outside minoration regime: epsilon must exceed 2 R_n");
  if (rad_n == 0.0) return 0.0;
  return rad_n * rad_n * (4.0 * n / (epsilon * epsilon)) * std::log(2.0 * std::numbers::e * beta * n / epsilon);
}

/// Dudley-type chaining sum over eps_0 > eps_1 > ... > eps_K:
/// 2 sum_{k=1}^K (eps_k + eps_{k-1}) sqrt(log_cover(eps_k) / n) + eps_K.
inline double dudley_chain_bound(std::span<const double> eps, const std::function<double(double)>& log_cover, double n) {
  if (eps.size() < 2) throw DomainError("chaining needs K >= 1 (at least eps_0 and eps_1)");
  if (!(n >= 1.0)) throw DomainError("n must be positive");
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0)) throw DomainError("chaining scales must be positive");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw DomainError("chaining scales must be strictly decreasing");
  }
  double sum = 0.0;
  for (std::size_t k = 1; k < eps.size(); ++k) {
    const double entropy = log_cover(eps[k]);
    if (!(entropy >= 0.0)) throw DomainError("log covering number must be non-negative");
    sum += (eps[k] + eps[k - 1]) * std::sqrt(entropy / n);
  }
  return 2.0 * sum + eps.back();
}

/// Cover transfer: a xi-cover of the projected class in rho_inf yields a
/// 2^{1+theta} lambda r^theta xi cover of the r-local loss class in rho_2.
inline double covering_transfer_radius(double lambda, double theta, double r, double xi) {
  if (!(lambda > 0.0) || !(r > 0.0) || !(xi > 0.0)) throw DomainError("lambda, r and xi must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("theta must lie in [0, 1]");
  return std::pow(2.0, 1.0 + theta) * lambda * std::pow(r, theta) * xi;
}

namespace detail {

inline void check_contraction_args(double lambda, double theta, double r, double q, double n, double beta,
                                   double rad_nq) {
  if (!(theta >= 0.0 && theta <= 0.5))
    throw DomainError("theta must lie in [0, 1/2]; the local contraction bound does not extend beyond 1/2");
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (!(r > 0.0)) throw DomainError("r must be positive");
  if (!(q >= 1.0) || !(n >= 1.0)) throw DomainError("q and n must be >= 1");
  if (!(beta >= 1.0)) throw DomainError("beta must be >= 1");
  if (!(rad_nq >= 0.0)) throw DomainError("Rademacher bound must be non-negative");
}

}  // namespace detail

/// lambda r^theta (2^9 sqrt(q) log^{3/2}(e beta n q) R_nq + n^{-1/2}).
inline double local_contraction_bound(double lambda, double theta, double r, double q, double n, double beta,
                                      double rad_nq) {
  detail::check_contraction_args(lambda, theta, r, q, n, beta, rad_nq);
  const double L = std::log(std::numbers::e * beta * n * q);
  return lambda * std::pow(r, theta) *
         (kContractionConstant * std::sqrt(q) * std::pow(L, 1.5) * rad_nq + 1.0 / std::sqrt(n));
}

/// The chaining argument behind local_contraction_bound, evaluated numerically.
struct ChainEvaluation {
  int K = 0;
  std::vector<double> eps;     // eps_0..eps_K, loss-class scales
  std::vector<double> xi;      // xi_0..xi_K, projected-class scales
  std::vector<double> log_cover;  // minoration bound at xi_k (index 0 unused, 0)
  double value = 0.0;          // Dudley sum with the minoration entropies
  double closed_form = 0.0;    // local_contraction_bound
};

/// eps_k = 2^{1+theta} lambda r^theta beta 2^-k, with
/// K = ceil(log2(beta min{1/(2 R), 8 sqrt(n)})) - 1 and entropies from the
/// minoration bound on nq points. K = 0 degenerates to the diameter eps_0.
inline ChainEvaluation local_contraction_chain(double lambda, double theta, double r, double q, double n, double beta,
                                          double rad_nq) {
  detail::check_contraction_args(lambda, theta, r, q, n, beta, rad_nq);
  ChainEvaluation out;
  const double inv = rad_nq > 0.0 ? std::min(1.0 / (2.0 * rad_nq), 8.0 * std::sqrt(n)) : 8.0 * std::sqrt(n);
  out.K = std::max(0, static_cast<int>(std::ceil(std::log2(beta * inv))) - 1);
  for (int k = 0; k <= out.K; ++k) {
    out.xi.push_back(beta * std::ldexp(1.0, -k));
    out.eps.push_back(covering_transfer_radius(lambda, theta, r, out.xi.back()));
    out.log_cover.push_back(k == 0 ? 0.0 : minoration_cover_bound(out.xi.back(), rad_nq, n * q, beta));
  }
  if (out.K == 0) {
    out.value = out.eps[0];
  } else {
    const double factor = covering_transfer_radius(lambda, theta, r, 1.0);
    out.value = dudley_chain_bound(
        out.eps, [&](double e) { return minoration_cover_bound(e / factor, rad_nq, n * q, beta); }, n);
  }
  out.closed_form = local_contraction_bound(lambda, theta, r, q, n, beta, rad_nq);
  return out;
}

}  // namespace mobound
