#pragma once

// Risk-bound formulas for self-bounding Lipschitz losses and the certificate
// that assembles them for a trained ensemble.

#include <chrono>
#include <cmath>
#include <ctime>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mobound/boosting.hpp"
#include "mobound/complexity.hpp"
#include "mobound/errors.hpp"
#include "mobound/io.hpp"
#include "mobound/losses.hpp"

namespace mobound {

inline constexpr const char* kCertificateSchema = "mobound.certificate/1";
inline constexpr double kUniformBoundConstants[2] = {90.0, 4.0};
inline constexpr double kErmBoundConstants[2] = {100.0, 9.0};

struct BoundInputs {
  double n = 0;
  double q = 1;
  double delta = 0.05;
  double lambda = 1;
  double theta = 0;
  double beta = 1;        // sup-norm bound of the function class, >= 1
  double loss_bound = 1;  // B, >= 1
  double rad_nq = 0;      // bound on the Rademacher complexity of the projected class

  void validate() const {
    if (!(n >= 3.0)) throw DomainError("n must be >= 3 (log log n)");
    if (!(q >= 1.0)) throw DomainError("q must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be positive and finite");
    if (!(theta >= 0.0 && theta <= 0.5)) throw DomainError("theta must lie in [0, 1/2]");
    if (!(beta >= 1.0) || !std::isfinite(beta)) throw DomainError("beta must be >= 1 and finite");
    if (!(loss_bound >= 1.0) || !std::isfinite(loss_bound)) throw DomainError("loss bound B must be >= 1 and finite");
    if (!(rad_nq >= 0.0) || !std::isfinite(rad_nq)) throw DomainError("Rademacher bound must be finite and >= 0");
  }
};

namespace detail {

inline double log32(double beta, double n, double q) { return std::pow(std::log(std::numbers::e * beta * n * q), 1.5); }

inline double confidence_tail(double B, double delta, double n, double loglog_weight) {
  return B * (std::log(1.0 / delta) + loglog_weight * std::log(std::log(n))) / n;
}

}  // namespace detail

/// B (log(1/delta) + 6 log log n) / n.
inline double r0(double B, double delta, double n) {
  if (!(n >= 3.0)) throw DomainError("r0 needs n >= 3");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (!(B > 0.0)) throw DomainError("B must be positive");
  return detail::confidence_tail(B, delta, n, 6.0);
}

/// Fixed point of r -> local_contraction_bound(r):
/// (lambda (2^9 sqrt(q) log^{3/2}(e beta n q) R + n^{-1/2}))^{1/(1-theta)}.
inline double rhat(double lambda, double theta, double q, double n, double beta, double rad_nq) {
  detail::check_contraction_args(lambda, theta, 1.0, q, n, beta, rad_nq);
  const double inner =
      lambda * (kContractionConstant * std::sqrt(q) * detail::log32(beta, n, q) * rad_nq + 1.0 / std::sqrt(n));
  return std::pow(inner, 1.0 / (1.0 - theta));
}

/// First summand of gamma.
inline double gamma_main(const BoundInputs& in) {
  in.validate();
  const double inner =
      in.lambda * (std::sqrt(in.q) * detail::log32(in.beta, in.n, in.q) * in.rad_nq + 1.0 / std::sqrt(in.n));
  return std::pow(inner, 1.0 / (1.0 - in.theta));
}

inline double gamma_tail(const BoundInputs& in) {
  in.validate();
  return detail::confidence_tail(in.loss_bound, in.delta, in.n, 1.0);
}

/// Gamma = (lambda (sqrt(q) log^{3/2}(e beta n q) R + n^{-1/2}))^{1/(1-theta)} + (B/n)(log(1/delta) + log log n).
inline double gamma(const BoundInputs& in) { return gamma_main(in) + gamma_tail(in); }

/// E + 90 (rhat + r0) + 4 sqrt(E (rhat + r0)).
inline double bound_uniform_explicit(double emp_risk, double rhat_v, double r0_v) {
  if (!(emp_risk >= 0.0 && rhat_v >= 0.0 && r0_v >= 0.0)) throw DomainError("bound inputs must be non-negative");
  const double s = rhat_v + r0_v;
  return emp_risk + kUniformBoundConstants[0] * s + kUniformBoundConstants[1] * std::sqrt(emp_risk * s);
}

/// E* + 9 sqrt(E* (rhat + r0)) + 100 (rhat + r0).
inline double bound_erm_explicit(double risk_star, double rhat_v, double r0_v) {
  if (!(risk_star >= 0.0 && rhat_v >= 0.0 && r0_v >= 0.0)) throw DomainError("bound inputs must be non-negative");
  const double s = rhat_v + r0_v;
  return risk_star + kErmBoundConstants[1] * std::sqrt(risk_star * s) + kErmBoundConstants[0] * s;
}

/// E + c0 (sqrt(E C) + C).
inline double bound_cform(double emp_risk, double complexity, double c0 = 1.0) {
  if (!(emp_risk >= 0.0 && complexity >= 0.0 && c0 > 0.0)) throw DomainError("bound inputs must be non-negative");
  return emp_risk + c0 * (std::sqrt(emp_risk * complexity) + complexity);
}

/// Slow-rate comparison for a plain Lipschitz loss (inputs.theta must be 0, lambda the Lipschitz constant):
/// E + c2 lambda (sqrt(q) log^{3/2}(e beta n q) R + n^{-1/2}) + B sqrt(log(1/delta) / n).
inline double bound_lipschitz_comparison(const BoundInputs& in, double emp_risk, double c2 = 1.0) {
  in.validate();
  if (in.theta != 0.0) throw DomainError("comparison bound takes a Lipschitz loss (theta = 0); use relax_theta");
  if (!(emp_risk >= 0.0) || !(c2 > 0.0)) throw DomainError("bound inputs must be non-negative");
  const double J = in.lambda * (std::sqrt(in.q) * detail::log32(in.beta, in.n, in.q) * in.rad_nq + 1.0 / std::sqrt(in.n));
  return emp_risk + c2 * J + in.loss_bound * std::sqrt(std::log(1.0 / in.delta) / in.n);
}

namespace detail {
inline void check_bernstein(double mu, double B, double n, double delta) {
  if (!(mu >= 0.0) || !(B > 0.0) || !(n > 0.0)) throw DomainError("Bernstein needs mu >= 0, B > 0, n > 0");
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("delta must lie in (0, 1]");
}
}  // namespace detail

/// mu + sqrt(2 mu B log(1/delta) / n) + B log(1/delta) / n.
inline double bernstein_upper(double mu, double B, double n, double delta) {
  detail::check_bernstein(mu, B, n, delta);
  const double l = std::log(1.0 / delta);
  return mu + std::sqrt(2.0 * mu * B * l / n) + B * l / n;
}

/// 2 mu + 3 B log(1/delta) / (2 n).
inline double bernstein_upper_coarse(double mu, double B, double n, double delta) {
  detail::check_bernstein(mu, B, n, delta);
  return 2.0 * mu + 3.0 * B * std::log(1.0 / delta) / (2.0 * n);
}

/// Ensemble complexity term:
/// (lambda / sqrt(n) (sqrt(p) log^2(3 n q d beta) sum_t alpha_t tau_t + 1))^{1/(1-theta)}
///   + (B/n)(log(1/delta) + log log n).
inline double ensemble_gamma(std::span<const std::pair<double, double>> alpha_tau, int p, double n, double q, double d,
                             double beta, double lambda, double theta, double B, double delta) {
  BoundInputs in{n, q, delta, lambda, theta, beta, B, 0.0};
  in.validate();
  if (p < 1 || !(d >= 1.0)) throw DomainError("p and d must be >= 1");
  double alpha_sum = 0.0, weighted = 0.0;
  for (const auto& [a, t] : alpha_tau) {
    if (!(a >= 0.0) || !(t >= 0.0)) throw DomainError("alpha and tau must be non-negative");
    alpha_sum += a;
    weighted += a * t;
  }
  if (alpha_sum > beta + kBudgetSlack) throw DomainError("sum of alpha exceeds the budget beta");
  const double lg = std::log(3.0 * n * q * d * beta);
  const double inner = lambda / std::sqrt(n) * (std::sqrt(static_cast<double>(p)) * lg * lg * weighted + 1.0);
  return std::pow(inner, 1.0 / (1.0 - theta)) + detail::confidence_tail(B, delta, n, 1.0);
}

struct Certificate {
  BoundInputs inputs;
  std::string loss;
  int d = 1;
  int p = 0;                  // largest leaf count in the ensemble
  double weighted_tau = 0.0;  // sum_t alpha_t tau_t
  double empirical_risk = 0.0;
  double gamma = 0.0;
  double rhat = 0.0;
  double r0 = 0.0;
  double bound_explicit = 0.0;
  double bound_cform = 0.0;
  double ensemble_term = 0.0;
  double c0 = 1.0;
  std::string model_hash;
  std::string created;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Risk certificate for a trained ensemble.
///
/// The complexity of the projected ensemble class is bounded analytically by
/// the tree-class bound with p = max leaves and tau = sum_t alpha_t tau_t, never
/// by a data-dependent estimate. beta and B below 1 are raised to 1 (the bounds
/// only get looser). A loss with theta > 1/2 is relaxed to theta = 1/2.
inline Certificate certify(const Ensemble& ens, const Dataset& data, const LossKind& loss, double delta,
                           double c0 = 1.0, std::string created = utc_timestamp()) {
  if (!(c0 > 0.0)) throw DomainError("c0 must be positive");
  SblParams sp = declared_params(loss);
  if (!std::isfinite(sp.bound)) throw DomainError("certify needs a bounded loss; clip it, e.g. clip(" + to_string(loss) + ",B=3)");
  if (!std::isfinite(sp.lambda)) throw DomainError("certify needs a finite SBL constant");
  if (sp.theta > 0.5) sp = relax_theta(sp, 0.5);

  Certificate c;
  c.loss = to_string(loss);
  c.d = ens.d();
  c.p = ens.max_leaves();
  c.weighted_tau = ens.weighted_tau();
  c.c0 = c0;
  c.inputs = {static_cast<double>(data.n()), static_cast<double>(ens.q()), delta, sp.lambda, sp.theta,
              std::max(ens.beta(), 1.0), std::max(sp.bound, 1.0), 0.0};
  c.inputs.validate();
  const double n = c.inputs.n, q = c.inputs.q;
  if (c.p >= 2 && c.weighted_tau > 0.0) c.inputs.rad_nq = tree_class_rad_bound(c.p, c.weighted_tau, c.d, n, ens.q());

  c.empirical_risk = empirical_risk(ens, data, loss);
  c.gamma = gamma(c.inputs);
  c.rhat = rhat(sp.lambda, sp.theta, q, n, c.inputs.beta, c.inputs.rad_nq);
  c.r0 = r0(c.inputs.loss_bound, delta, n);
  c.bound_explicit = bound_uniform_explicit(c.empirical_risk, c.rhat, c.r0);

  std::vector<std::pair<double, double>> at;
  for (const auto& s : ens.stages()) at.emplace_back(s.alpha, s.tree.tau());
  c.ensemble_term = ensemble_gamma(at, std::max(c.p, 1), n, q, c.d, c.inputs.beta, sp.lambda, sp.theta,
                                   c.inputs.loss_bound, delta);
  c.bound_cform = bound_cform(c.empirical_risk, c.ensemble_term, c0);

  for (double v : {c.gamma, c.rhat, c.r0, c.bound_explicit, c.bound_cform, c.ensemble_term})
    if (!std::isfinite(v)) throw DomainError("certificate value is not finite");
  if (c.bound_explicit < c.empirical_risk || c.bound_cform < c.empirical_risk)
    throw std::logic_error("certificate bound below empirical risk");
  c.model_hash = model_hash(ens);
  c.created = std::move(created);
  return c;
}

inline json bound_inputs_to_json(const BoundInputs& in) {
  return {{"n", in.n},          {"q", in.q},        {"delta", in.delta},           {"lambda", in.lambda},
          {"theta", in.theta},  {"beta", in.beta},  {"loss_bound", in.loss_bound}, {"rad_nq", in.rad_nq}};
}

/// Everything except the creation time; byte-stable for a given model, data and delta.
inline json certificate_payload(const Certificate& c) {
  json inputs = bound_inputs_to_json(c.inputs);
  inputs["d"] = c.d;
  inputs["p"] = c.p;
  inputs["weighted_tau"] = c.weighted_tau;
  inputs["loss"] = c.loss;
  return {{"schema", kCertificateSchema},
          {"inputs", std::move(inputs)},
          {"empirical_risk", c.empirical_risk},
          {"gamma", c.gamma},
          {"rhat", c.rhat},
          {"r0", c.r0},
          {"bound_explicit", c.bound_explicit},
          {"bound_cform", c.bound_cform},
          {"ensemble_term", c.ensemble_term},
          {"constants",
           {{"c0", c.c0},
            {"contraction", kContractionConstant},
            {"corollary", {kUniformBoundConstants[0], kUniformBoundConstants[1], kErmBoundConstants[0], kErmBoundConstants[1]}}}},
          {"model_hash", c.model_hash},
          {"toolkit_version", kToolkitVersion}};
}

inline json certificate_to_json(const Certificate& c) {
  json doc = certificate_payload(c);
  doc["created"] = c.created;
  return doc;
}

}  // namespace mobound
