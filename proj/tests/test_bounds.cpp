#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mobound/bounds.hpp"
#include "mobound/detail/random.hpp"
#include "oracles.hpp"

using namespace mobound;

namespace {

constexpr double kE = std::numbers::e;

Dataset blobs(std::size_t n, int q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.schema = {TaskKind::Multiclass, q, 0};
  ds.X = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(detail::uniform_index(rng, static_cast<std::uint64_t>(q)));
    ds.X(i, 0) = c + detail::uniform(rng, -0.4, 0.4);
    ds.X(i, 1) = detail::uniform(rng, -1, 1);
    ds.labels.push_back(ClassIndex{c});
  }
  return ds;
}

// Straight transcription of the Gamma formula, kept apart from the library.
double gamma_reference(double n, double q, double delta, double lambda, double theta, double beta, double B, double R) {
  const double L = std::log(kE * beta * n * q);
  const double a = lambda * (std::sqrt(q) * L * std::sqrt(L) * R + std::pow(n, -0.5));
  return std::exp(std::log(a) / (1.0 - theta)) + B / n * (-std::log(delta) + std::log(std::log(n)));
}

double slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += std::log(xs[i]), my += std::log(ys[i]);
  mx /= xs.size(), my /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (std::log(xs[i]) - mx) * (std::log(ys[i]) - my);
    sxx += (std::log(xs[i]) - mx) * (std::log(xs[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST(R0, Values) {
  EXPECT_NEAR(r0(1, 0.05, 1000), (std::log(20.0) + 6 * std::log(std::log(1000.0))) / 1000, 1e-15);
  EXPECT_NEAR(r0(1, 0.05, 1000), 0.01459, 5e-6);
  const double n = std::round(std::exp(kE));
  EXPECT_NEAR(r0(1, 1 / kE, n), (1 + 6 * std::log(std::log(n))) / n, 1e-15);
  EXPECT_DOUBLE_EQ(r0(2, 0.1, 50), 2 * r0(1, 0.1, 50));
  EXPECT_THROW(r0(1, 0.1, 2), DomainError);
  EXPECT_THROW(r0(1, 1.0, 10), DomainError);
}

TEST(Rhat, ClosedFormCases) {
  EXPECT_NEAR(rhat(1, 0, 3, 400, 1, 0), 0.05, 1e-16);
  const double inner = rhat(2, 0, 5, 1000, 1, 0.005);
  EXPECT_NEAR(rhat(2, 0.5, 5, 1000, 1, 0.005), inner * inner, 1e-12 * inner * inner);
  EXPECT_THROW(rhat(1, 0.6, 1, 100, 1, 0), DomainError);
}

TEST(Rhat, IsFixedPointOfLocalBound) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const double lambda = detail::uniform(rng, 0.1, 4), theta = detail::uniform(rng, 0, 0.5);
    const double q = 1 + detail::uniform_index(rng, 20), n = 10 + detail::uniform_index(rng, 5000);
    const double beta = detail::uniform(rng, 1, 4), rad = detail::uniform(rng, 0, 0.02);
    // phi(r) = a r^theta; the oracle bisects a r^theta = r.
    const double L = std::log(kE * beta * n * q);
    const double a = lambda * (512 * std::sqrt(q) * std::pow(L, 1.5) * rad + 1 / std::sqrt(n));
    const double expect = oracle::fixed_point(a, theta);
    const double got = rhat(lambda, theta, q, n, beta, rad);
    EXPECT_NEAR(got, expect, 1e-10 * std::max(1.0, expect));
    EXPECT_NEAR(local_contraction_bound(lambda, theta, got, q, n, beta, rad), got, 1e-10 * std::max(1.0, got));
  }
  const double r = rhat(2, 0.5, 5, 1000, 1, 0.005);
  const double L = std::log(kE * 5000);
  EXPECT_NEAR(r, oracle::fixed_point(2 * (512 * std::sqrt(5.0) * std::pow(L, 1.5) * 0.005 + 1 / std::sqrt(1000.0)), 0.5),
              1e-10);
}

TEST(Gamma, MatchesReferenceAndDecomposes) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 500; ++t) {
    BoundInputs in{3.0 + detail::uniform_index(rng, 100000), 1.0 + detail::uniform_index(rng, 50),
                   detail::uniform(rng, 0.001, 0.5), detail::uniform(rng, 0.1, 5), detail::uniform(rng, 0, 0.5),
                   detail::uniform(rng, 1, 5), detail::uniform(rng, 1, 5), detail::uniform(rng, 0, 0.1)};
    const double ref = gamma_reference(in.n, in.q, in.delta, in.lambda, in.theta, in.beta, in.loss_bound, in.rad_nq);
    EXPECT_NEAR(gamma(in), ref, 1e-12 * ref);
    EXPECT_DOUBLE_EQ(gamma(in), gamma_main(in) + gamma_tail(in));
  }
  BoundInputs base{1000, 4, 0.05, 1, 0, 1, 1, 0};
  EXPECT_NEAR(gamma(base), 1 / std::sqrt(1000.0) + (std::log(20.0) + std::log(std::log(1000.0))) / 1000, 1e-15);
}

TEST(Gamma, RejectsInvalidInputs) {
  const BoundInputs ok{100, 2, 0.05, 1, 0.5, 1, 1, 0.01};
  EXPECT_NO_THROW(gamma(ok));
  auto bad = ok;
  bad.n = 2;
  EXPECT_THROW(gamma(bad), DomainError);
  bad = ok, bad.beta = 0.5;
  EXPECT_THROW(gamma(bad), DomainError);
  bad = ok, bad.loss_bound = 0.5;
  EXPECT_THROW(gamma(bad), DomainError);
  bad = ok, bad.theta = 0.7;
  EXPECT_THROW(gamma(bad), DomainError);
  bad = ok, bad.delta = 0;
  EXPECT_THROW(gamma(bad), DomainError);
}

TEST(Bounds, Monotonicity) {
  const BoundInputs base{500, 4, 0.05, 1.5, 0.3, 2, 2, 0.01};
  const double g = gamma(base);
  auto up = [&](auto field, double v) {
    BoundInputs in = base;
    in.*field = v;
    return gamma(in);
  };
  EXPECT_GT(up(&BoundInputs::lambda, 1.6), g);
  EXPECT_GT(up(&BoundInputs::rad_nq, 0.02), g);
  EXPECT_GT(up(&BoundInputs::loss_bound, 3), g);
  EXPECT_GT(up(&BoundInputs::beta, 3), g);
  EXPECT_GT(up(&BoundInputs::q, 5), g);
  EXPECT_GT(up(&BoundInputs::delta, 0.01), g);
  for (double n = 100; n < 1e7; n *= 1.5) {
    // R shrinks like 1/sqrt(nq); with R held fixed the log factor grows with n.
    BoundInputs a = base, b = base;
    a.n = n, b.n = n * 1.5;
    a.rad_nq = 0.2 / std::sqrt(a.n * a.q), b.rad_nq = 0.2 / std::sqrt(b.n * b.q);
    EXPECT_GE(gamma(a), gamma(b)) << n;
    EXPECT_GE(r0(2, 0.05, n), r0(2, 0.05, n * 1.5));
    EXPECT_GE(rhat(1.5, 0.3, 4, n, 2, 0.01 / std::sqrt(n / 100)), rhat(1.5, 0.3, 4, n * 1.5, 2, 0.01 / std::sqrt(n * 1.5 / 100)));
  }
  for (double e : {0.0, 0.1, 0.5}) {
    EXPECT_LE(bound_uniform_explicit(e, 0.01, 0.02), bound_uniform_explicit(e + 0.01, 0.01, 0.02));
    EXPECT_LE(bound_uniform_explicit(e, 0.01, 0.02), bound_uniform_explicit(e, 0.02, 0.02));
    EXPECT_LE(bound_erm_explicit(e, 0.01, 0.02), bound_erm_explicit(e + 0.01, 0.01, 0.03));
    EXPECT_LE(bound_cform(e, 0.01), bound_cform(e, 0.02));
  }
}

TEST(Bounds, ExplicitForms) {
  EXPECT_NEAR(bound_uniform_explicit(0.1, 0.004, 0.006), 0.1 + 0.9 + 4 * std::sqrt(0.001), 1e-15);
  EXPECT_NEAR(bound_uniform_explicit(0.1, 0.004, 0.006), 1.12649, 1e-5);
  EXPECT_DOUBLE_EQ(bound_uniform_explicit(0, 0.01, 0.02), 90 * 0.03);
  EXPECT_EQ(bound_uniform_explicit(0.3, 0, 0), 0.3);
  EXPECT_DOUBLE_EQ(bound_erm_explicit(0, 0.01, 0.02), 100 * 0.03);
  EXPECT_EQ(bound_erm_explicit(0.3, 0, 0), 0.3);
  EXPECT_NEAR(bound_erm_explicit(0.2, 0.01, 0.03), 0.2 + 9 * std::sqrt(0.008) + 4, 1e-15);
  EXPECT_NEAR(bound_cform(0.2, 0.05, 2), 0.2 + 2 * (0.1 + 0.05), 1e-15);
  EXPECT_THROW(bound_uniform_explicit(-1, 0, 0), DomainError);
}

TEST(Bernstein, Values) {
  EXPECT_NEAR(bernstein_upper(0, 1, 100, 0.05), std::log(20.0) / 100, 1e-15);
  EXPECT_EQ(bernstein_upper(0.3, 2, 100, 1), 0.3);
  EXPECT_NEAR(bernstein_upper(0.2, 1, 100, 0.05), 0.2 + std::sqrt(0.4 * std::log(20.0) / 100) + std::log(20.0) / 100,
              1e-15);
  EXPECT_NEAR(bernstein_upper(0.2, 1, 100, 0.05), 0.3395, 1e-4);
  // The coarse form dominates (AM-GM).
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const double mu = detail::uniform(rng, 0, 1), B = detail::uniform(rng, 0.1, 3), n = 1 + detail::uniform_index(rng, 1000);
    const double delta = detail::uniform(rng, 1e-4, 1);
    EXPECT_LE(bernstein_upper(mu, B, n, delta), bernstein_upper_coarse(mu, B, n, delta) * (1 + 1e-14));
  }
}

TEST(Comparison, Values) {
  BoundInputs in{400, 4, 0.05, 1, 0, 1, 1, 0};
  EXPECT_NEAR(bound_lipschitz_comparison(in, 0.1), 0.1 + 0.05 + std::sqrt(std::log(20.0) / 400), 1e-15);
  EXPECT_NEAR(bound_lipschitz_comparison(in, 0.1, 3), 0.1 + 0.15 + std::sqrt(std::log(20.0) / 400), 1e-15);
  BoundInputs twice = in;
  twice.loss_bound = 2;
  EXPECT_NEAR(bound_lipschitz_comparison(twice, 0) - bound_lipschitz_comparison(in, 0), std::sqrt(std::log(20.0) / 400),
              1e-15);
  in.theta = 0.5;
  EXPECT_THROW(bound_lipschitz_comparison(in, 0), DomainError);
}

TEST(Comparison, FastRateWinsForLargeN) {
  // A theta = 1/2 loss with range B = 1 at zero empirical risk, R = 1/sqrt(nq).
  const SblParams sbl{2.0, 0.5, 1.0};
  const SblParams lip = relax_theta(sbl, 0.0);
  std::vector<double> ns, fast, slow;
  for (double n = 1e3; n <= 1e6; n *= 10) {
    const double q = 4, R = 1 / std::sqrt(n * q);
    const BoundInputs a{n, q, 0.05, sbl.lambda, sbl.theta, 1, 1, R};
    const BoundInputs b{n, q, 0.05, lip.lambda, 0.0, 1, 1, R};
    ns.push_back(n);
    fast.push_back(bound_cform(0, gamma(a)));
    slow.push_back(bound_lipschitz_comparison(b, 0));
  }
  EXPECT_LT(slope(ns, fast), slope(ns, slow) - 0.2);
  EXPECT_LT(fast.back(), slow.back());
}

TEST(Gamma, FastRateSlopes) {
  const std::vector<double> ns{250, 500, 1000, 2000, 4000};
  const double q = 1e4;
  for (double theta : {0.5, 0.0}) {
    std::vector<double> g;
    for (double n : ns) g.push_back(gamma({n, q, 0.05, 1, theta, 1, 1, 1 / std::sqrt(n * q)}));
    const double s = slope(ns, g);
    if (theta == 0.5) {
      EXPECT_GE(s, -1.25);
      EXPECT_LE(s, -0.8);
    } else {
      EXPECT_GE(s, -0.65);
      EXPECT_LE(s, -0.4);
    }
  }
}

TEST(EnsembleGamma, Values) {
  const std::vector<std::pair<double, double>> none;
  const double tail = (std::log(20.0) + std::log(std::log(1000.0))) / 1000;
  EXPECT_NEAR(ensemble_gamma(none, 4, 1000, 5, 3, 2, 2, 0.5, 3, 0.05), std::pow(2 / std::sqrt(1000.0), 2) + 3 * tail,
              1e-15);
  const std::vector<std::pair<double, double>> at{{0.5, 1}, {0.25, 2}, {1.0, 0.5}};
  const double lg = std::log(3.0 * 1000 * 5 * 3 * 2);
  const double inner = 2 / std::sqrt(1000.0) * (2 * lg * lg * 1.5 + 1);
  EXPECT_NEAR(ensemble_gamma(at, 4, 1000, 5, 3, 2, 2, 0.5, 3, 0.05), inner * inner + 3 * tail, 1e-12);
  // theta = 0: scaling alpha by c scales the sum term linearly.
  const auto base = ensemble_gamma(at, 4, 1000, 5, 3, 4, 2, 0, 3, 0.05);
  std::vector<std::pair<double, double>> scaled;
  for (auto [a, t] : at) scaled.emplace_back(2 * a, t);
  const double lg4 = std::log(3.0 * 1000 * 5 * 3 * 4);
  EXPECT_NEAR(ensemble_gamma(scaled, 4, 1000, 5, 3, 4, 2, 0, 3, 0.05) - base, 2 / std::sqrt(1000.0) * 2 * lg4 * lg4 * 1.5,
              1e-12);
  EXPECT_THROW(ensemble_gamma(at, 4, 1000, 5, 3, 1.5, 2, 0.5, 3, 0.05), DomainError);
}

TEST(Certify, ZeroEnsemble) {
  const Dataset ds = blobs(200, 5, 1);
  const Ensemble ens(MultinomialLogistic{}, 2.0, 5, 2);
  const auto loss = clip(MultinomialLogistic{}, 3);
  const auto c = certify(ens, ds, loss, 0.05, 1.0, "t");
  EXPECT_NEAR(c.empirical_risk, std::log(5.0), 1e-12);
  EXPECT_GT(c.gamma, 0);
  EXPECT_EQ(c.inputs.rad_nq, 0.0);
  EXPECT_EQ(c.inputs.loss_bound, 3.0);
  EXPECT_EQ(c.inputs.lambda, 2.0);
  EXPECT_NEAR(c.rhat, 4.0 / 200, 1e-15);
  EXPECT_DOUBLE_EQ(c.bound_explicit, bound_uniform_explicit(c.empirical_risk, c.rhat, c.r0));
  EXPECT_GE(c.bound_cform, c.empirical_risk);
  EXPECT_THROW(certify(ens, ds, MultinomialLogistic{}, 0.05), DomainError);
  EXPECT_THROW(certify(ens, ds, ZeroOne{}, 0.05), DomainError);
}

TEST(Certify, TrainedModelAndDeterminism) {
  const Dataset ds = blobs(300, 3, 2);
  TrainConfig cfg;
  cfg.rounds = 10;
  cfg.beta = 2;
  cfg.tree.leaves = 4;
  const auto loss = clip(MultinomialLogistic{}, 3);
  const Ensemble ens = train(ds, MultinomialLogistic{}, cfg);
  ASSERT_FALSE(ens.stages().empty());
  const auto a = certify(ens, ds, loss, 0.05, 1.0, "2026-01-01T00:00:00Z");
  const auto b = certify(ens, ds, loss, 0.05, 1.0, "2030-01-01T00:00:00Z");
  EXPECT_EQ(certificate_payload(a).dump(), certificate_payload(b).dump());
  EXPECT_NE(certificate_to_json(a).dump(), certificate_to_json(b).dump());
  EXPECT_NEAR(a.inputs.rad_nq, tree_class_rad_bound(ens.max_leaves(), ens.weighted_tau(), 2, 300, 3), 1e-15);
  std::vector<std::pair<double, double>> at;
  for (const auto& s : ens.stages()) at.emplace_back(s.alpha, s.tree.tau());
  EXPECT_DOUBLE_EQ(a.ensemble_term, ensemble_gamma(at, ens.max_leaves(), 300, 3, 2, 2, 2, 0.5, 3, 0.05));
  EXPECT_GT(a.bound_explicit, a.empirical_risk);
  EXPECT_LT(a.empirical_risk, std::log(3.0));
  const auto doc = certificate_to_json(a);
  EXPECT_EQ(doc["constants"]["contraction"].get<double>(), 512);
  EXPECT_EQ(doc["model_hash"].get<std::string>(), model_hash(ens));
  EXPECT_EQ(doc["created"].get<std::string>(), "2026-01-01T00:00:00Z");
}

TEST(Certify, RelaxesThetaAboveHalf) {
  Dataset ds;
  ds.schema = {TaskKind::Binary, 1, 0};
  ds.X = Matrix(20, 1);
  for (std::size_t i = 0; i < 20; ++i) {
    ds.X(i, 0) = static_cast<double>(i);
    ds.labels.push_back(BinarySign{i % 2 ? 1 : -1});
  }
  const Ensemble ens(BoundedExponential{}, 1.0, 1, 1);
  const auto c = certify(ens, ds, BoundedExponential{}, 0.1, 1.0, "t");
  EXPECT_EQ(c.inputs.theta, 0.5);
  EXPECT_EQ(c.inputs.lambda, 1.0);
  EXPECT_EQ(c.empirical_risk, 1.0);
}
