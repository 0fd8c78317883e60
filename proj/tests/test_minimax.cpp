#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mobound/minimax.hpp"

using namespace mobound;

namespace {

MinimaxInstance instance(double lambda, double theta, int n, int q, double kappa, std::uint64_t seed) {
  auto rng = detail::stream_rng(seed, 99);
  return make_instance(lambda, theta, n, q, kappa, rng);
}

}  // namespace

TEST(Minimax, InstanceConstruction) {
  const auto inst = instance(1, 0.5, 50, 3, 4, 1);
  EXPECT_DOUBLE_EQ(inst.delta_gap, std::sqrt(4.0 / 100));
  ASSERT_EQ(inst.sigma.size(), 100u);
  double sq = 0.0, sup = 0.0;
  for (std::size_t r = 0; r < inst.support(); ++r) {
    EXPECT_TRUE(inst.sigma[r] == 1 || inst.sigma[r] == -1);
    const auto y = inst.target(r);
    ASSERT_EQ(y.size(), 3u);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_EQ(y[2], 0.0);
    sq += y[0] * y[0];
    sup = std::max(sup, std::abs(y[0]));
  }
  EXPECT_NEAR(sq, inst.kappa, 1e-12);
  EXPECT_LE(sup, 1.0);
  EXPECT_LE(inst.lambda * inst.delta_gap, 1.0);
}

TEST(Minimax, ParameterErrors) {
  auto rng = detail::stream_rng(0, 0);
  EXPECT_THROW(make_instance(1, 0.6, 10, 2, 1, rng), DomainError);
  EXPECT_THROW(make_instance(1, 0.5, 10, 2, 0.5, rng), DomainError);
  EXPECT_THROW(make_instance(2, 0.5, 10, 2, 3, rng), DomainError);  // kappa > n / lambda^2
  EXPECT_THROW(make_instance(0.1, 0.5, 10, 2, 50, rng), DomainError);  // |Delta| > 1
  EXPECT_THROW(run_experiment(1, 0.5, 10, 2, 1, 0, 0), DomainError);
}

TEST(Minimax, SampleDataset) {
  const auto one = instance(1, 0, 1, 2, 1, 2);
  const auto d1 = sample_dataset(one, 5);
  ASSERT_EQ(d1.size(), 1u);
  EXPECT_DOUBLE_EQ(std::abs(d1[0].label[0]), one.delta_gap);

  const auto inst = instance(1, 0, 10, 2, 4, 3);
  std::vector<long> counts(inst.support(), 0);
  auto rng = detail::stream_rng(17, 0);
  for (int rep = 0; rep < 10000; ++rep)
    for (const auto& s : sample_dataset(inst, rng)) {
      ++counts[s.index];
      double sup = 0.0;
      for (double v : s.label) sup = std::max(sup, std::abs(v));
      EXPECT_EQ(sup, inst.delta_gap);
      EXPECT_EQ(s.label, inst.target(s.index));
    }
  const double expected = 1e5 / 20.0;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 36.191);  // chi-square, 19 dof, 1% upper quantile
}

TEST(Minimax, TrueRiskOfLearners) {
  for (double theta : {0.0, 0.25, 0.5}) {
    const auto inst = instance(1.5, theta, 20, 2, 3, 4);
    const double miss = minimax_miss_loss(1.5, theta, inst.delta_gap);
    EXPECT_NEAR(miss, std::pow(1.5 * inst.delta_gap, 1 / (1 - theta)) / 32, 1e-15);
    const auto data = sample_dataset(inst, 8);
    EXPECT_EQ(true_risk(inst, fit_learner(LearnerKind::Oracle, inst, data)), 0.0);
    EXPECT_NEAR(true_risk(inst, fit_learner(LearnerKind::ConstantZero, inst, data)), miss, 1e-15);

    std::vector<bool> seen(inst.support(), false);
    for (const auto& s : data) seen[s.index] = true;
    double unseen = 0;
    for (bool b : seen) unseen += !b;
    EXPECT_NEAR(true_risk(inst, fit_learner(LearnerKind::ErmMatchObserved, inst, data)),
                unseen / static_cast<double>(inst.support()) * miss, 1e-15);

    std::vector<MinimaxSample> all;
    for (std::size_t r = 0; r < inst.support(); ++r) all.push_back({r, inst.target(r)});
    EXPECT_EQ(true_risk(inst, fit_learner(LearnerKind::ErmMatchObserved, inst, all)), 0.0);
  }
}

TEST(Minimax, ExperimentAgainstEnvelopeAndClosedForm) {
  for (int n : {20, 50, 100})
    for (double theta : {0.0, 0.5}) {
      const auto rep = run_experiment(1, theta, n, 2, 1, 1000, 11);
      const double env = minimax_lower_envelope(1, theta, n, 1);
      EXPECT_DOUBLE_EQ(rep.lower_envelope, env);
      EXPECT_NEAR(env, std::pow(std::sqrt(1.0 / n), 1 / (1 - theta)) / 256, 1e-16);
      ASSERT_EQ(rep.learners.size(), 3u);
      const double miss = minimax_miss_loss(1, theta, std::sqrt(1.0 / (2.0 * n)));
      for (const auto& l : rep.learners) {
        switch (l.learner) {
          case LearnerKind::Oracle:
            EXPECT_EQ(l.mean_risk, 0.0);
            EXPECT_EQ(l.se, 0.0);
            break;
          case LearnerKind::ConstantZero:
            EXPECT_NEAR(l.mean_risk, miss, 1e-15);
            EXPECT_GE(l.mean_risk + 3 * l.se, env);
            break;
          case LearnerKind::ErmMatchObserved: {
            EXPECT_GE(l.mean_risk + 3 * l.se, env);
            const double expect = std::pow(1 - 1 / (2.0 * n), n) * miss;
            EXPECT_LE(std::abs(l.mean_risk - expect), 3 * l.se) << n << " " << theta;
            break;
          }
        }
      }
    }
}

TEST(Minimax, DeterministicAndCsv) {
  const auto a = run_experiment(1, 0.5, 30, 2, 2, 200, 5);
  const auto b = run_experiment(1, 0.5, 30, 2, 2, 200, 5);
  std::ostringstream sa, sb;
  write_minimax_csv_header(sa);
  write_minimax_csv(sa, a);
  write_minimax_csv(sb, b);
  EXPECT_NE(sa.str().find(sb.str()), std::string::npos);
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "lambda,theta,n,kappa,learner,mean_risk,se,lower_envelope");
  EXPECT_NE(sa.str().find(",oracle,0,0,"), std::string::npos);
}

TEST(Minimax, PowerLossIsSbl) {
  for (double theta : {0.0, 0.25, 0.5}) {
    const LossKind loss = MinimaxPower{1.5, theta};
    const auto rep = check_sbl(loss, declared_params(loss), 3, 20000, {}, 3);
    EXPECT_TRUE(rep.passed) << theta << " " << rep.max_violation;
  }
}
