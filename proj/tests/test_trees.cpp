#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mobound/detail/random.hpp"
#include "mobound/trees.hpp"
#include "oracles.hpp"

using namespace mobound;

namespace {

MultiTree stump(double threshold, std::vector<double> left, std::vector<double> right, double tau = 1.0) {
  const auto q = left.size();
  std::vector<double> data = left;
  data.insert(data.end(), right.begin(), right.end());
  return MultiTree({{0, threshold, leaf_ref(0), leaf_ref(1)}}, Matrix(2, q, data), tau, 2);
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (double& v : m.data()) v = detail::uniform(rng, lo, hi);
  return m;
}

double weighted_sse(const MultiTree& t, const Matrix& X, const Matrix& R) {
  double s = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto w = t.predict(X.row(i));
    for (std::size_t j = 0; j < R.cols(); ++j) s += (R(i, j) - w[j]) * (R(i, j) - w[j]);
  }
  return s;
}

}  // namespace

TEST(Trees, Routing) {
  const auto t = stump(0.5, {1, 0}, {-1, 0});
  EXPECT_EQ(t.leaf_index(std::vector<double>{0.3, 9}), 0);
  EXPECT_EQ(t.leaf_index(std::vector<double>{0.5, 9}), 0);
  EXPECT_EQ(t.leaf_index(std::vector<double>{0.7, 9}), 1);
  EXPECT_EQ(t.predict(std::vector<double>{0.3, 0})[0], 1.0);
  EXPECT_EQ(t.predict(std::vector<double>{0.9, 0})[0], -1.0);
  EXPECT_THROW(t.leaf_index(std::vector<double>{0.3}), DataError);
}

TEST(Trees, ZeroLeavesPredictZero) {
  const auto t = stump(0.0, {0, 0, 0}, {0, 0, 0});
  for (double v : t.predict(std::vector<double>{1, 2})) EXPECT_EQ(v, 0.0);
}

TEST(Trees, InvalidStructuresRejected) {
  EXPECT_THROW(MultiTree({}, Matrix(1, 2), 1.0, 1), DataError);
  EXPECT_THROW(stump(0.0, {0.8, 0.8}, {0, 0}), DataError);  // l1 = 1.6 > tau
  EXPECT_THROW(stump(0.0, {1.5, 0}, {0, 0}, 4.0), DataError);  // box
  EXPECT_THROW(MultiTree({{0, 0.0, leaf_ref(0), leaf_ref(0)}}, Matrix(2, 1), 1.0, 1), DataError);
  EXPECT_THROW(MultiTree({{3, 0.0, leaf_ref(0), leaf_ref(1)}}, Matrix(2, 1), 1.0, 1), DataError);
}

TEST(Projection, Examples) {
  auto w = project_l1_box(std::vector<double>{0.2, -0.1}, 1.0);
  EXPECT_EQ(w, (std::vector<double>{0.2, -0.1}));
  w = project_l1_box(std::vector<double>{3, 0}, 1.0);
  EXPECT_EQ(w, (std::vector<double>{1, 0}));
  w = project_l1_box(std::vector<double>{1, 1}, 1.0);
  const auto o = oracle::l1_box_projection({1, 1}, 1.0);
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[1], 0.5, 1e-15);
  EXPECT_NEAR(o[0], 0.5, 1e-10);
  EXPECT_THROW(project_l1_box(std::vector<double>{NAN}, 1.0), DataError);
}

TEST(Projection, MatchesOracleAndIsIdempotent) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 2000; ++t) {
    const auto q = 1 + detail::uniform_index(rng, 6);
    std::vector<double> v(q);
    for (double& x : v) x = detail::uniform(rng, -3, 3);
    const double tau = detail::uniform(rng, 0.05, 4);
    const auto w = project_l1_box(v, tau);
    const auto o = oracle::l1_box_projection(v, tau);
    double dist = 0.0, l1 = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      dist += (w[j] - o[j]) * (w[j] - o[j]);
      l1 += std::abs(w[j]);
      ASSERT_LE(std::abs(w[j]), 1.0);
    }
    ASSERT_LE(std::sqrt(dist), 1e-8);
    ASSERT_LE(l1, tau + 1e-12);
    ASSERT_EQ(project_l1_box(w, tau), w);
  }
}

TEST(FitTree, ConstantResidualsGiveConstantLeaves) {
  std::mt19937_64 rng(1);
  const Matrix X = random_matrix(30, 3, rng);
  Matrix R(30, 3);
  for (std::size_t i = 0; i < 30; ++i) {
    R(i, 0) = 0.25;
    R(i, 1) = -0.5;
    R(i, 2) = 0.0;
  }
  const std::vector<double> w(30, 1.0);
  const auto t = fit_tree(X, R, w, {4, 1.0, 1, {}});
  EXPECT_EQ(t.leaf_count(), 4);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_NEAR(t.leaves()(l, 0), 0.25, 1e-15);
    EXPECT_NEAR(t.leaves()(l, 1), -0.5, 1e-15);
    EXPECT_EQ(t.leaves()(l, 2), 0.0);
  }
}

TEST(FitTree, SignSplitAtMidpoint) {
  const Matrix X(6, 1, {-3, -1.5, -0.4, 0.2, 1, 2.5});
  const Matrix R(6, 1, {-0.5, -0.5, -0.5, 0.5, 0.5, 0.5});
  const std::vector<double> w(6, 1.0);
  const auto t = fit_tree(X, R, w, {2, 1.0, 1, {}});
  ASSERT_EQ(t.nodes().size(), 1u);
  EXPECT_EQ(t.nodes()[0].feature, 0);
  EXPECT_NEAR(t.nodes()[0].threshold, -0.1, 1e-15);
  EXPECT_EQ(t.leaves()(0, 0), -0.5);
  EXPECT_EQ(t.leaves()(1, 0), 0.5);
}

TEST(FitTree, StumpMatchesExhaustiveSearch) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + detail::uniform_index(rng, 20), d = 1 + detail::uniform_index(rng, 3),
                      q = 1 + detail::uniform_index(rng, 3);
    Matrix X = random_matrix(n, d, rng);
    for (double& v : X.data()) v = std::round(v * 4) / 4;  // ties
    const Matrix R = random_matrix(n, q, rng, -0.3, 0.3);  // small enough that projection never binds
    const std::vector<double> w(n, 1.0);
    const auto t = fit_tree(X, R, w, {2, 10.0, 1, {}});

    double best = 0.0;
    {
      std::vector<double> mean(q, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) mean[j] += R(i, j) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) best += (R(i, j) - mean[j]) * (R(i, j) - mean[j]);
    }
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t a = 0; a < n; ++a) {
        const double thr = X(a, f);
        std::vector<double> sl(q, 0.0), sr(q, 0.0);
        double nl = 0, nr = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const bool left = X(i, f) <= thr;
          (left ? nl : nr) += 1;
          for (std::size_t j = 0; j < q; ++j) (left ? sl : sr)[j] += R(i, j);
        }
        if (nl == 0 || nr == 0) continue;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const bool left = X(i, f) <= thr;
          for (std::size_t j = 0; j < q; ++j) {
            const double m = left ? sl[j] / nl : sr[j] / nr;
            sse += (R(i, j) - m) * (R(i, j) - m);
          }
        }
        best = std::min(best, sse);
      }
    }
    ASSERT_NEAR(weighted_sse(t, X, R), best, 1e-10);
  }
}

TEST(FitTree, SingleSampleAndConstantFeatures) {
  const Matrix X(1, 2, {0.3, 0.1});
  const Matrix R(1, 2, {2.0, -0.5});
  const std::vector<double> w(1, 1.0);
  const auto t = fit_tree(X, R, w, {2, 1.0, 1, {}});
  EXPECT_EQ(t.leaf_count(), 2);
  const auto expect = project_l1_box(R.row(0), 1.0);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(t.leaves()(l, j), expect[j]);

  const Matrix Xc(5, 1, 7.0);
  const Matrix Rc(5, 1, {1, -1, 0.5, 0.2, -0.3});
  const auto tc = fit_tree(Xc, Rc, std::vector<double>(5, 1.0), {3, 1.0, 1, {}});
  EXPECT_EQ(tc.leaf_count(), 3);
  EXPECT_EQ(tc.leaves()(0, 0), tc.leaves()(1, 0));
  EXPECT_EQ(tc.leaves()(0, 0), tc.leaves()(2, 0));
}

TEST(FitTree, Errors) {
  const std::vector<double> w;
  EXPECT_THROW(fit_tree(Matrix(0, 1), Matrix(0, 1), w, {}), DataError);
  EXPECT_THROW(fit_tree(Matrix(1, 1, NAN), Matrix(1, 1), std::vector<double>{1.0}, {}), DataError);
  EXPECT_THROW(fit_tree(Matrix(1, 1), Matrix(1, 1), std::vector<double>{1.0}, {1, 1.0, 1, {}}), DomainError);
}

TEST(FitTree, ConstraintsHoldOnRandomFits) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + detail::uniform_index(rng, 40), d = 1 + detail::uniform_index(rng, 4),
                      q = 1 + detail::uniform_index(rng, 5);
    const Matrix X = random_matrix(n, d, rng);
    const Matrix R = random_matrix(n, q, rng, -4, 4);
    std::vector<double> w(n);
    for (double& v : w) v = detail::uniform(rng, 0.1, 2);
    TreeConfig cfg{2 + static_cast<int>(detail::uniform_index(rng, 6)), detail::uniform(rng, 0.1, 3), 1, {}};
    if (trial % 2) cfg.split_candidates = {SplitCandidates::Mode::Quantile, 3};
    const auto t = fit_tree(X, R, w, cfg);
    ASSERT_EQ(t.leaf_count(), cfg.leaves);
    for (std::size_t l = 0; l < t.leaves().rows(); ++l) {
      double l1 = 0.0;
      for (double v : t.leaves().row(l)) {
        ASSERT_LE(std::abs(v), 1.0 + 1e-12);
        l1 += std::abs(v);
      }
      ASSERT_LE(l1, cfg.tau + 1e-12);
    }
  }
}

TEST(FitTree, MoreLeavesNeverIncreaseResidual) {
  std::mt19937_64 rng(4);
  const Matrix X = random_matrix(80, 3, rng);
  const Matrix R = random_matrix(80, 2, rng, -0.4, 0.4);
  const std::vector<double> w(80, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int p = 2; p <= 12; ++p) {
    const double sse = weighted_sse(fit_tree(X, R, w, {p, 10.0, 1, {}}), X, R);
    EXPECT_LE(sse, prev + 1e-12);
    prev = sse;
  }
}
