// Solver checks against independent reference implementations: accelerated
// gradient descent for logistic regression, plus the oracles in
// support/solver_oracles.hpp for the SVM dual and the tree learner.
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lnm/forest.hpp"
#include "lnm/logistic.hpp"
#include "lnm/svm.hpp"
#include "support/solver_oracles.hpp"

namespace {

using lnm::DecisionTree;
using namespace lnm::testing;

// ---------------------------------------------------------------- logistic

TEST(Logistic, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const auto d = overlapping_blobs(rng, 50, 4, 0.8);
  std::normal_distribution<double> g(0.0, 0.7);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd w(4);
    for (int j = 0; j < 4; ++j) w[j] = g(rng);
    const double b = g(rng);
    const double l2 = 0.3 * (trial + 1);
    const Eigen::VectorXd grad = lnm::logistic_gradient(d.X, d.y, l2, w, b);
    ASSERT_EQ(grad.size(), 5);
    const double h = 1e-6;
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      double bp = b, bm = b;
      if (j < 4) {
        wp[j] += h;
        wm[j] -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (lnm::logistic_objective(d.X, d.y, l2, wp, bp) -
                         lnm::logistic_objective(d.X, d.y, l2, wm, bm)) / (2 * h);
      EXPECT_NEAR(grad[j], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "component " << j;
    }
  }
}

TEST(Logistic, NewtonAgreesWithGradientDescent) {
  std::mt19937_64 rng(12);
  const auto d = overlapping_blobs(rng, 60, 3, 1.0);
  const double l2 = 0.5;
  const auto model = lnm::fit_logistic(d.X, d.y, {l2});
  ASSERT_TRUE(model.converged);

  // Nesterov-accelerated gradient descent with a fixed 1/L step.
  Eigen::MatrixXd Xa(d.X.rows(), d.X.cols() + 1);
  Xa << d.X, Eigen::VectorXd::Ones(d.X.rows());
  const double L = Xa.squaredNorm() / 4.0 + l2;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(4), prev = theta;
  for (int it = 1; it <= 20000; ++it) {
    const Eigen::VectorXd look = theta + (it - 1.0) / (it + 2.0) * (theta - prev);
    const Eigen::VectorXd grad = lnm::logistic_gradient(d.X, d.y, l2, look.head(3), look[3]);
    prev = theta;
    theta = look - grad / L;
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(model.weights[j], theta[j], 1e-4);
  EXPECT_NEAR(model.intercept, theta[3], 1e-4);

  const Eigen::VectorXd grad = lnm::logistic_gradient(d.X, d.y, l2, model.weights, model.intercept);
  EXPECT_LT(grad.lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(Logistic, LossTraceIsMonotone) {
  std::mt19937_64 rng(13);
  const auto d = overlapping_blobs(rng, 80, 6, 1.5);
  const auto model = lnm::fit_logistic(d.X, d.y, {0.1});
  ASSERT_GE(model.loss_trace.size(), 2u);
  for (std::size_t k = 1; k < model.loss_trace.size(); ++k) {
    EXPECT_LE(model.loss_trace[k], model.loss_trace[k - 1] + 1e-12);
  }
}

TEST(Logistic, SeparableDataStillConvergesWithPenalty) {
  Eigen::MatrixXd X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const auto model = lnm::fit_logistic(X, y, {1e-2});
  EXPECT_TRUE(model.converged);
  EXPECT_TRUE(std::isfinite(model.weights[0]));
  EXPECT_GT(model.probability(X.row(5)), 0.9);
  EXPECT_LT(model.probability(X.row(0)), 0.1);
}

TEST(Logistic, SigmoidIsStableAtExtremes) {
  EXPECT_EQ(lnm::sigmoid(0.0), 0.5);
  EXPECT_NEAR(lnm::sigmoid(800.0), 1.0, 1e-15);
  EXPECT_GE(lnm::sigmoid(-800.0), 0.0);
  EXPECT_FALSE(std::isnan(lnm::sigmoid(-800.0)));
}

// --------------------------------------------------------------------- SVM

TEST(Svm, SmoMatchesProjectedGradientOptimum) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    std::mt19937_64 rng(seed);
    const auto d = overlapping_blobs(rng, 40, 2, 0.9);
    std::vector<int> pm(d.y.size());
    for (std::size_t i = 0; i < d.y.size(); ++i) pm[i] = d.y[i] ? 1 : -1;
    const Eigen::MatrixXd K = lnm::rbf_kernel(d.X, d.X, 0.5);
    for (double C : {0.5, 4.0}) {
      const auto sol = lnm::solve_smo(K, pm, C);
      ASSERT_TRUE(sol.converged);
      const double smo = lnm::dual_objective(sol.alpha, K, pm);
      const double ref = reference_dual_optimum(K, pm, C);
      EXPECT_NEAR(smo, ref, 1e-3) << "seed " << seed << " C " << C;
    }
  }
}

TEST(Svm, SmoSolutionSatisfiesKkt) {
  std::mt19937_64 rng(24);
  const auto d = overlapping_blobs(rng, 60, 3, 0.7);
  std::vector<int> pm(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) pm[i] = d.y[i] ? 1 : -1;
  const double C = 2.0;
  const Eigen::MatrixXd K = lnm::rbf_kernel(d.X, d.X, 1.0 / 3.0);
  const auto sol = lnm::solve_smo(K, pm, C);
  ASSERT_TRUE(sol.converged);

  double balance = 0.0;
  for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) balance += pm[static_cast<std::size_t>(i)] * sol.alpha[i];
  EXPECT_NEAR(balance, 0.0, 1e-9);

  const double tol = 1e-3 + 1e-9;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    const double a = sol.alpha[i];
    ASSERT_GE(a, -1e-12);
    ASSERT_LE(a, C + 1e-12);
    double f = sol.bias;
    for (Eigen::Index j = 0; j < K.rows(); ++j) f += sol.alpha[j] * pm[static_cast<std::size_t>(j)] * K(i, j);
    const double margin = pm[static_cast<std::size_t>(i)] * f;
    if (a <= 1e-12) {
      EXPECT_GE(margin, 1.0 - tol) << i;
    } else if (a >= C - 1e-12) {
      EXPECT_LE(margin, 1.0 + tol) << i;
    } else {
      EXPECT_NEAR(margin, 1.0, tol) << i;
    }
  }
}

TEST(Svm, RbfKernelEntries) {
  Eigen::MatrixXd A(2, 2), B(1, 2);
  A << 0, 0, 1, 2;
  B << 1, 0;
  const Eigen::MatrixXd K = lnm::rbf_kernel(A, B, 0.25);
  EXPECT_NEAR(K(0, 0), std::exp(-0.25 * 1.0), 1e-15);
  EXPECT_NEAR(K(1, 0), std::exp(-0.25 * 4.0), 1e-15);
}

TEST(Svm, ProbabilitiesAreCalibratedAndDeterministic) {
  std::mt19937_64 rng(25);
  const auto d = overlapping_blobs(rng, 90, 4, 1.2);
  const lnm::SvmParams params{1.0, 0.0};
  const auto a = lnm::fit_svm(d.X, d.y, params, 99);
  const auto b = lnm::fit_svm(d.X, d.y, params, 99);
  EXPECT_DOUBLE_EQ(a.gamma, 0.25);
  double pos = 0.0, neg = 0.0;
  int npos = 0;
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double p = a.probability(d.X.row(i));
    ASSERT_GE(p, 0.0);
    ASSERT_LE(p, 1.0);
    EXPECT_EQ(p, b.probability(d.X.row(i)));
    if (d.y[static_cast<std::size_t>(i)]) {
      pos += p;
      ++npos;
    } else {
      neg += p;
    }
  }
  EXPECT_GT(pos / npos, neg / (d.X.rows() - npos));
  EXPECT_LT(a.platt.a, 0.0);  // larger decision values mean higher probability
}

TEST(Svm, PlattProbabilityIsStable) {
  const lnm::PlattScaling s{-2.0, 0.1};
  EXPECT_NEAR(s.probability(0.0), 1.0 / (1.0 + std::exp(0.1)), 1e-15);
  EXPECT_GE(s.probability(-1e6), 0.0);
  EXPECT_LE(s.probability(1e6), 1.0);
}

// ------------------------------------------------------------------ forest

TEST(Forest, SingleTreeMatchesExactCart) {
  for (std::uint64_t seed = 30; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    const auto d = grid_data(rng, 50, 4);
    std::vector<int> rows(50);
    for (int i = 0; i < 50; ++i) rows[static_cast<std::size_t>(i)] = i;
    for (auto [max_depth, min_leaf] : {std::pair{0, 1}, std::pair{3, 1}, std::pair{0, 4}}) {
      const auto oracle = oracle_grow(d.X, d.y, rows, 0, max_depth, min_leaf);
      const lnm::RfParams params{1, max_depth, min_leaf, 4, false};
      const auto forest = lnm::fit_forest(d.X, d.y, params, seed);
      ASSERT_EQ(forest.trees.size(), 1u);
      EXPECT_EQ(forest.trees[0].nodes().size(), oracle_size(*oracle))
          << "seed " << seed << " depth " << max_depth << " leaf " << min_leaf;
      std::uniform_int_distribution<int> v(-1, 6);
      for (int q = 0; q < 200; ++q) {
        Eigen::RowVectorXd x(4);
        for (int j = 0; j < 4; ++j) x[j] = v(rng) + 0.5 * (q % 2);
        ASSERT_EQ(forest.probability(x), oracle_predict(*oracle, x));
      }
    }
  }
}

TEST(Forest, GrowHonoursDepthAndLeafLimits) {
  std::mt19937_64 rng(41);
  const auto d = grid_data(rng, 120, 5);
  std::vector<std::size_t> samples(120);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = i;
  const auto tree = DecisionTree::grow(d.X, d.y, samples, {3, 5, 0}, rng);
  EXPECT_LE(tree.depth(), 3);
  for (const auto& node : tree.nodes()) {
    EXPECT_GE(node.samples, 5);
    if (!node.is_leaf()) {
      EXPECT_EQ(tree.nodes()[static_cast<std::size_t>(node.left)].samples +
                    tree.nodes()[static_cast<std::size_t>(node.right)].samples,
                node.samples);
    }
  }
}

TEST(Forest, ProbabilitiesAndOutOfBagEstimates) {
  std::mt19937_64 rng(42);
  const auto d = overlapping_blobs(rng, 100, 5, 1.0);
  const lnm::RfParams params{25, 0, 2, 0, true};
  const auto a = lnm::fit_forest(d.X, d.y, params, 7);
  const auto b = lnm::fit_forest(d.X, d.y, params, 7);
  const auto c = lnm::fit_forest(d.X, d.y, params, 8);
  EXPECT_EQ(a.trees, b.trees);
  EXPECT_NE(a.trees, c.trees);
  ASSERT_EQ(a.oob_probability.size(), 100u);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double p = a.probability(d.X.row(i));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    const double oob = a.oob_probability[static_cast<std::size_t>(i)];
    if (!std::isnan(oob)) {
      EXPECT_GE(oob, 0.0);
      EXPECT_LE(oob, 1.0);
    }
  }
  EXPECT_EQ(lnm::resolved_feature_subset(params, 33), 6);
}

TEST(Forest, RejectsBadInput) {
  Eigen::MatrixXd X(2, 1);
  X << 0, std::nan("");
  const std::vector<int> y{0, 1};
  EXPECT_ANY_THROW(lnm::fit_forest(X, y, {}, 1));
  X(1, 0) = 1.0;
  EXPECT_ANY_THROW(lnm::fit_forest(X, y, {0, 0, 1, 0, true}, 1));
  EXPECT_ANY_THROW(lnm::fit_forest(X, y, {1, 0, 1, 2, true}, 1));
}

}  // namespace
