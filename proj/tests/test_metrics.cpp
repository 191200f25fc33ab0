#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "lnm/error.hpp"
#include "lnm/metrics.hpp"
#include "support/oracles.hpp"

namespace {

using lnm::testing::brute_ap;
using lnm::testing::brute_auc;

TEST(RocAuc, PerfectAndReversedRankings) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(lnm::roc_auc(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(lnm::roc_auc(s, std::vector<int>{1, 1, 0, 0}), 0.0);
}

TEST(RocAuc, AllTiedScoresGiveOneHalf) {
  const std::vector<double> s(6, 0.3);
  EXPECT_DOUBLE_EQ(lnm::roc_auc(s, std::vector<int>{1, 0, 1, 0, 0, 0}), 0.5);
}

TEST(RocAuc, RejectsSingleClassAndNaN) {
  EXPECT_THROW(lnm::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), lnm::DataError);
  EXPECT_THROW(lnm::roc_auc(std::vector<double>{0.1, NAN}, std::vector<int>{1, 0}), lnm::DataError);
  EXPECT_THROW(lnm::roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), lnm::DataError);
}

TEST(AveragePrecision, HandComputedExample) {
  // Descending: 0.9(+) 0.8(-) 0.7(+) 0.1(-): AP = 0.5*1 + 0.5*(2/3).
  const std::vector<double> s{0.9, 0.8, 0.7, 0.1};
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_NEAR(lnm::average_precision(s, y), 0.5 + 1.0 / 3.0, 1e-15);
}

TEST(AveragePrecision, TiedGroupCountsOnce) {
  const std::vector<double> s{0.5, 0.5, 0.5, 0.5};
  const std::vector<int> y{1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(lnm::average_precision(s, y), 0.25);
}

TEST(AveragePrecision, UninformativeScoresApproachPrevalence) {
  std::mt19937_64 rng(11);
  std::vector<double> s(20000);
  std::vector<int> y(20000);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < 0.136 ? 1 : 0;
  }
  EXPECT_NEAR(lnm::average_precision(s, y), 0.136, 0.02);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 300; ++k) {
    const auto inst = lnm::testing::random_instance(rng, 120);
    ASSERT_NEAR(lnm::roc_auc(inst.scores, inst.labels), brute_auc(inst.scores, inst.labels), 1e-12);
    ASSERT_NEAR(lnm::average_precision(inst.scores, inst.labels), brute_ap(inst.scores, inst.labels), 1e-12);
  }
}

TEST(Curves, EndpointsAndAreas) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const auto inst = lnm::testing::random_instance(rng, 80);
    const auto roc = lnm::roc_curve(inst.scores, inst.labels);
    ASSERT_EQ(roc.front(), (lnm::CurvePoint{0.0, 0.0}));
    ASSERT_EQ(roc.back(), (lnm::CurvePoint{1.0, 1.0}));
    ASSERT_NEAR(lnm::trapezoid_area(roc), lnm::roc_auc(inst.scores, inst.labels), 1e-12);
    const auto pr = lnm::pr_curve(inst.scores, inst.labels);
    ASSERT_EQ(pr.front(), (lnm::CurvePoint{0.0, 1.0}));
    ASSERT_DOUBLE_EQ(pr.back().x, 1.0);
    ASSERT_NEAR(lnm::step_area(pr), lnm::average_precision(inst.scores, inst.labels), 1e-12);
    for (std::size_t i = 1; i < roc.size(); ++i) {
      ASSERT_GE(roc[i].x, roc[i - 1].x);
      ASSERT_GE(roc[i].y, roc[i - 1].y);
    }
  }
}

TEST(SampleSd, UsesNMinusOne) {
  const std::vector<double> xs{1, 2, 3, 4};
  EXPECT_NEAR(lnm::sample_sd(xs), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(lnm::sample_sd(std::vector<double>{3.0}), 0.0);
}

TEST(PairedTTest, HandComputedExample) {
  const std::vector<double> a{0.02, -0.01, 0.03, 0.0, 0.01};
  const std::vector<double> b(5, 0.0);
  const auto r = lnm::paired_t_test(a, b);
  EXPECT_EQ(r.df, 4);
  EXPECT_NEAR(r.t, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(r.p_value, 0.2302, 1e-3);
}

TEST(PairedTTest, CriticalValue) {
  // Two-sided 5% critical value for 4 degrees of freedom.
  EXPECT_NEAR(lnm::student_t_two_sided_p(2.776, 4), 0.05, 1e-3);
}

TEST(PairedTTest, DegenerateDifferences) {
  // Dyadic values keep every difference exactly equal.
  const std::vector<double> a{0.5, 0.25, 0.75};
  const auto same = lnm::paired_t_test(a, a);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
  const std::vector<double> shifted{0.625, 0.375, 0.875};
  const auto constant = lnm::paired_t_test(shifted, a);
  EXPECT_TRUE(std::isinf(constant.t) && constant.t > 0);
  EXPECT_EQ(constant.p_value, 0.0);
}

TEST(PairedTTest, OneSidedHalvesTwoSided) {
  const std::vector<double> a{0.71, 0.75, 0.69, 0.80, 0.77};
  const std::vector<double> b{0.70, 0.72, 0.70, 0.74, 0.73};
  const auto two = lnm::paired_t_test(a, b);
  const auto one = lnm::paired_t_test(a, b, lnm::Sidedness::OneSided);
  EXPECT_DOUBLE_EQ(one.p_value, two.p_value / 2.0);
}

TEST(StudentT, MatchesBoostAcrossRange) {
  for (double df : {1.0, 2.0, 4.0, 9.0, 30.0, 200.0}) {
    const boost::math::students_t dist(df);
    for (double t : {-8.0, -3.0, -1.0, -0.2, 0.0, 0.5, 1.4142, 2.776, 6.0}) {
      const double expected = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      ASSERT_NEAR(lnm::student_t_two_sided_p(t, df), expected, 1e-12 + 1e-10 * expected) << "df=" << df << " t=" << t;
      ASSERT_NEAR(lnm::student_t_cdf(t, df), boost::math::cdf(dist, t), 1e-12);
    }
  }
}

TEST(IncompleteBeta, MatchesBoost) {
  for (double a : {0.5, 1.0, 2.5, 10.0}) {
    for (double b : {0.5, 3.0, 7.0}) {
      for (double x : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0}) {
        ASSERT_NEAR(lnm::incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-13);
      }
    }
  }
  EXPECT_THROW(lnm::incomplete_beta(-1.0, 1.0, 0.5), lnm::DataError);
  EXPECT_THROW(lnm::incomplete_beta(1.0, 1.0, 1.5), lnm::DataError);
}

}  // namespace
