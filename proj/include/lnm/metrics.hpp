#pragma once

#include <span>
#include <vector>

namespace lnm {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

/// Mann-Whitney AUC: fraction of positive/negative pairs ranked correctly,
/// ties counted one half. Throws DataError without both classes.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Step-interpolated average precision, sum_k (R_k - R_{k-1}) P_k over
/// descending distinct-score thresholds. Throws DataError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// (FPR, TPR) from (0,0) to (1,1), one point per distinct score.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// (recall, precision), starting at (0, 1), one point per distinct score.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

double trapezoid_area(std::span<const CurvePoint> curve);
/// sum_k (x_k - x_{k-1}) y_k
double step_area(std::span<const CurvePoint> curve);

double mean(std::span<const double> xs);
/// Sample SD (n-1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> xs);

enum class Sidedness { TwoSided, OneSided };

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  int df = 0;
};

/// Paired t-test on d_i = a_i - b_i with n-1 degrees of freedom.
/// All-zero differences give (t=0, p=1); zero SD with non-zero mean gives
/// (t=+/-inf, p=0). One-sided p halves the two-sided value.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          Sidedness sidedness = Sidedness::TwoSided);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// Student-t CDF with `df` degrees of freedom.
double student_t_cdf(double t, double df);
/// P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

}  // namespace lnm
