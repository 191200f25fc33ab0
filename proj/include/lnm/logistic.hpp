#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lnm {

struct LrParams {
  double l2_strength = 1.0;
  bool operator==(const LrParams&) const = default;
};

struct NewtonOptions {
  double gradient_tolerance = 1e-6;  // max-norm
  int max_iterations = 100;
};

/// L2-penalized logistic regression; the intercept is unpenalized.
struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loss_trace;  // objective after each accepted step, starting at w = 0

  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return x.dot(weights) + intercept;
  }
  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Objective: -sum_i log p(y_i | x_i) + (l2 / 2) * |w|^2.
double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y, double l2,
                          const Eigen::VectorXd& weights, double intercept);

/// Gradient of logistic_objective; the last entry is the intercept component.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, std::span<const int> y, double l2,
                                  const Eigen::VectorXd& weights, double intercept);

/// Newton's method with backtracking line search. Never throws on
/// non-convergence; the returned model carries converged = false instead.
LogisticModel fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y, const LrParams& params,
                           const NewtonOptions& options = {});

double sigmoid(double z);

}  // namespace lnm
