#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lnm {

struct SvmParams {
  double box_constraint = 1.0;
  double rbf_gamma = 0.0;  // 0 = 1/p, resolved at fit time

  bool operator==(const SvmParams&) const = default;
};

struct SmoOptions {
  double tolerance = 1e-3;          // maximal-violating-pair gap
  long max_iterations = 100000;
};

struct SmoSolution {
  Eigen::VectorXd alpha;
  double bias = 0.0;  // f(x) = sum_j alpha_j y_j K(x_j, x) + bias
  bool converged = false;
  long iterations = 0;
};

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma);

/// Soft-margin C-SVM dual solved by SMO with second-order working-set
/// selection. `y` holds +1/-1. On reaching the iteration cap the current
/// iterate is returned with converged = false.
SmoSolution solve_smo(const Eigen::MatrixXd& K, std::span<const int> y, double C,
                      const SmoOptions& options = {});

/// sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
double dual_objective(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& K, std::span<const int> y);

struct PlattScaling {
  double a = 0.0;
  double b = 0.0;
  /// P(y = 1 | f) = 1 / (1 + exp(a f + b))
  double probability(double decision) const;
};

/// Sigmoid fit by Newton's method with backtracking on regularized targets.
/// `labels` are 0/1.
PlattScaling fit_platt(std::span<const double> decisions, std::span<const int> labels);

struct SvmModel {
  Eigen::MatrixXd support_vectors;
  Eigen::VectorXd dual_coef;  // alpha_i * y_i for each support vector
  double bias = 0.0;
  double gamma = 0.0;
  PlattScaling platt;
  bool converged = false;

  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return platt.probability(decision(x));
  }
};

double resolved_gamma(const SvmParams& params, std::size_t feature_count);

/// RBF SVM on 0/1 labels. Platt parameters are fit on decision values from an
/// internal stratified cross-validation over the training rows (5 folds, fewer
/// when a class is small); the returned machine is then trained on all rows.
SvmModel fit_svm(const Eigen::MatrixXd& X, std::span<const int> labels, const SvmParams& params,
                 std::uint64_t seed, const SmoOptions& options = {});

}  // namespace lnm
