#include "lnm/logistic.hpp"

#include <cmath>

#include "lnm/error.hpp"

namespace lnm {
namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_inputs(const Eigen::MatrixXd& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw DataError("logistic regression: feature rows and labels differ in length");
  }
  if (!X.allFinite()) throw DataError("logistic regression: non-finite feature value");
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError("logistic regression: labels must be 0 or 1");
  }
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LogisticModel::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return sigmoid(decision(x));
}

double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y, double l2,
                          const Eigen::VectorXd& weights, double intercept) {
  const Eigen::VectorXd z = (X * weights).array() + intercept;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // -log sigma(z) = softplus(-z); -log(1 - sigma(z)) = softplus(z)
    loss += y[static_cast<std::size_t>(i)] ? softplus(-z[i]) : softplus(z[i]);
  }
  return loss + 0.5 * l2 * weights.squaredNorm();
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, std::span<const int> y, double l2,
                                  const Eigen::VectorXd& weights, double intercept) {
  const Eigen::Index p = X.cols();
  const Eigen::VectorXd z = (X * weights).array() + intercept;
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    residual[i] = sigmoid(z[i]) - static_cast<double>(y[static_cast<std::size_t>(i)]);
  }
  Eigen::VectorXd g(p + 1);
  g.head(p) = X.transpose() * residual + l2 * weights;
  g[p] = residual.sum();
  return g;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y, const LrParams& params,
                           const NewtonOptions& options) {
  check_inputs(X, y);
  if (!(params.l2_strength > 0.0)) throw ConfigError("l2_strength must be positive");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const double l2 = params.l2_strength;

  LogisticModel m;
  m.weights = Eigen::VectorXd::Zero(p);
  m.intercept = 0.0;
  double loss = logistic_objective(X, y, l2, m.weights, m.intercept);
  m.loss_trace.push_back(loss);

  // Augmented design [X 1] so the intercept shares the Newton system.
  Eigen::MatrixXd Xa(n, p + 1);
  Xa.leftCols(p) = X;
  Xa.col(p).setOnes();

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd g = logistic_gradient(X, y, l2, m.weights, m.intercept);
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      m.converged = true;
      break;
    }
    const Eigen::VectorXd z = (X * m.weights).array() + m.intercept;
    Eigen::VectorXd curvature(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmoid(z[i]);
      curvature[i] = s * (1.0 - s);
    }
    Eigen::MatrixXd H = Xa.transpose() * curvature.asDiagonal() * Xa;
    H.diagonal().head(p).array() += l2;
    H(p, p) += 1e-12;  // keeps the system solvable when every curvature underflows
    Eigen::VectorXd step = H.ldlt().solve(-g);
    if (!step.allFinite() || step.dot(g) >= 0.0) step = -g;  // fall back to steepest descent

    // Backtracking (Armijo) line search keeps the objective non-increasing.
    double t = 1.0;
    const double slope = step.dot(g);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd w_new = m.weights + t * step.head(p);
      const double b_new = m.intercept + t * step[p];
      const double candidate = logistic_objective(X, y, l2, w_new, b_new);
      if (candidate <= loss + 1e-4 * t * slope) {
        m.weights = w_new;
        m.intercept = b_new;
        loss = candidate;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    m.iterations = iter + 1;
    if (!accepted) break;  // no descent possible at machine precision
    m.loss_trace.push_back(loss);
  }
  if (!m.converged) {
    const Eigen::VectorXd g = logistic_gradient(X, y, l2, m.weights, m.intercept);
    m.converged = g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
  }
  return m;
}

}  // namespace lnm
