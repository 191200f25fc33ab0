#include "lnm/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lnm/error.hpp"
#include "lnm/seeding.hpp"

namespace lnm {
namespace {

constexpr double kTau = 1e-12;

struct Trained {
  SmoSolution solution;
  std::vector<Eigen::Index> support;
};

Trained train_machine(const Eigen::MatrixXd& X, std::span<const int> y_pm, double C, double gamma,
                      const SmoOptions& options) {
  const Eigen::MatrixXd K = rbf_kernel(X, X, gamma);
  Trained t{solve_smo(K, y_pm, C, options), {}};
  for (Eigen::Index i = 0; i < t.solution.alpha.size(); ++i) {
    if (t.solution.alpha[i] > 0.0) t.support.push_back(i);
  }
  return t;
}

SvmModel to_model(const Eigen::MatrixXd& X, std::span<const int> y_pm, const Trained& t, double gamma) {
  SvmModel m;
  const auto count = static_cast<Eigen::Index>(t.support.size());
  m.support_vectors.resize(count, X.cols());
  m.dual_coef.resize(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const Eigen::Index i = t.support[static_cast<std::size_t>(k)];
    m.support_vectors.row(k) = X.row(i);
    m.dual_coef[k] = t.solution.alpha[i] * y_pm[static_cast<std::size_t>(i)];
  }
  m.bias = t.solution.bias;
  m.gamma = gamma;
  m.converged = t.solution.converged;
  return m;
}

}  // namespace

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double gamma) {
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
  Eigen::MatrixXd D = -2.0 * (A * B.transpose());
  D.colwise() += a2;
  D.rowwise() += b2.transpose();
  return (-gamma * D.array().max(0.0)).exp().matrix();
}

SmoSolution solve_smo(const Eigen::MatrixXd& K, std::span<const int> y, double C,
                      const SmoOptions& options) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n || static_cast<std::size_t>(n) != y.size() || n < 2) {
    throw DataError("SMO: kernel matrix and labels disagree in size");
  }
  if (!(C > 0.0)) throw ConfigError("SMO: box constraint must be positive");
  auto yy = [&](Eigen::Index i) { return static_cast<double>(y[static_cast<std::size_t>(i)]); };

  SmoSolution s;
  s.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& alpha = s.alpha;
  // G_i = (Q alpha)_i - 1 with Q_ij = y_i y_j K_ij.
  Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
  auto upper = [&](Eigen::Index i) { return alpha[i] >= C; };
  auto lower = [&](Eigen::Index i) { return alpha[i] <= 0.0; };

  for (s.iterations = 0; s.iterations < options.max_iterations; ++s.iterations) {
    // i: maximal violator in the "up" set.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (yy(t) > 0 ? !upper(t) : !lower(t)) {
        const double v = -yy(t) * G[t];
        if (v >= gmax) {
          gmax = v;
          i = t;
        }
      }
    }
    // j: second-order choice in the "low" set.
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (yy(t) > 0 ? lower(t) : upper(t)) continue;
      const double v = yy(t) * G[t];
      gmax2 = std::max(gmax2, v);
      if (i < 0) continue;
      const double grad_diff = gmax + v;
      if (grad_diff > 0.0) {
        double quad = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (quad <= 0.0) quad = kTau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < options.tolerance) {
      s.converged = true;
      break;
    }

    const double Qii = K(i, i), Qjj = K(j, j);
    const double Qij = yy(i) * yy(j) * K(i, j);
    const double old_i = alpha[i], old_j = alpha[j];
    if (yy(i) != yy(j)) {
      double quad = Qii + Qjj + 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Qii + Qjj - 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (Eigen::Index t = 0; t < n; ++t) {
      G[t] += yy(t) * (yy(i) * K(t, i) * di + yy(j) * K(t, j) * dj);
    }
  }

  // Bias: average of -y_i G_i over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yy(t) * G[t];
    if (upper(t)) {
      if (yy(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (yy(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count > 0 ? free_sum / free_count : 0.5 * (ub + lb);
  s.bias = -rho;
  return s;
}

double dual_objective(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& K, std::span<const int> y) {
  Eigen::VectorXd ay(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) ay[i] = alpha[i] * y[static_cast<std::size_t>(i)];
  return alpha.sum() - 0.5 * ay.dot(K * ay);
}

double PlattScaling::probability(double decision) const {
  const double z = a * decision + b;
  return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

PlattScaling fit_platt(std::span<const double> decisions, std::span<const int> labels) {
  const std::size_t n = decisions.size();
  if (n != labels.size() || n == 0) throw DataError("Platt scaling: mismatched or empty input");
  double prior1 = 0.0;
  for (int l : labels) prior1 += l;
  const double prior0 = static_cast<double>(n) - prior1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] ? hi : lo;

  auto objective = [&](double A, double B) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * A + B;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double A = 0.0;
  double B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(A, B);
  constexpr double kSigma = 1e-12;
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * A + B;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += decisions[i] * decisions[i] * d2;
      h22 += d2;
      h21 += decisions[i] * d2;
      const double d1 = t[i] - p;
      g1 += decisions[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double newA = A + step * dA;
      const double newB = B + step * dB;
      const double newf = objective(newA, newB);
      if (newf < fval + 1e-4 * step * gd) {
        A = newA;
        B = newB;
        fval = newf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return {A, B};
}

double SvmModel::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double f = bias;
  for (Eigen::Index k = 0; k < support_vectors.rows(); ++k) {
    f += dual_coef[k] * std::exp(-gamma * (support_vectors.row(k) - x).squaredNorm());
  }
  return f;
}

double resolved_gamma(const SvmParams& params, std::size_t feature_count) {
  if (params.rbf_gamma > 0.0) return params.rbf_gamma;
  return 1.0 / static_cast<double>(std::max<std::size_t>(feature_count, 1));
}

SvmModel fit_svm(const Eigen::MatrixXd& X, std::span<const int> labels, const SvmParams& params,
                 std::uint64_t seed, const SmoOptions& options) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(X.rows()) != n || n < 2) {
    throw DataError("SVM: feature rows and labels differ in length or are too few");
  }
  if (!X.allFinite()) throw DataError("SVM: non-finite feature value");
  if (!(params.box_constraint > 0.0) || params.rbf_gamma < 0.0) {
    throw ConfigError("SVM: box_constraint must be positive and rbf_gamma non-negative");
  }
  const double gamma = resolved_gamma(params, static_cast<std::size_t>(X.cols()));
  std::vector<int> y_pm(n);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    y_pm[i] = labels[i] ? 1 : -1;
    (labels[i] ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw DataError("SVM: training data must contain both classes");

  // Calibration decision values from internal stratified folds.
  const std::size_t folds = std::min<std::size_t>(5, std::min(pos.size(), neg.size()));
  std::vector<double> calib(n, 0.0);
  if (folds >= 2) {
    std::mt19937_64 rng(derive_seed(seed, {0x504C4154ULL}));
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> fold_of(n);
    std::size_t k = 0;
    for (std::size_t i : pos) fold_of[i] = k++ % folds;
    for (std::size_t i : neg) fold_of[i] = k++ % folds;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train_rows, held_rows;
      for (std::size_t i = 0; i < n; ++i) {
        (fold_of[i] == f ? held_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
      }
      const Eigen::MatrixXd Xt = X(train_rows, Eigen::all);
      std::vector<int> yt;
      for (auto i : train_rows) yt.push_back(y_pm[static_cast<std::size_t>(i)]);
      const bool both = std::count(yt.begin(), yt.end(), 1) > 0 && std::count(yt.begin(), yt.end(), -1) > 0;
      if (!both) continue;
      const SvmModel sub = to_model(Xt, yt, train_machine(Xt, yt, params.box_constraint, gamma, options), gamma);
      for (auto i : held_rows) calib[static_cast<std::size_t>(i)] = sub.decision(X.row(i));
    }
  }
  const Trained full = train_machine(X, y_pm, params.box_constraint, gamma, options);
  SvmModel model = to_model(X, y_pm, full, gamma);
  if (folds < 2) {
    for (std::size_t i = 0; i < n; ++i) calib[i] = model.decision(X.row(static_cast<Eigen::Index>(i)));
  }
  model.platt = fit_platt(calib, labels);
  return model;
}

}  // namespace lnm
