#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lnm {

struct RfParams {
  int tree_count = 100;
  int max_depth = 0;            // 0 = unlimited
  int min_leaf = 1;
  int feature_subset_size = 0;  // 0 = ceil(sqrt(p)), resolved at fit time
  bool bootstrap = true;

  bool operator==(const RfParams&) const = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int positives = 0;
  int samples = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  double positive_fraction() const noexcept {
    return samples > 0 ? static_cast<double>(positives) / samples : 0.0;
  }
  bool operator==(const TreeNode&) const = default;
};

struct TreeOptions {
  int max_depth = 0;  // 0 = unlimited; the root is depth 0
  int min_leaf = 1;
  int features_per_split = 0;  // >= p means every feature, in index order
};

/// CART classification tree with the Gini criterion. A split is taken when it
/// strictly improves sum over children of (pos^2 + neg^2) / size; ties between
/// candidates go to the lower feature index, then the lower threshold. Rows
/// with x[feature] <= threshold go left.
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  /// `samples` are row indices into X and may repeat (bootstrap draws).
  static DecisionTree grow(const Eigen::MatrixXd& X, std::span<const int> y,
                           std::vector<std::size_t> samples, const TreeOptions& options,
                           std::mt19937_64& rng);

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  int depth() const;

  bool operator==(const DecisionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  // Out-of-bag probability per training row (NaN when a row was never out of bag).
  // Only populated by fit_forest; not part of the persisted model.
  std::vector<double> oob_probability;

  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Tree t is grown from its own generator seeded with derive_seed(seed, {t}).
RandomForest fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, const RfParams& params,
                        std::uint64_t seed);

int resolved_feature_subset(const RfParams& params, std::size_t feature_count);

}  // namespace lnm
