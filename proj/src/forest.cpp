#include "lnm/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lnm/error.hpp"
#include "lnm/seeding.hpp"

namespace lnm {
namespace {

double node_score(double pos, double neg) {
  const double n = pos + neg;
  return n > 0.0 ? (pos * pos + neg * neg) / n : 0.0;
}

// Scores are sums of two rationals; equal rationals can round differently, so
// an improvement must clear a margin far below the smallest real difference
// (about 1/n^2) before it counts.
constexpr double kScoreMargin = 1e-10;

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

struct PendingNode {
  int node;
  std::size_t begin;
  std::size_t end;
  int depth;
};

}  // namespace

int resolved_feature_subset(const RfParams& params, std::size_t feature_count) {
  if (params.feature_subset_size > 0) return params.feature_subset_size;
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(feature_count)))));
}

DecisionTree DecisionTree::grow(const Eigen::MatrixXd& X, std::span<const int> y,
                                std::vector<std::size_t> samples, const TreeOptions& options,
                                std::mt19937_64& rng) {
  if (samples.empty()) throw DataError("cannot grow a tree on zero samples");
  const int p = static_cast<int>(X.cols());
  const int per_split = options.features_per_split <= 0 ? p : std::min(options.features_per_split, p);
  const int min_leaf = std::max(1, options.min_leaf);

  std::vector<TreeNode> nodes;
  std::vector<PendingNode> stack;
  nodes.emplace_back();
  stack.push_back({0, 0, samples.size(), 0});

  std::vector<int> feature_pool(static_cast<std::size_t>(p));
  std::iota(feature_pool.begin(), feature_pool.end(), 0);
  std::vector<std::pair<double, int>> column;
  column.reserve(samples.size());

  while (!stack.empty()) {
    const PendingNode task = stack.back();
    stack.pop_back();
    int positives = 0;
    for (std::size_t k = task.begin; k < task.end; ++k) positives += y[samples[k]];
    const int count = static_cast<int>(task.end - task.begin);
    nodes[static_cast<std::size_t>(task.node)].positives = positives;
    nodes[static_cast<std::size_t>(task.node)].samples = count;

    const bool pure = positives == 0 || positives == count;
    const bool depth_limited = options.max_depth > 0 && task.depth >= options.max_depth;
    if (pure || depth_limited || count < 2 * min_leaf) continue;

    std::vector<int> candidates;
    if (per_split >= p) {
      candidates = feature_pool;
    } else {
      for (int k = 0; k < per_split; ++k) {
        std::uniform_int_distribution<int> pick(k, p - 1);
        std::swap(feature_pool[static_cast<std::size_t>(k)],
                  feature_pool[static_cast<std::size_t>(pick(rng))]);
      }
      candidates.assign(feature_pool.begin(), feature_pool.begin() + per_split);
      std::sort(candidates.begin(), candidates.end());
    }

    const double parent = node_score(positives, count - positives);
    SplitChoice best;
    for (int f : candidates) {
      column.clear();
      for (std::size_t k = task.begin; k < task.end; ++k) {
        column.emplace_back(X(static_cast<Eigen::Index>(samples[k]), f), y[samples[k]]);
      }
      std::sort(column.begin(), column.end());
      int left_pos = 0;
      for (int i = 0; i + 1 < count; ++i) {
        left_pos += column[static_cast<std::size_t>(i)].second;
        const double lo = column[static_cast<std::size_t>(i)].first;
        const double hi = column[static_cast<std::size_t>(i) + 1].first;
        if (!(lo < hi)) continue;
        const int left_n = i + 1;
        const int right_n = count - left_n;
        if (left_n < min_leaf || right_n < min_leaf) continue;
        const int right_pos = positives - left_pos;
        const double score = node_score(left_pos, left_n - left_pos) +
                             node_score(right_pos, right_n - right_pos);
        if (score > best.score + kScoreMargin) {
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {f, threshold, score};
        }
      }
    }
    if (best.feature < 0 || !(best.score > parent + kScoreMargin)) continue;

    auto mid = std::partition(
        samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
        samples.begin() + static_cast<std::ptrdiff_t>(task.end), [&](std::size_t row) {
          return X(static_cast<Eigen::Index>(row), best.feature) <= best.threshold;
        });
    const std::size_t split = static_cast<std::size_t>(mid - samples.begin());

    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const int right = static_cast<int>(nodes.size());
    nodes.emplace_back();
    TreeNode& node = nodes[static_cast<std::size_t>(task.node)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    // Right pushed first so the left subtree is expanded first.
    stack.push_back({right, split, task.end, task.depth + 1});
    stack.push_back({left, task.begin, split, task.depth + 1});
  }
  return DecisionTree(std::move(nodes));
}

double DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (nodes_.empty()) throw DataError("predict on an empty tree");
  std::size_t k = 0;
  while (!nodes_[k].is_leaf()) {
    k = static_cast<std::size_t>(x[nodes_[k].feature] <= nodes_[k].threshold ? nodes_[k].left
                                                                             : nodes_[k].right);
  }
  return nodes_[k].positive_fraction();
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> depth_of(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (nodes_[k].is_leaf()) continue;
    for (int child : {nodes_[k].left, nodes_[k].right}) {
      depth_of[static_cast<std::size_t>(child)] = depth_of[k] + 1;
      deepest = std::max(deepest, depth_of[k] + 1);
    }
  }
  return deepest;
}

double RandomForest::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (trees.empty()) throw DataError("predict on an empty forest");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

RandomForest fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, const RfParams& params,
                        std::uint64_t seed) {
  if (static_cast<std::size_t>(X.rows()) != y.size() || X.rows() == 0) {
    throw DataError("random forest: feature rows and labels differ in length or are empty");
  }
  if (!X.allFinite()) throw DataError("random forest: non-finite feature value");
  if (params.tree_count < 1 || params.min_leaf < 1 || params.max_depth < 0) {
    throw ConfigError("random forest: tree_count and min_leaf must be >= 1, max_depth >= 0");
  }
  const int subset = resolved_feature_subset(params, static_cast<std::size_t>(X.cols()));
  if (subset > X.cols()) throw ConfigError("random forest: feature_subset_size exceeds feature count");

  const std::size_t n = static_cast<std::size_t>(X.rows());
  TreeOptions options{params.max_depth, params.min_leaf, subset};
  RandomForest forest;
  forest.trees.reserve(static_cast<std::size_t>(params.tree_count));
  std::vector<double> oob_sum(n, 0.0);
  std::vector<int> oob_count(n, 0);
  std::vector<char> in_bag(n);

  for (int t = 0; t < params.tree_count; ++t) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::vector<std::size_t> samples(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& s : samples) s = draw(rng);
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    std::fill(in_bag.begin(), in_bag.end(), 0);
    for (std::size_t s : samples) in_bag[s] = 1;
    forest.trees.push_back(DecisionTree::grow(X, y, std::move(samples), options, rng));
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[i]) continue;
      oob_sum[i] += forest.trees.back().predict(X.row(static_cast<Eigen::Index>(i)));
      oob_count[i] += 1;
    }
  }
  forest.oob_probability.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    forest.oob_probability[i] = oob_count[i] > 0 ? oob_sum[i] / oob_count[i]
                                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return forest;
}

}  // namespace lnm
