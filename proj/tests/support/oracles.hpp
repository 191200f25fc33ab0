#pragma once

// Deliberately naive reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <vector>

namespace lnm::testing {

/// AUC by counting every positive/negative pair.
inline double brute_auc(std::span<const double> s, std::span<const int> y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// AP by re-scanning the whole list at every distinct threshold.
inline double brute_ap(std::span<const double> s, std::span<const int> y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double total_pos = 0.0;
  for (int v : y) total_pos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        predicted += 1.0;
        tp += y[i];
      }
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

struct ScoredInstance {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Random instance with 2..max_n points, both classes present, and ties
/// injected by drawing scores from a small grid for about half the cases.
inline ScoredInstance random_instance(std::mt19937_64& rng, std::size_t max_n = 200) {
  std::uniform_int_distribution<std::size_t> size_dist(2, max_n);
  const std::size_t n = size_dist(rng);
  ScoredInstance inst;
  inst.scores.resize(n);
  inst.labels.resize(n);
  const bool coarse = std::bernoulli_distribution(0.5)(rng);
  std::uniform_int_distribution<int> grid(0, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double prevalence = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
  for (std::size_t i = 0; i < n; ++i) {
    inst.scores[i] = coarse ? grid(rng) / 10.0 : unit(rng);
    inst.labels[i] = std::bernoulli_distribution(prevalence)(rng) ? 1 : 0;
  }
  inst.labels[0] = 1;
  inst.labels[1] = 0;
  std::shuffle(inst.labels.begin(), inst.labels.end(), rng);
  return inst;
}

}  // namespace lnm::testing
