#include "lnm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lnm/error.hpp"

namespace lnm {
namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts check(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  if (scores.size() < 2) throw DataError("at least two scored labels are required");
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    if (std::isnan(scores[i])) throw DataError("score is NaN");
    (labels[i] ? c.positives : c.negatives) += 1;
  }
  return c;
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Cumulative (tp, fp) after each distinct-score threshold, descending.
template <class Visit>
void for_each_threshold(std::span<const double> scores, std::span<const int> labels, Visit visit) {
  const auto order = descending(scores);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] ? tp : fp) += 1;
      ++k;
    }
    visit(tp, fp);
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check(scores, labels);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw DataError("AUC requires at least one positive and one negative");
  }
  // Rank-sum with mid-ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    std::size_t group_pos = 0;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) {
      group_pos += static_cast<std::size_t>(labels[order[end]]);
      ++end;
    }
    const double mid_rank = 0.5 * static_cast<double>(k + 1 + end);  // average of ranks k+1..end
    positive_rank_sum += mid_rank * static_cast<double>(group_pos);
    k = end;
  }
  const double np = static_cast<double>(counts.positives);
  const double nn = static_cast<double>(counts.negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check(scores, labels);
  if (counts.positives == 0) throw DataError("average precision requires at least one positive");
  const double np = static_cast<double>(counts.positives);
  double ap = 0.0;
  double previous_recall = 0.0;
  for_each_threshold(scores, labels, [&](std::size_t tp, std::size_t fp) {
    const double recall = static_cast<double>(tp) / np;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - previous_recall) * precision;
    previous_recall = recall;
  });
  return ap;
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check(scores, labels);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw DataError("ROC curve requires at least one positive and one negative");
  }
  const double np = static_cast<double>(counts.positives);
  const double nn = static_cast<double>(counts.negatives);
  std::vector<CurvePoint> curve{{0.0, 0.0}};
  for_each_threshold(scores, labels, [&](std::size_t tp, std::size_t fp) {
    curve.push_back({static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
  });
  return curve;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check(scores, labels);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw DataError("PR curve requires at least one positive and one negative");
  }
  const double np = static_cast<double>(counts.positives);
  std::vector<CurvePoint> curve{{0.0, 1.0}};
  for_each_threshold(scores, labels, [&](std::size_t tp, std::size_t fp) {
    curve.push_back({static_cast<double>(tp) / np, static_cast<double>(tp) / static_cast<double>(tp + fp)});
  });
  return curve;
}

double trapezoid_area(std::span<const CurvePoint> curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    area += (curve[k].x - curve[k - 1].x) * (curve[k].y + curve[k - 1].y) / 2.0;
  }
  return area;
}

double step_area(std::span<const CurvePoint> curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) area += (curve[k].x - curve[k - 1].x) * curve[k].y;
  return area;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of an empty sequence");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, Sidedness sidedness) {
  if (a.size() != b.size()) throw DataError("paired t-test: samples differ in length");
  if (a.size() < 2) throw DataError("paired t-test: at least two pairs are required");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  TTestResult r;
  r.df = static_cast<int>(n - 1);
  const double m = mean(d);
  const double sd = sample_sd(d);
  const bool all_zero = std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
  if (all_zero) {
    r.t = 0.0;
    r.p_value = 1.0;
    return r;
  }
  if (sd == 0.0) {
    r.t = m > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.t = m / (sd / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_two_sided_p(r.t, r.df);
  if (sidedness == Sidedness::OneSided) r.p_value /= 2.0;
  return r;
}

}  // namespace lnm
