#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnm/cross_validation.hpp"
#include "lnm/ensemble.hpp"
#include "lnm/metrics.hpp"
#include "lnm/models.hpp"
#include "lnm/prompting.hpp"

namespace lnm {

enum class VariantKind {
  LlmAlone,          // baseline I template, mean of the repeats
  Ml,                // out-of-fold model probabilities
  LlmMlNoEstimate,   // baseline II template, mean of the repeats
  Full,              // full template, one row per strategy
};

std::string_view to_string(VariantKind v);  // "llm", "ml", "llm_ml_star", "full"
VariantKind parse_variant_kind(std::string_view text);

struct VariantMetrics {
  ModelKind model = ModelKind::LR;
  VariantKind variant = VariantKind::Ml;
  std::optional<EnsembleStrategy> strategy;  // set for LLM variants
  std::string label;                         // e.g. "GPT-4o+RF mean"
  std::vector<double> fold_auc;              // one per outer fold
  std::vector<double> fold_ap;
  double auc_mean = 0.0;
  double auc_sd = 0.0;  // n-1 denominator across folds
  double ap_mean = 0.0;
  double ap_sd = 0.0;
  double pooled_auc = 0.0;  // over all out-of-fold predictions
  double pooled_ap = 0.0;
  std::vector<CurvePoint> roc;  // pooled
  std::vector<CurvePoint> pr;

  /// File-name stem such as "rf_full_mean".
  std::string slug() const;
};

/// Per-fold and pooled metrics of `probabilities` (one per patient, cohort
/// order) under the plan's outer folds.
VariantMetrics score_variant(ModelKind model, VariantKind variant, std::optional<EnsembleStrategy> strategy,
                             std::string label, std::span<const double> probabilities, std::span<const int> labels,
                             const CvPlan& plan);

struct Comparison {
  ModelKind model = ModelKind::LR;
  std::string baseline;  // label of the ML row
  std::string variant;
  double auc_diff = 0.0;  // variant mean minus baseline mean
  double ap_diff = 0.0;
  TTestResult auc_test;
  TTestResult ap_test;
};

Comparison compare(const VariantMetrics& baseline, const VariantMetrics& variant, Sidedness sidedness);

struct EvalReport {
  std::vector<VariantMetrics> rows;
  std::vector<Comparison> comparisons;
  nlohmann::json manifest;  // config hash, seeds, cache and blinding summaries
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Writes results.csv, results.md, fold_metrics.csv, comparisons.csv,
/// curves/<slug>_{roc,pr}.csv and manifest.json under `dir`. Output bytes
/// depend only on `r`.
void emit_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace lnm
