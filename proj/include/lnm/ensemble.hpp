#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lnm/judgment.hpp"
#include "lnm/models.hpp"

namespace lnm {

enum class EnsembleStrategy { Max, Min, Median, Mean };

inline constexpr std::array<EnsembleStrategy, 4> kAllStrategies{EnsembleStrategy::Max, EnsembleStrategy::Min,
                                                                EnsembleStrategy::Median, EnsembleStrategy::Mean};

std::string_view to_string(EnsembleStrategy s);  // "max", "min", "median", "mean"
EnsembleStrategy parse_strategy(std::string_view text);

/// Throws DataError on an empty list or a value outside [0,1]. The result
/// always lies within [min, max] of the inputs; equal inputs return that value
/// exactly.
double aggregate(std::span<const double> values, EnsembleStrategy strategy);

struct ResolvedInputs {
  std::vector<double> values;
  std::size_t substitutions = 0;
};

/// Answers of clean/repaired judgments; fallback judgments contribute
/// `ml_probability`.
ResolvedInputs resolve_inputs(std::span<const LlmJudgment> judgments, double ml_probability);

struct EnsembledPrediction {
  std::string patient_id;
  PromptTemplateKind template_kind = PromptTemplateKind::Full;
  ModelKind model_kind = ModelKind::LR;
  EnsembleStrategy strategy = EnsembleStrategy::Mean;
  std::vector<double> inputs;
  double final_probability = 0.0;
  std::size_t substitutions = 0;
  bool operator==(const EnsembledPrediction&) const = default;
};

EnsembledPrediction ensemble(std::span<const LlmJudgment> judgments, double ml_probability, EnsembleStrategy strategy,
                             ModelKind model_kind);

/// Columns: patient_id, template_kind, model, strategy, input_1..input_k,
/// final, substitutions. All rows must share k.
void write_predictions_csv(std::span<const EnsembledPrediction> rows, const std::filesystem::path& path);
std::vector<EnsembledPrediction> read_predictions_csv(const std::filesystem::path& path);

}  // namespace lnm
