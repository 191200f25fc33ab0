#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnm/cohort.hpp"
#include "lnm/cross_validation.hpp"
#include "lnm/models.hpp"

namespace lnm {

enum class PromptTemplateKind {
  Full,                           // all five elements, two-stage instruction
  BaselineNoMl,                   // no model result, no re-estimation step
  BaselineNoIndependentEstimate,  // full minus the initial estimate step
};

inline constexpr std::array<PromptTemplateKind, 3> kAllTemplateKinds{
    PromptTemplateKind::Full, PromptTemplateKind::BaselineNoMl,
    PromptTemplateKind::BaselineNoIndependentEstimate};

std::string_view to_string(PromptTemplateKind kind);  // "full", "baseline1", "baseline2"
PromptTemplateKind parse_template_kind(std::string_view text);
bool requires_ml(PromptTemplateKind kind);

/// Upper reference limits for the six serum biomarkers, in the cohort's units.
struct BiomarkerReferenceRanges {
  double cea = 5.0;
  double ca199 = 37.0;
  double ca125 = 35.0;
  double nse = 16.3;
  double cyfra211 = 3.3;
  double sccag = 1.5;

  /// Limit for a biomarker feature; throws std::invalid_argument for others.
  double upper(ContinuousFeature f) const;
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigError.
  static BiomarkerReferenceRanges from_json(const nlohmann::json& j);
  bool operator==(const BiomarkerReferenceRanges&) const = default;
};

inline constexpr std::array<ContinuousFeature, 6> kBiomarkers{
    ContinuousFeature::Cea,  ContinuousFeature::Ca199,    ContinuousFeature::Ca125,
    ContinuousFeature::Nse,  ContinuousFeature::Cyfra211, ContinuousFeature::Sccag};

/// What the model-result element quotes. Values are kept unrounded here; the
/// text shows them to three decimals.
struct MlContext {
  ModelKind model_kind = ModelKind::LR;
  double probability = 0.0;
  double auc = 0.0;
  double ap = 0.0;
  double n2_rate = 0.0;
  bool operator==(const MlContext&) const = default;
};

/// Context for one patient of an outer fold: its out-of-fold probability, the
/// winner's inner-CV AUC/AP and the fold's training prevalence.
MlContext ml_context_for(const MlFoldResult& fold, std::size_t cohort_index);

struct RenderedPrompt {
  std::string text;
  PromptTemplateKind template_kind = PromptTemplateKind::Full;
  std::string patient_id;
  std::optional<MlContext> ml_context;
  std::string content_hash;  // SHA-256 of text, lowercase hex
  bool operator==(const RenderedPrompt&) const = default;
};

struct PromptOptions {
  BiomarkerReferenceRanges ranges;
  /// Reject free text whose letters are more than 20% non-ASCII.
  bool strict_language = true;
};

std::string render_patient_section(const PatientRecord& r, const BiomarkerReferenceRanges& ranges,
                                   bool strict_language = true);

/// Throws ConfigError when `ml` presence does not match the template kind and
/// DataError for records that cannot be rendered.
RenderedPrompt build_prompt(const PatientRecord& r, PromptTemplateKind kind,
                            const std::optional<MlContext>& ml, const PromptOptions& options = {});

/// Share of letters outside ASCII (code points, not bytes).
double non_ascii_letter_fraction(std::string_view text);

/// Case-insensitive search for words that would reveal the gold label.
bool contains_label_token(std::string_view text);

/// Version tag of the embedded template wording.
std::string_view prompt_template_version();

/// Raw text of a named template element; throws std::out_of_range.
std::string_view template_element(std::string_view name);

nlohmann::json to_json(const RenderedPrompt& p);
RenderedPrompt rendered_prompt_from_json(const nlohmann::json& j);

void write_prompts_jsonl(std::span<const RenderedPrompt> prompts, const std::filesystem::path& path);
std::vector<RenderedPrompt> read_prompts_jsonl(const std::filesystem::path& path);

}  // namespace lnm
