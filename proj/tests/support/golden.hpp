#pragma once

// The three fixture patients behind tests/fixtures/golden and the model
// context each one is rendered with.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lnm/prompting.hpp"
#include "lnm/synthesis.hpp"

namespace lnm::testing {

inline constexpr MlContext kGoldenContext{ModelKind::LR, 0.42, 0.76, 0.39, 0.136};

inline std::vector<PatientRecord> golden_patients() {
  const auto cohort = synthesize_cohort(default_marginal_spec(), 12, 314);
  std::vector<PatientRecord> out{cohort[0], cohort[1], cohort[2]};
  // Third patient exercises the missing-value wording.
  out[2].continuous[static_cast<std::size_t>(ContinuousFeature::Cea)].reset();
  return out;
}

inline std::optional<MlContext> golden_context(PromptTemplateKind kind, std::size_t patient) {
  if (!requires_ml(kind)) return std::nullopt;
  MlContext c = kGoldenContext;
  c.model_kind = std::array{ModelKind::LR, ModelKind::RF, ModelKind::SVM}[patient];
  c.probability = 0.1 + 0.25 * static_cast<double>(patient);
  return c;
}

inline std::filesystem::path golden_file(const std::filesystem::path& fixture_dir, std::size_t patient,
                                         PromptTemplateKind kind) {
  return fixture_dir / "golden" /
         ("patient" + std::to_string(patient + 1) + "_" + std::string(to_string(kind)) + ".txt");
}

}  // namespace lnm::testing
