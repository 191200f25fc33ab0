#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnm/cohort.hpp"
#include "lnm/cross_validation.hpp"
#include "lnm/ensemble.hpp"
#include "lnm/llm_gateway.hpp"
#include "lnm/metrics.hpp"
#include "lnm/mock_llm.hpp"
#include "lnm/models.hpp"
#include "lnm/prompting.hpp"

namespace lnm {

struct CohortSource {
  enum class Kind { Synthetic, File } kind = Kind::Synthetic;
  // Synthetic
  std::size_t size = 767;
  std::optional<std::filesystem::path> marginals;  // built-in table when absent
  std::optional<std::uint64_t> seed;               // derived from the master seed when absent
  // File
  std::filesystem::path path;
  LoadMode mode = LoadMode::Strict;
  CohortSchema schema;
};

struct MockSettings {
  MockScenario scenario = MockScenario::Echo;
  double knowledge_strength = 0.08;
  double concentration = 8.0;
  double base_rate = 0.136;
};

struct ExperimentConfig {
  CohortSource cohort;
  std::vector<ModelKind> models{ModelKind::LR, ModelKind::RF, ModelKind::SVM};
  std::vector<PromptTemplateKind> templates{kAllTemplateKinds.begin(), kAllTemplateKinds.end()};
  std::vector<EnsembleStrategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  LlmConfig llm;
  std::optional<MockSettings> mock;  // real endpoint when absent
  CvOptions cv;
  unsigned cv_threads = 0;  // 0: one per hardware thread
  Sidedness sidedness = Sidedness::TwoSided;
  PromptOptions prompt;
  std::string llm_label = "GPT-4o";
  std::filesystem::path out = "out";
  std::uint64_t seed = 20240513;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
  nlohmann::json to_json() const;
  /// Relative paths inside `j` resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

  /// SHA-256 over the settings that affect results (output location and
  /// thread counts excluded).
  std::string hash() const;

  std::uint64_t cohort_seed() const;
  std::uint64_t plan_seed() const;
  std::uint64_t model_seed() const;
  std::uint64_t mock_seed() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Comma-separated list parsers for the CLI overrides.
std::vector<ModelKind> parse_model_list(std::string_view text);
std::vector<EnsembleStrategy> parse_strategy_list(std::string_view text);
std::vector<PromptTemplateKind> parse_template_list(std::string_view text);

}  // namespace lnm
