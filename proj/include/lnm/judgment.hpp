#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lnm/prompting.hpp"

namespace lnm {

enum class ParseStatus { Clean, Repaired, Fallback };

std::string_view to_string(ParseStatus s);  // "clean", "repaired", "fallback"
ParseStatus parse_status_from_string(std::string_view text);

/// One parsed LLM response. `answer` is in [0,1] unless the status is
/// Fallback, in which case it is absent.
struct LlmJudgment {
  std::string patient_id;
  std::string prompt_hash;  // content hash of the prompt that produced it
  PromptTemplateKind template_kind = PromptTemplateKind::Full;
  std::size_t repeat_index = 0;
  std::string explanation;
  std::optional<double> answer;
  std::string raw_text;
  ParseStatus parse_status = ParseStatus::Fallback;
  std::string diagnostic;  // why a response was repaired or rejected
  int attempts = 1;        // 2 when a fallback triggered a re-query

  bool operator==(const LlmJudgment&) const = default;
};

/// Reads the first JSON object in `raw` (code fences and surrounding prose are
/// tolerated) and takes its "Answer". Numbers or numeric strings are accepted;
/// values in (1, 100] are read as percentages (status Repaired). Out-of-range
/// values are clamped (Repaired). Anything else gives status Fallback. When no
/// JSON object parses, an `"Answer": <number>` pattern is searched instead.
LlmJudgment parse_judgment(std::string_view raw, std::string patient_id, std::size_t repeat_index);

nlohmann::json to_json(const LlmJudgment& j);
LlmJudgment judgment_from_json(const nlohmann::json& j);

}  // namespace lnm
