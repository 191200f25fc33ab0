#include "lnm/judgment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include "lnm/error.hpp"

namespace lnm {
namespace {

// Returns the first balanced {...} span that parses as a JSON object.
std::optional<nlohmann::json> first_json_object(std::string_view raw) {
  for (std::size_t start = raw.find('{'); start != std::string_view::npos; start = raw.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = nlohmann::json::parse(raw.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

std::optional<double> parse_number_text(std::string text) {
  // Trim whitespace and a trailing percent sign.
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return std::nullopt;
  text = text.substr(first, text.find_last_not_of(" \t\r\n") - first + 1);
  if (!text.empty() && text.back() == '%') text.pop_back();
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Case-sensitive key first, then a case-insensitive match.
const nlohmann::json* find_key(const nlohmann::json& obj, std::string_view key) {
  if (auto it = obj.find(std::string(key)); it != obj.end()) return &*it;
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  const std::string wanted = lower(std::string(key));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (lower(it.key()) == wanted) return &*it;
  }
  return nullptr;
}

void settle(LlmJudgment& j, std::optional<double> value, bool repaired_already) {
  if (!value || !std::isfinite(*value)) {
    j.parse_status = ParseStatus::Fallback;
    if (j.diagnostic.empty()) j.diagnostic = "answer is missing or not a number";
    return;
  }
  double v = *value;
  bool repaired = repaired_already;
  if (v > 1.0 && v <= 100.0) {
    v /= 100.0;
    repaired = true;
    j.diagnostic = "answer read as a percentage";
  } else if (v < 0.0 || v > 1.0) {
    v = std::clamp(v, 0.0, 1.0);
    repaired = true;
    j.diagnostic = "answer clamped to [0, 1]";
  }
  j.answer = v;
  j.parse_status = repaired ? ParseStatus::Repaired : ParseStatus::Clean;
}

}  // namespace

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::Repaired: return "repaired";
    case ParseStatus::Fallback: return "fallback";
  }
  return "fallback";
}

ParseStatus parse_status_from_string(std::string_view text) {
  if (text == "clean") return ParseStatus::Clean;
  if (text == "repaired") return ParseStatus::Repaired;
  if (text == "fallback") return ParseStatus::Fallback;
  throw DataError("unknown parse status '" + std::string(text) + "'");
}

LlmJudgment parse_judgment(std::string_view raw, std::string patient_id, std::size_t repeat_index) {
  LlmJudgment j;
  j.patient_id = std::move(patient_id);
  j.repeat_index = repeat_index;
  j.raw_text = std::string(raw);

  if (const auto obj = first_json_object(raw)) {
    if (const auto* e = find_key(*obj, "Step By Step Explanation"); e && e->is_string()) {
      j.explanation = e->get<std::string>();
    }
    const auto* a = find_key(*obj, "Answer");
    if (a == nullptr) {
      j.diagnostic = "JSON object has no Answer key";
      settle(j, std::nullopt, false);
    } else if (a->is_number()) {
      settle(j, a->get<double>(), false);
    } else if (a->is_string()) {
      settle(j, parse_number_text(a->get<std::string>()), false);
    } else {
      j.diagnostic = "Answer is neither a number nor a numeric string";
      settle(j, std::nullopt, false);
    }
    return j;
  }

  static const std::regex kAnswer(R"re("?[Aa]nswer"?\s*[:=]\s*"?\s*(-?[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)\s*(%?))re");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(raw.begin(), raw.end(), m, kAnswer)) {
    j.diagnostic = "no JSON object; answer recovered from text";
    settle(j, parse_number_text(m[1].str()), true);
    return j;
  }
  j.diagnostic = "no JSON object or answer found";
  settle(j, std::nullopt, false);
  return j;
}

nlohmann::json to_json(const LlmJudgment& j) {
  nlohmann::json out = {{"patient_id", j.patient_id},
                        {"prompt_hash", j.prompt_hash},
                        {"template_kind", to_string(j.template_kind)},
                        {"repeat_index", j.repeat_index},
                        {"explanation", j.explanation},
                        {"answer", nullptr},
                        {"raw_text", j.raw_text},
                        {"parse_status", to_string(j.parse_status)},
                        {"diagnostic", j.diagnostic},
                        {"attempts", j.attempts}};
  if (j.answer) out["answer"] = *j.answer;
  return out;
}

LlmJudgment judgment_from_json(const nlohmann::json& in) {
  LlmJudgment j;
  try {
    j.patient_id = in.at("patient_id").get<std::string>();
    j.prompt_hash = in.value("prompt_hash", std::string());
    j.template_kind = parse_template_kind(in.at("template_kind").get<std::string>());
    j.repeat_index = in.at("repeat_index").get<std::size_t>();
    j.explanation = in.at("explanation").get<std::string>();
    if (!in.at("answer").is_null()) j.answer = in.at("answer").get<double>();
    j.raw_text = in.at("raw_text").get<std::string>();
    j.parse_status = parse_status_from_string(in.at("parse_status").get<std::string>());
    j.diagnostic = in.value("diagnostic", std::string());
    j.attempts = in.value("attempts", 1);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed judgment record: ") + e.what());
  }
  if (j.parse_status == ParseStatus::Fallback ? j.answer.has_value()
                                               : (!j.answer || *j.answer < 0.0 || *j.answer > 1.0)) {
    throw DataError("judgment for " + j.patient_id + " has an answer inconsistent with its status");
  }
  return j;
}

}  // namespace lnm
