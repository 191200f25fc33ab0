#include "lnm/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lnm/csv.hpp"
#include "lnm/error.hpp"
#include "lnm/hash.hpp"
#include "lnm/prompt_resources.hpp"
#include "lnm/synthesis.hpp"

namespace lnm {
namespace {

std::string_view trim_trailing(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

using Substitutions = std::map<std::string, std::string, std::less<>>;

std::string fill(std::string_view text, const Substitutions& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find("}}", open);
    if (close == std::string_view::npos) throw InvariantError("unterminated placeholder in prompt template");
    out.append(text.substr(pos, open - pos));
    const auto name = text.substr(open + 2, close - open - 2);
    const auto it = values.find(name);
    if (it == values.end()) throw InvariantError("no value for prompt placeholder {{" + std::string(name) + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  out.append(text.substr(pos));
  return out;
}

std::string fixed3(double v) { return csv::format_fixed(v, 3); }

std::string value_or(const std::optional<double>& v, int decimals, std::string_view missing) {
  return v ? csv::format_fixed(*v, decimals) : std::string(missing);
}

void check_language(std::string_view field, std::string_view text, bool strict) {
  if (strict && non_ascii_letter_fraction(text) > 0.2) {
    throw DataError("free-text field '" + std::string(field) +
                    "' does not look like English; translate it before building prompts");
  }
}

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes
// decode as U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
  if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
    ++i;
    return 0xFFFD;
  }
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
    if ((b >> 6) != 0x2) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

// Latin-1 punctuation, general punctuation, arrows, math operators and other
// symbol blocks are not letters.
bool is_symbol_block(char32_t cp) {
  return (cp >= 0x80 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2000 && cp <= 0x2BFF) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFF20) || cp == 0xFFFD;
}

}  // namespace

std::string_view to_string(PromptTemplateKind kind) {
  switch (kind) {
    case PromptTemplateKind::Full: return "full";
    case PromptTemplateKind::BaselineNoMl: return "baseline1";
    case PromptTemplateKind::BaselineNoIndependentEstimate: return "baseline2";
  }
  throw InvariantError("unknown template kind");
}

PromptTemplateKind parse_template_kind(std::string_view text) {
  for (auto k : kAllTemplateKinds) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown template kind '" + std::string(text) + "' (expected full, baseline1 or baseline2)");
}

bool requires_ml(PromptTemplateKind kind) { return kind != PromptTemplateKind::BaselineNoMl; }

double BiomarkerReferenceRanges::upper(ContinuousFeature f) const {
  switch (f) {
    case ContinuousFeature::Cea: return cea;
    case ContinuousFeature::Ca199: return ca199;
    case ContinuousFeature::Ca125: return ca125;
    case ContinuousFeature::Nse: return nse;
    case ContinuousFeature::Cyfra211: return cyfra211;
    case ContinuousFeature::Sccag: return sccag;
    default: throw std::invalid_argument("not a biomarker: " + std::string(info(f).column));
  }
}

void BiomarkerReferenceRanges::validate() const {
  for (auto f : kBiomarkers) {
    const double v = upper(f);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("reference limit for " + std::string(info(f).column) + " must be positive");
    }
  }
}

nlohmann::json BiomarkerReferenceRanges::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (auto f : kBiomarkers) j[std::string(info(f).column)] = upper(f);
  return j;
}

BiomarkerReferenceRanges BiomarkerReferenceRanges::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("reference ranges must be an object");
  BiomarkerReferenceRanges r;
  for (const auto& [key, value] : j.items()) {
    double* slot = nullptr;
    if (key == "cea") slot = &r.cea;
    else if (key == "ca199") slot = &r.ca199;
    else if (key == "ca125") slot = &r.ca125;
    else if (key == "nse") slot = &r.nse;
    else if (key == "cyfra211") slot = &r.cyfra211;
    else if (key == "sccag") slot = &r.sccag;
    else throw ConfigError("unknown biomarker in reference ranges: " + key);
    if (!value.is_number()) throw ConfigError("reference limit for " + key + " must be a number");
    *slot = value.get<double>();
  }
  r.validate();
  return r;
}

MlContext ml_context_for(const MlFoldResult& fold, std::size_t cohort_index) {
  const auto it = std::find(fold.test_indices.begin(), fold.test_indices.end(), cohort_index);
  if (it == fold.test_indices.end()) {
    throw InvariantError("patient index " + std::to_string(cohort_index) + " is not in test fold " +
                         std::to_string(fold.fold_index));
  }
  const auto k = static_cast<std::size_t>(it - fold.test_indices.begin());
  return MlContext{fold.model_kind, fold.oof_probabilities.at(k), fold.inner_cv_auc, fold.inner_cv_ap,
                   fold.train_prevalence};
}

double non_ascii_letter_fraction(std::string_view text) {
  std::size_t letters = 0, foreign = 0;
  for (std::size_t i = 0; i < text.size();) {
    const char32_t cp = next_code_point(text, i);
    if (cp < 0x80) {
      if (std::isalpha(static_cast<int>(cp))) ++letters;
    } else if (!is_symbol_block(cp)) {
      ++letters;
      ++foreign;
    }
  }
  return letters == 0 ? 0.0 : static_cast<double>(foreign) / static_cast<double>(letters);
}

bool contains_label_token(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static constexpr std::array<std::string_view, 5> kTokens{"positive", "negative", "n2_label", "n2 label",
                                                           "gold label"};
  return std::any_of(kTokens.begin(), kTokens.end(),
                     [&](std::string_view t) { return lower.find(t) != std::string::npos; });
}

std::string_view prompt_template_version() { return prompt_resources::kVersion; }

std::string_view template_element(std::string_view name) {
  for (const auto& [key, text] : prompt_resources::kEntries) {
    if (key == name) return trim_trailing(text);
  }
  throw std::out_of_range("no prompt template element named " + std::string(name));
}

std::string render_patient_section(const PatientRecord& r, const BiomarkerReferenceRanges& ranges,
                                   bool strict_language) {
  using F = ContinuousFeature;
  // Records without narrative text get one generated from their structured fields.
  const std::string history = r.disease_history_text.empty() ? render_history_text(r) : r.disease_history_text;
  const std::string ct = r.ct_report_text.empty() ? render_ct_text(r) : r.ct_report_text;
  check_language("disease_history_text", history, strict_language);
  check_language("ct_report_text", ct, strict_language);

  std::ostringstream out;
  const auto gender = r.level_name(CategoricalFeature::Gender);
  out << "Demographics: " << (gender.empty() ? "sex not recorded" : gender) << ", age "
      << value_or(r.value(F::Age), 0, "not recorded") << (r.value(F::Age) ? " years" : "") << ", height "
      << value_or(r.value(F::Height), 1, "not recorded") << (r.value(F::Height) ? " cm" : "") << ", weight "
      << value_or(r.value(F::Weight), 1, "not recorded") << (r.value(F::Weight) ? " kg" : "") << ".\n";
  out << "Disease history: " << history << '\n';
  out << "Tumor biomarkers:\n";
  for (auto f : kBiomarkers) {
    const auto& meta = info(f);
    const auto v = r.value(f);
    out << "- " << meta.display << ": "
        << (v ? csv::format_fixed(*v, 2) + " " + std::string(meta.unit) : std::string("not measured"))
        << " (reference range: ≤ " << csv::format_fixed(ranges.upper(f), 1) << ' ' << meta.unit << ")\n";
  }
  out << "CT report: " << ct;
  return out.str();
}

RenderedPrompt build_prompt(const PatientRecord& r, PromptTemplateKind kind, const std::optional<MlContext>& ml,
                            const PromptOptions& options) {
  if (requires_ml(kind) && !ml) {
    throw ConfigError("template " + std::string(to_string(kind)) + " requires a machine learning result");
  }
  if (!requires_ml(kind) && ml) {
    throw ConfigError("template " + std::string(to_string(kind)) + " must not receive a machine learning result");
  }
  if (ml) {
    for (double v : {ml->probability, ml->auc, ml->ap, ml->n2_rate}) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("model result values must lie in [0, 1]");
    }
  }

  Substitutions values{{"patient_section", render_patient_section(r, options.ranges, options.strict_language)}};
  if (ml) {
    values["model_name"] = std::string(long_name(ml->model_kind));
    values["ml_probability"] = fixed3(ml->probability);
    values["ml_auc"] = fixed3(ml->auc);
    values["ml_ap"] = fixed3(ml->ap);
    values["n2_rate"] = fixed3(ml->n2_rate);
  }

  std::vector<std::string_view> elements{template_element("role"), template_element("task"),
                                         template_element("patient_data")};
  if (ml) elements.push_back(template_element("ml_result"));

  std::string instruction(template_element("instruction_header"));
  auto add_line = [&](std::string_view name) {
    instruction += '\n';
    instruction += template_element(name);
  };
  if (kind != PromptTemplateKind::BaselineNoIndependentEstimate) add_line("instruction_independent");
  if (kind != PromptTemplateKind::BaselineNoMl) add_line("instruction_adjust");
  add_line("instruction_reasoning");
  add_line("instruction_output");

  std::string text;
  for (auto e : elements) {
    text += fill(e, values);
    text += "\n\n";
  }
  text += instruction;
  text += '\n';

  RenderedPrompt p;
  p.content_hash = sha256_hex(text);
  p.text = std::move(text);
  p.template_kind = kind;
  p.patient_id = r.patient_id;
  p.ml_context = ml;
  return p;
}

nlohmann::json to_json(const RenderedPrompt& p) {
  nlohmann::json j = {{"patient_id", p.patient_id},
                      {"template_kind", to_string(p.template_kind)},
                      {"template_version", prompt_template_version()},
                      {"text", p.text},
                      {"content_hash", p.content_hash}};
  if (p.ml_context) {
    j["ml_context"] = {{"model_kind", to_string(p.ml_context->model_kind)},
                       {"probability", p.ml_context->probability},
                       {"auc", p.ml_context->auc},
                       {"ap", p.ml_context->ap},
                       {"n2_rate", p.ml_context->n2_rate}};
  }
  return j;
}

RenderedPrompt rendered_prompt_from_json(const nlohmann::json& j) {
  RenderedPrompt p;
  try {
    p.patient_id = j.at("patient_id").get<std::string>();
    p.template_kind = parse_template_kind(j.at("template_kind").get<std::string>());
    p.text = j.at("text").get<std::string>();
    p.content_hash = j.at("content_hash").get<std::string>();
    if (j.contains("ml_context")) {
      const auto& m = j.at("ml_context");
      p.ml_context = MlContext{parse_model_kind(m.at("model_kind").get<std::string>()), m.at("probability").get<double>(),
                               m.at("auc").get<double>(), m.at("ap").get<double>(), m.at("n2_rate").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prompt record: ") + e.what());
  }
  if (sha256_hex(p.text) != p.content_hash) {
    throw DataError("prompt for " + p.patient_id + " does not match its content hash");
  }
  return p;
}

void write_prompts_jsonl(std::span<const RenderedPrompt> prompts, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : prompts) out << to_json(p).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<RenderedPrompt> read_prompts_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RenderedPrompt> prompts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      prompts.push_back(rendered_prompt_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return prompts;
}

}  // namespace lnm
