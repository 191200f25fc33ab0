#include "lnm/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include "lnm/error.hpp"
#include "lnm/hash.hpp"
#include "lnm/seeding.hpp"

namespace lnm {
namespace {

template <class T, class Parse>
std::vector<T> parse_list(std::string_view text, Parse parse, std::string_view what) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    auto item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw ConfigError("empty entry in " + std::string(what) + " list");
    const T value = parse(item);
    if (std::find(out.begin(), out.end(), value) != out.end()) {
      throw ConfigError("duplicate entry '" + std::string(item) + "' in " + std::string(what) + " list");
    }
    out.push_back(value);
    pos = comma + 1;
  }
  return out;
}

template <class T, class Parse>
std::vector<T> json_list(const nlohmann::json& j, Parse parse, std::string_view what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array of strings");
  std::string joined;
  for (const auto& item : j) {
    if (!item.is_string()) throw ConfigError(std::string(what) + " must be an array of strings");
    if (!joined.empty()) joined += ',';
    joined += item.get<std::string>();
  }
  if (joined.empty()) throw ConfigError(std::string(what) + " must not be empty");
  return parse_list<T>(joined, parse, what);
}

template <class T>
nlohmann::json names(const std::vector<T>& values) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : values) out.push_back(std::string(to_string(v)));
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const nlohmann::json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key " + std::string(section) + "." + key);
    }
  }
}

}  // namespace

std::vector<ModelKind> parse_model_list(std::string_view text) {
  return parse_list<ModelKind>(text, [](std::string_view s) {
    try {
      return parse_model_kind(s);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }, "models");
}

std::vector<EnsembleStrategy> parse_strategy_list(std::string_view text) {
  return parse_list<EnsembleStrategy>(text, parse_strategy, "strategies");
}

std::vector<PromptTemplateKind> parse_template_list(std::string_view text) {
  return parse_list<PromptTemplateKind>(text, parse_template_kind, "templates");
}

void ExperimentConfig::validate() const {
  if (models.empty()) throw ConfigError("at least one model kind is required");
  if (strategies.empty()) throw ConfigError("at least one ensemble strategy is required");
  if (std::find(templates.begin(), templates.end(), PromptTemplateKind::Full) == templates.end()) {
    throw ConfigError("templates must include 'full'");
  }
  if (cohort.kind == CohortSource::Kind::Synthetic && cohort.size < 10) {
    throw ConfigError("synthetic cohort size must be at least 10");
  }
  if (cohort.kind == CohortSource::Kind::File && cohort.path.empty()) throw ConfigError("cohort.path is required");
  if (cv.outer_folds < 2 || cv.inner_folds < 2) throw ConfigError("cv fold counts must be at least 2");
  llm.validate();
  prompt.ranges.validate();
  if (mock) {
    if (!(mock->knowledge_strength >= 0.0 && mock->knowledge_strength <= 1.0)) {
      throw ConfigError("mock.knowledge_strength must lie in [0, 1]");
    }
    if (!(mock->concentration > 0.0)) throw ConfigError("mock.concentration must be positive");
    if (!(mock->base_rate > 0.0 && mock->base_rate < 1.0)) throw ConfigError("mock.base_rate must lie in (0, 1)");
  }
  if (out.empty()) throw ConfigError("out must not be empty");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json c;
  if (cohort.kind == CohortSource::Kind::Synthetic) {
    c = {{"source", "synthetic"}, {"size", cohort.size}};
    if (cohort.marginals) c["marginals"] = cohort.marginals->string();
    if (cohort.seed) c["seed"] = *cohort.seed;
  } else {
    c = {{"source", "file"},
         {"path", cohort.path.string()},
         {"mode", cohort.mode == LoadMode::Strict ? "strict" : "lenient"}};
    if (!cohort.schema.rename.empty()) c["rename"] = cohort.schema.rename;
  }
  nlohmann::json j = {
      {"seed", seed},
      {"out", out.string()},
      {"cohort", c},
      {"models", names(models)},
      {"templates", names(templates)},
      {"strategies", names(strategies)},
      {"cv", {{"outer_folds", cv.outer_folds}, {"inner_folds", cv.inner_folds}, {"threads", cv_threads}}},
      {"llm", llm.to_json()},
      {"mock", nullptr},
      {"ttest", {{"sidedness", sidedness == Sidedness::TwoSided ? "two-sided" : "one-sided"}}},
      {"prompt", {{"reference_ranges", prompt.ranges.to_json()}, {"strict_language", prompt.strict_language}}},
      {"report", {{"llm_label", llm_label}}}};
  if (mock) {
    j["mock"] = {{"scenario", to_string(mock->scenario)},
                 {"knowledge_strength", mock->knowledge_strength},
                 {"concentration", mock->concentration},
                 {"base_rate", mock->base_rate}};
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"seed", "out", "cohort", "models", "templates", "strategies", "cv", "llm", "mock", "ttest", "prompt",
              "report"});
  ExperimentConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) cfg.out = resolve(base_dir, j.at("out").get<std::string>());
    if (j.contains("cohort")) {
      const auto& c = j.at("cohort");
      check_keys(c, "cohort", {"source", "size", "marginals", "seed", "path", "mode", "rename"});
      const std::string source = c.value("source", std::string("synthetic"));
      if (source == "synthetic") {
        cfg.cohort.kind = CohortSource::Kind::Synthetic;
        if (c.contains("size")) cfg.cohort.size = c.at("size").get<std::size_t>();
        if (c.contains("marginals")) cfg.cohort.marginals = resolve(base_dir, c.at("marginals").get<std::string>());
        if (c.contains("seed")) cfg.cohort.seed = c.at("seed").get<std::uint64_t>();
      } else if (source == "file") {
        cfg.cohort.kind = CohortSource::Kind::File;
        cfg.cohort.path = resolve(base_dir, c.at("path").get<std::string>());
        const std::string mode = c.value("mode", std::string("strict"));
        if (mode == "strict") cfg.cohort.mode = LoadMode::Strict;
        else if (mode == "lenient") cfg.cohort.mode = LoadMode::Lenient;
        else throw ConfigError("cohort.mode must be 'strict' or 'lenient'");
        if (c.contains("rename")) cfg.cohort.schema.rename = c.at("rename").get<std::map<std::string, std::string>>();
      } else {
        throw ConfigError("cohort.source must be 'synthetic' or 'file'");
      }
    }
    if (j.contains("models")) {
      cfg.models = json_list<ModelKind>(j.at("models"), [](std::string_view s) {
        try {
          return parse_model_kind(s);
        } catch (const Error& e) {
          throw ConfigError(e.what());
        }
      }, "models");
    }
    if (j.contains("templates")) cfg.templates = json_list<PromptTemplateKind>(j.at("templates"), parse_template_kind, "templates");
    if (j.contains("strategies")) cfg.strategies = json_list<EnsembleStrategy>(j.at("strategies"), parse_strategy, "strategies");
    if (j.contains("cv")) {
      const auto& c = j.at("cv");
      check_keys(c, "cv", {"outer_folds", "inner_folds", "threads"});
      cfg.cv.outer_folds = c.value("outer_folds", cfg.cv.outer_folds);
      cfg.cv.inner_folds = c.value("inner_folds", cfg.cv.inner_folds);
      cfg.cv_threads = c.value("threads", cfg.cv_threads);
    }
    if (j.contains("llm")) cfg.llm = LlmConfig::from_json(j.at("llm"));
    if (j.contains("mock") && !j.at("mock").is_null()) {
      const auto& m = j.at("mock");
      check_keys(m, "mock", {"scenario", "knowledge_strength", "concentration", "base_rate"});
      MockSettings s;
      if (m.contains("scenario")) s.scenario = parse_mock_scenario(m.at("scenario").get<std::string>());
      s.knowledge_strength = m.value("knowledge_strength", s.knowledge_strength);
      s.concentration = m.value("concentration", s.concentration);
      s.base_rate = m.value("base_rate", s.base_rate);
      cfg.mock = s;
    }
    if (j.contains("ttest")) {
      const auto& t = j.at("ttest");
      check_keys(t, "ttest", {"sidedness"});
      const std::string side = t.value("sidedness", std::string("two-sided"));
      if (side == "two-sided") cfg.sidedness = Sidedness::TwoSided;
      else if (side == "one-sided") cfg.sidedness = Sidedness::OneSided;
      else throw ConfigError("ttest.sidedness must be 'two-sided' or 'one-sided'");
    }
    if (j.contains("prompt")) {
      const auto& p = j.at("prompt");
      check_keys(p, "prompt", {"reference_ranges", "strict_language"});
      if (p.contains("reference_ranges")) cfg.prompt.ranges = BiomarkerReferenceRanges::from_json(p.at("reference_ranges"));
      cfg.prompt.strict_language = p.value("strict_language", true);
    }
    if (j.contains("report")) {
      const auto& r = j.at("report");
      check_keys(r, "report", {"llm_label"});
      cfg.llm_label = r.value("llm_label", cfg.llm_label);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string ExperimentConfig::hash() const {
  auto j = to_json();
  j.erase("out");
  j["cv"].erase("threads");
  j["llm"].erase("parallelism");
  return sha256_hex(j.dump());
}

std::uint64_t ExperimentConfig::cohort_seed() const { return cohort.seed.value_or(derive_seed(seed, {1})); }
std::uint64_t ExperimentConfig::plan_seed() const { return derive_seed(seed, {2}); }
std::uint64_t ExperimentConfig::model_seed() const { return derive_seed(seed, {3}); }
std::uint64_t ExperimentConfig::mock_seed() const { return derive_seed(seed, {4}); }

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  return ExperimentConfig::from_json(j, path.parent_path());
}

}  // namespace lnm
