#include "lnm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "lnm/error.hpp"
#include "lnm/csv.hpp"
#include "lnm/features.hpp"
#include "lnm/mock_llm.hpp"
#include "lnm/synthesis.hpp"

namespace lnm {
namespace {

// Builds the real backend on first use, so cache-only reruns need no
// credential.
class LazyBackend final : public ChatBackend {
 public:
  explicit LazyBackend(std::function<std::shared_ptr<ChatBackend>()> make) : make_(std::move(make)) {}
  HttpResponse send(const ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      if (!inner_) inner_ = make_();
    }
    return inner_->send(request);
  }

 private:
  std::function<std::shared_ptr<ChatBackend>()> make_;
  std::mutex mutex_;
  std::shared_ptr<ChatBackend> inner_;
};

nlohmann::json read_json(const std::filesystem::path& path, std::string_view hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing " + path.string() + " (run the '" + std::string(hint) + "' stage first)");
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(path.string() + " is not valid JSON");
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string llm_row_label(const ExperimentConfig& cfg, ModelKind m, VariantKind v,
                          std::optional<EnsembleStrategy> s) {
  switch (v) {
    case VariantKind::LlmAlone: return cfg.llm_label;
    case VariantKind::Ml: return std::string(display_name(m));
    case VariantKind::LlmMlNoEstimate: return cfg.llm_label + "+" + std::string(display_name(m)) + "*";
    case VariantKind::Full:
      return cfg.llm_label + "+" + std::string(display_name(m)) + " " + std::string(to_string(*s));
  }
  return "?";
}

// Key of a rendered prompt: model is empty for the model-free template.
using PromptKey = std::tuple<std::string, PromptTemplateKind, std::string>;

PromptKey key_of(const RenderedPrompt& p) {
  return {p.ml_context ? std::string(to_string(p.ml_context->model_kind)) : std::string(), p.template_kind,
          p.patient_id};
}

}  // namespace

RunPaths::RunPaths(const std::filesystem::path& out)
    : root(out),
      cohort(out / "cohort.csv"),
      ml_dir(out / "ml"),
      prompts(out / "prompts.jsonl"),
      llm_cache(out / "llm_cache.jsonl"),
      judgments(out / "judgments.jsonl"),
      predictions(out / "predictions.csv"),
      evaluation(out / "evaluation.json"),
      report_dir(out / "report"),
      run_stats(out / "run_stats.json") {}

std::filesystem::path RunPaths::ml_run(ModelKind kind) const { return ml_dir / (std::string(to_string(kind)) + ".json"); }

Pipeline::Pipeline(ExperimentConfig cfg, std::shared_ptr<ChatBackend> backend, LogSink log)
    : cfg_(std::move(cfg)), paths_(cfg_.out), backend_override_(std::move(backend)), log_(std::move(log)) {
  cfg_.validate();
}

void Pipeline::log(std::string_view message) const {
  if (log_) log_(message);
}

Cohort Pipeline::load_run_cohort() const {
  if (!std::filesystem::exists(paths_.cohort)) {
    throw DataError("missing " + paths_.cohort.string() + " (run the 'synth' stage first)");
  }
  return load_cohort(paths_.cohort, {}, cfg_.cohort.mode);
}

CvPlan Pipeline::plan_for(const Cohort& cohort) const { return make_cv_plan(cohort, cfg_.plan_seed(), cfg_.cv); }

void Pipeline::synth() {
  if (cfg_.cohort.kind == CohortSource::Kind::Synthetic) {
    const MarginalSpec spec =
        cfg_.cohort.marginals ? load_marginal_spec(*cfg_.cohort.marginals) : default_marginal_spec();
    const Cohort cohort = synthesize_cohort(spec, cfg_.cohort.size, cfg_.cohort_seed());
    write_text(paths_.cohort, cohort_to_csv(cohort));
    log("synth: " + std::to_string(cohort.size()) + " synthetic patients, " + std::to_string(cohort.positives()) +
        " with N2 metastasis");
  } else {
    const Cohort cohort = load_cohort(cfg_.cohort.path, cfg_.cohort.schema, cfg_.cohort.mode);
    cohort.labels();  // every record must be labeled for evaluation
    write_text(paths_.cohort, cohort_to_csv(cohort));
    log("synth: loaded " + std::to_string(cohort.size()) + " patients from " + cfg_.cohort.path.string());
  }
}

void Pipeline::train() {
  const Cohort cohort = load_run_cohort();
  const std::string hash = cohort_hash(cohort);
  const CvPlan plan = plan_for(cohort);
  const unsigned threads = cfg_.cv_threads != 0 ? cfg_.cv_threads : std::max(1u, std::thread::hardware_concurrency());
  const std::uint64_t fits_before = model_fit_count();
  for (ModelKind kind : cfg_.models) {
    const auto grid = default_grid(kind, encoded_columns().size());
    const auto path = paths_.ml_run(kind);
    if (auto existing = load_cv_run_if_matching(path, hash, kind, cfg_.model_seed())) {
      const bool same_grid = !existing->run.folds.empty() && existing->run.folds.front().grid_mean_auc.size() == grid.size();
      if (existing->plan == plan && same_grid) {
        ++counters_.reused_cv_runs;
        log("train: reusing " + path.string());
        continue;
      }
    }
    log("train: nested CV for " + std::string(long_name(kind)) + " (" + std::to_string(grid.size()) +
        " grid points)");
    CvRunFile file{hash, kind, cfg_.model_seed(), plan,
                   run_nested_cv(cohort, kind, grid, plan, cfg_.model_seed(), {threads})};
    save_cv_run(file, path);
    const auto oof = out_of_fold_probabilities(file.run.folds, cohort.size());
    const auto labels = cohort.labels();
    log("train: " + std::string(display_name(kind)) + " pooled out-of-fold AUC " +
        csv::format_fixed(roc_auc(oof, labels), 3));
  }
  counters_.model_fits += model_fit_count() - fits_before;
}

void Pipeline::prompt() {
  const Cohort cohort = load_run_cohort();
  const std::string hash = cohort_hash(cohort);
  std::vector<RenderedPrompt> prompts;
  auto wants = [&](PromptTemplateKind t) {
    return std::find(cfg_.templates.begin(), cfg_.templates.end(), t) != cfg_.templates.end();
  };
  if (wants(PromptTemplateKind::BaselineNoMl)) {
    for (const auto& r : cohort.records()) {
      prompts.push_back(build_prompt(r, PromptTemplateKind::BaselineNoMl, std::nullopt, cfg_.prompt));
    }
  }
  for (ModelKind kind : cfg_.models) {
    const auto file = load_cv_run_if_matching(paths_.ml_run(kind), hash, kind, cfg_.model_seed());
    if (!file) throw DataError("no nested-CV results for " + std::string(to_string(kind)) + " match this cohort (run 'train')");
    for (PromptTemplateKind t : {PromptTemplateKind::Full, PromptTemplateKind::BaselineNoIndependentEstimate}) {
      if (!wants(t)) continue;
      for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& fold = file->run.folds.at(file->plan.fold_of(i));
        prompts.push_back(build_prompt(cohort[i], t, ml_context_for(fold, i), cfg_.prompt));
      }
    }
  }
  std::size_t flagged = 0;
  for (const auto& p : prompts) flagged += contains_label_token(p.text) ? 1 : 0;
  if (flagged > 0) log("prompt: warning: " + std::to_string(flagged) + " prompts contain a label-like token");
  write_prompts_jsonl(prompts, paths_.prompts);
  log("prompt: " + std::to_string(prompts.size()) + " prompts rendered");
}

std::shared_ptr<ChatBackend> Pipeline::make_backend(const Cohort& cohort) {
  if (backend_override_) return backend_override_;
  if (cfg_.mock) {
    MockOptions options;
    options.scenario = cfg_.mock->scenario;
    options.seed = cfg_.mock_seed();
    options.knowledge_strength = cfg_.mock->knowledge_strength;
    options.concentration = cfg_.mock->concentration;
    options.base_rate = cfg_.mock->base_rate;
    for (const auto& r : cohort.records()) {
      if (r.n2_positive) options.labels.emplace(r.patient_id, *r.n2_positive);
    }
    return std::make_shared<MockChatBackend>(std::move(options));
  }
  const LlmConfig llm = cfg_.llm;
  return std::make_shared<LazyBackend>([llm] { return std::make_shared<HttpChatBackend>(llm); });
}

void Pipeline::query() {
  const Cohort cohort = load_run_cohort();
  const auto prompts = read_prompts_jsonl(paths_.prompts);
  auto cache = std::make_shared<ResponseCache>(paths_.llm_cache);
  LlmGateway gateway(cfg_.llm, make_backend(cohort), cache);
  const auto results = gateway.collect_all(prompts);
  std::vector<LlmJudgment> flat;
  for (const auto& per_prompt : results) flat.insert(flat.end(), per_prompt.begin(), per_prompt.end());
  write_judgments_jsonl(flat, paths_.judgments);
  const auto s = gateway.stats();
  counters_.llm_backend_calls += s.backend_calls;
  counters_.llm_cache_hits += s.cache_hits;
  counters_.llm_retries += s.retries;
  counters_.llm_requeries += s.requeries;
  log("query: " + std::to_string(flat.size()) + " judgments (" + std::to_string(s.backend_calls) + " requests, " +
      std::to_string(s.cache_hits) + " cache hits, " + std::to_string(s.fallbacks) + " unparseable)");
}

void Pipeline::ensemble() {
  const Cohort cohort = load_run_cohort();
  const std::string hash = cohort_hash(cohort);
  const auto prompts = read_prompts_jsonl(paths_.prompts);
  const auto judgments = read_judgments_jsonl(paths_.judgments);

  std::map<PromptKey, std::string> prompt_hash;
  for (const auto& p : prompts) prompt_hash[key_of(p)] = p.content_hash;
  std::map<std::pair<std::string, std::string>, std::vector<LlmJudgment>> by_prompt;
  for (const auto& j : judgments) by_prompt[{j.prompt_hash, j.patient_id}].push_back(j);
  for (auto& [_, list] : by_prompt) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.repeat_index < b.repeat_index; });
  }

  std::vector<EnsembledPrediction> rows;
  for (ModelKind kind : cfg_.models) {
    const auto file = load_cv_run_if_matching(paths_.ml_run(kind), hash, kind, cfg_.model_seed());
    if (!file) throw DataError("no nested-CV results for " + std::string(to_string(kind)) + " (run 'train')");
    const auto oof = out_of_fold_probabilities(file->run.folds, cohort.size());
    for (PromptTemplateKind t : cfg_.templates) {
      const std::string model_key = t == PromptTemplateKind::BaselineNoMl ? std::string() : std::string(to_string(kind));
      const std::vector<EnsembleStrategy> strategies =
          t == PromptTemplateKind::Full ? cfg_.strategies : std::vector<EnsembleStrategy>{EnsembleStrategy::Mean};
      for (EnsembleStrategy s : strategies) {
        for (std::size_t i = 0; i < cohort.size(); ++i) {
          const auto& id = cohort[i].patient_id;
          const auto ph = prompt_hash.find({model_key, t, id});
          if (ph == prompt_hash.end()) {
            throw DataError("no " + std::string(to_string(t)) + " prompt for patient " + id + " (run 'prompt')");
          }
          const auto js = by_prompt.find({ph->second, id});
          if (js == by_prompt.end() || js->second.size() != cfg_.llm.repeats) {
            throw DataError("expected " + std::to_string(cfg_.llm.repeats) + " judgments for patient " + id + " (" +
                            std::string(to_string(t)) + "); run 'query'");
          }
          auto p = lnm::ensemble(js->second, oof[i], s, kind);
          p.template_kind = t;
          rows.push_back(std::move(p));
        }
      }
    }
  }
  write_predictions_csv(rows, paths_.predictions);
  log("ensemble: " + std::to_string(rows.size()) + " predictions");
}

EvalReport Pipeline::evaluate() {
  const Cohort cohort = load_run_cohort();
  const std::string hash = cohort_hash(cohort);
  const auto labels = cohort.labels();
  const auto predictions = read_predictions_csv(paths_.predictions);
  const auto prompts = read_prompts_jsonl(paths_.prompts);
  const auto judgments = read_judgments_jsonl(paths_.judgments);

  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < cohort.size(); ++i) index_of[cohort[i].patient_id] = i;

  // (model, template, strategy) -> probabilities in cohort order
  std::map<std::tuple<ModelKind, PromptTemplateKind, EnsembleStrategy>, std::vector<double>> series;
  std::size_t substitutions = 0;
  for (const auto& p : predictions) {
    auto& v = series[{p.model_kind, p.template_kind, p.strategy}];
    if (v.empty()) v.assign(cohort.size(), -1.0);
    const auto it = index_of.find(p.patient_id);
    if (it == index_of.end()) throw DataError("prediction for unknown patient " + p.patient_id);
    v[it->second] = p.final_probability;
    substitutions += p.substitutions;
  }
  auto probabilities = [&](ModelKind m, PromptTemplateKind t, EnsembleStrategy s) -> const std::vector<double>& {
    const auto it = series.find({m, t, s});
    if (it == series.end()) {
      throw DataError("predictions.csv lacks " + std::string(to_string(m)) + "/" + std::string(to_string(t)) + "/" +
                      std::string(to_string(s)) + " (run 'ensemble')");
    }
    if (std::find(it->second.begin(), it->second.end(), -1.0) != it->second.end()) {
      throw InvariantError("predictions.csv misses patients for " + std::string(to_string(m)) + "/" +
                           std::string(to_string(t)));
    }
    return it->second;
  };
  auto wants = [&](PromptTemplateKind t) {
    return std::find(cfg_.templates.begin(), cfg_.templates.end(), t) != cfg_.templates.end();
  };

  EvalReport report;
  nlohmann::json model_meta = nlohmann::json::object();
  std::optional<CvPlan> plan;
  for (ModelKind kind : cfg_.models) {
    const auto file = load_cv_run_if_matching(paths_.ml_run(kind), hash, kind, cfg_.model_seed());
    if (!file) throw DataError("no nested-CV results for " + std::string(to_string(kind)) + " (run 'train')");
    if (plan && !(*plan == file->plan)) throw InvariantError("models were trained on different CV plans");
    plan = file->plan;
    const auto oof = out_of_fold_probabilities(file->run.folds, cohort.size());

    std::vector<VariantMetrics> rows;
    auto add = [&](VariantKind v, std::optional<EnsembleStrategy> s, const std::vector<double>& p) {
      rows.push_back(score_variant(kind, v, s, llm_row_label(cfg_, kind, v, s), p, labels, file->plan));
    };
    if (wants(PromptTemplateKind::BaselineNoMl)) {
      add(VariantKind::LlmAlone, EnsembleStrategy::Mean,
          probabilities(kind, PromptTemplateKind::BaselineNoMl, EnsembleStrategy::Mean));
    }
    add(VariantKind::Ml, std::nullopt, oof);
    const std::size_t ml_row = rows.size() - 1;
    if (wants(PromptTemplateKind::BaselineNoIndependentEstimate)) {
      add(VariantKind::LlmMlNoEstimate, EnsembleStrategy::Mean,
          probabilities(kind, PromptTemplateKind::BaselineNoIndependentEstimate, EnsembleStrategy::Mean));
    }
    for (EnsembleStrategy s : cfg_.strategies) add(VariantKind::Full, s, probabilities(kind, PromptTemplateKind::Full, s));

    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r != ml_row) report.comparisons.push_back(compare(rows[ml_row], rows[r], cfg_.sidedness));
    }
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());

    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : file->run.folds) {
      folds.push_back({{"fold", f.fold_index},
                       {"chosen", describe(f.chosen_hyperparameters)},
                       {"inner_cv_auc", f.inner_cv_auc},
                       {"inner_cv_ap", f.inner_cv_ap}});
    }
    model_meta[std::string(to_string(kind))] = folds;
  }

  // Cache completeness over first-attempt queries.
  const ResponseCache cache(paths_.llm_cache);
  std::size_t missing = 0;
  for (const auto& p : prompts) {
    for (std::size_t r = 0; r < cfg_.llm.repeats; ++r) {
      if (!cache.lookup({p.content_hash, cfg_.llm.model, r, 0})) ++missing;
    }
  }
  std::map<std::string, std::size_t> status_counts{{"clean", 0}, {"repaired", 0}, {"fallback", 0}};
  for (const auto& j : judgments) ++status_counts[std::string(to_string(j.parse_status))];
  std::size_t flagged = 0;
  for (const auto& p : prompts) flagged += contains_label_token(p.text) ? 1 : 0;

  auto config_json = cfg_.to_json();
  config_json.erase("out");
  config_json["cv"].erase("threads");
  config_json["llm"].erase("parallelism");
  report.manifest = {
      {"format", "lnm-run-manifest/1"},
      {"config_hash", cfg_.hash()},
      {"config", config_json},
      {"seeds",
       {{"master", cfg_.seed},
        {"cohort", cfg_.cohort_seed()},
        {"cv_plan", cfg_.plan_seed()},
        {"models", cfg_.model_seed()},
        {"mock", cfg_.mock_seed()}}},
      {"cohort", {{"hash", hash}, {"patients", cohort.size()}, {"positives", cohort.positives()}}},
      {"sd_semantics", "sample SD (n-1) across outer folds"},
      {"prompt_template_version", prompt_template_version()},
      {"prompts", prompts.size()},
      {"llm_cache",
       {{"entries", cache.size()},
        {"first_attempt_missing", missing},
        {"complete", missing == 0}}},
      {"judgments", status_counts},
      {"fallback_substitutions", substitutions},
      {"blinding_audit", {{"prompts_checked", prompts.size()}, {"label_token_hits", flagged}, {"passed", flagged == 0}}},
      {"nested_cv", model_meta}};
  write_text(paths_.evaluation, to_json(report).dump() + "\n");
  log("evaluate: " + std::to_string(report.rows.size()) + " result rows, " + std::to_string(report.comparisons.size()) +
      " comparisons");
  return report;
}

void Pipeline::report() {
  const EvalReport r = eval_report_from_json(read_json(paths_.evaluation, "evaluate"));
  emit_report(r, paths_.report_dir);
  log("report: written to " + paths_.report_dir.string());
}

void Pipeline::write_run_stats() const {
  const nlohmann::json j = {{"model_fits", counters_.model_fits},
                            {"reused_cv_runs", counters_.reused_cv_runs},
                            {"llm_backend_calls", counters_.llm_backend_calls},
                            {"llm_cache_hits", counters_.llm_cache_hits},
                            {"llm_retries", counters_.llm_retries},
                            {"llm_requeries", counters_.llm_requeries}};
  write_text(paths_.run_stats, j.dump(2) + "\n");
}

EvalReport Pipeline::run() {
  synth();
  train();
  prompt();
  query();
  ensemble();
  EvalReport r = evaluate();
  report();
  write_run_stats();
  return r;
}

}  // namespace lnm
