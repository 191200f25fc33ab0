#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lnm/cohort.hpp"
#include "lnm/config.hpp"
#include "lnm/cross_validation.hpp"
#include "lnm/ensemble.hpp"
#include "lnm/llm_gateway.hpp"
#include "lnm/prompting.hpp"
#include "lnm/report.hpp"

namespace lnm {

/// Locations of every intermediate under the output directory.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path cohort;       // cohort.csv
  std::filesystem::path ml_dir;       // ml/<kind>.json
  std::filesystem::path prompts;      // prompts.jsonl
  std::filesystem::path llm_cache;    // llm_cache.jsonl
  std::filesystem::path judgments;    // judgments.jsonl
  std::filesystem::path predictions;  // predictions.csv
  std::filesystem::path evaluation;   // evaluation.json
  std::filesystem::path report_dir;   // report/
  std::filesystem::path run_stats;    // run_stats.json (per-invocation counters)

  explicit RunPaths(const std::filesystem::path& out);
  std::filesystem::path ml_run(ModelKind kind) const;
};

struct StageCounters {
  std::uint64_t model_fits = 0;
  std::uint64_t llm_backend_calls = 0;
  std::uint64_t llm_cache_hits = 0;
  std::uint64_t llm_retries = 0;
  std::uint64_t llm_requeries = 0;
  std::uint64_t reused_cv_runs = 0;
};

using LogSink = std::function<void(std::string_view)>;

/// Runs the experiment stage by stage. Every stage reads its inputs from the
/// output directory and writes its own, so stages can run in separate
/// processes. Reruns reuse matching nested-CV files and cached LLM responses.
class Pipeline {
 public:
  /// `backend` overrides the backend implied by the config (mock or HTTP).
  explicit Pipeline(ExperimentConfig cfg, std::shared_ptr<ChatBackend> backend = nullptr, LogSink log = {});

  void synth();
  void train();
  void prompt();
  void query();
  void ensemble();
  EvalReport evaluate();
  void report();
  /// All stages in order; returns the evaluation.
  EvalReport run();

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const RunPaths& paths() const noexcept { return paths_; }
  const StageCounters& counters() const noexcept { return counters_; }

 private:
  Cohort load_run_cohort() const;
  CvPlan plan_for(const Cohort& cohort) const;
  std::shared_ptr<ChatBackend> make_backend(const Cohort& cohort);
  void write_run_stats() const;
  void log(std::string_view message) const;

  ExperimentConfig cfg_;
  RunPaths paths_;
  std::shared_ptr<ChatBackend> backend_override_;
  LogSink log_;
  StageCounters counters_;
};

}  // namespace lnm
