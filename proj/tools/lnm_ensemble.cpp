// Command-line driver for the LNM ensemble experiment.
//
//   lnm_ensemble <stage> [--config path] [--seed N] [--mock scenario]
//                [--models lr,rf,svm] [--strategies mean,median,min,max]
//                [--templates full,baseline1,baseline2] [--out dir]
//
// Exit codes: 0 success, 1 configuration error, 2 data error,
// 3 transport error, 4 internal invariant violation.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lnm/cohort.hpp"
#include "lnm/config.hpp"
#include "lnm/error.hpp"
#include "lnm/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 1, kData = 2, kTransport = 3, kInvariant = 4 };

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mock;
  std::string models;
  std::string strategies;
  std::string templates;
  std::string out;
  std::optional<unsigned> threads;
  bool quiet = false;
};

lnm::ExperimentConfig resolve_config(const Overrides& o) {
  lnm::ExperimentConfig cfg = o.config_path.empty() ? lnm::ExperimentConfig{} : lnm::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.mock.empty()) {
    if (o.mock == "none") {
      cfg.mock.reset();
    } else {
      lnm::MockSettings s = cfg.mock.value_or(lnm::MockSettings{});
      s.scenario = lnm::parse_mock_scenario(o.mock);
      cfg.mock = s;
    }
  }
  if (!o.models.empty()) cfg.models = lnm::parse_model_list(o.models);
  if (!o.strategies.empty()) cfg.strategies = lnm::parse_strategy_list(o.strategies);
  if (!o.templates.empty()) cfg.templates = lnm::parse_template_list(o.templates);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.threads) cfg.cv_threads = *o.threads;
  cfg.validate();
  return cfg;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const lnm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const lnm::TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kTransport;
  } catch (const lnm::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kInvariant;
  } catch (const lnm::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInvariant;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested-CV machine learning plus LLM ensemble for N2 lymph node metastasis risk"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--mock", o.mock, "Mock LLM scenario: echo, oracle-beta, noisy, malformed-once, or none");
    sub->add_option("--models", o.models, "Comma-separated model kinds (lr,rf,svm)");
    sub->add_option("--strategies", o.strategies, "Comma-separated strategies (max,min,median,mean)");
    sub->add_option("--templates", o.templates, "Comma-separated templates (full,baseline1,baseline2)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "Concurrent outer folds during training (0: all cores)");
    sub->add_flag("--quiet,-q", o.quiet, "Only print errors");
  };

  struct Stage {
    const char* name;
    const char* help;
    std::function<void(lnm::Pipeline&)> action;
  };
  const Stage stages[] = {
      {"synth", "Generate or ingest the cohort", [](lnm::Pipeline& p) { p.synth(); }},
      {"train", "Nested cross-validation for each model", [](lnm::Pipeline& p) { p.train(); }},
      {"prompt", "Render prompts for every patient and template", [](lnm::Pipeline& p) { p.prompt(); }},
      {"query", "Collect repeated LLM judgments (cached)", [](lnm::Pipeline& p) { p.query(); }},
      {"ensemble", "Aggregate repeats into final predictions", [](lnm::Pipeline& p) { p.ensemble(); }},
      {"evaluate", "Per-fold metrics and paired t-tests", [](lnm::Pipeline& p) { p.evaluate(); }},
      {"report", "Write result tables, curves and the run manifest", [](lnm::Pipeline& p) { p.report(); }},
      {"run", "All stages in order", [](lnm::Pipeline& p) { p.run(); }},
  };
  std::function<void(lnm::Pipeline&)> chosen;
  for (const auto& stage : stages) {
    auto* sub = app.add_subcommand(stage.name, stage.help);
    add_common(sub);
    sub->callback([&chosen, &stage] { chosen = stage.action; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  return guarded([&] {
    const auto cfg = resolve_config(o);
    lnm::LogSink sink;
    if (!o.quiet) sink = [](std::string_view m) { std::cerr << m << '\n'; };
    lnm::Pipeline pipeline(cfg, nullptr, sink);
    chosen(pipeline);
  });
}
