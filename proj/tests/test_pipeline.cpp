#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lnm/config.hpp"
#include "lnm/cross_validation.hpp"
#include "lnm/ensemble.hpp"
#include "lnm/error.hpp"
#include "lnm/pipeline.hpp"
#include "lnm/report.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lnm_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

lnm::ExperimentConfig small_config(const fs::path& out) {
  lnm::ExperimentConfig cfg;
  cfg.cohort.size = 200;
  cfg.models = {lnm::ModelKind::LR};
  cfg.mock = lnm::MockSettings{};
  cfg.out = out;
  cfg.seed = 31;
  cfg.cv_threads = 1;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Relative path -> contents for every regular file below `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

const lnm::LogSink kQuiet = [](std::string_view) {};

int cli(const std::string& args) {
  const std::string cmd = std::string(LNM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config(const lnm::ExperimentConfig& cfg, const fs::path& path) {
  std::ofstream(path) << cfg.to_json().dump(2);
}

// One shared echo run; several tests inspect it.
struct EchoRun {
  fs::path dir;
  lnm::EvalReport report;
};

const EchoRun& echo_run() {
  static const EchoRun run = [] {
    EchoRun r;
    r.dir = scratch("echo_a");
    lnm::Pipeline p(small_config(r.dir), nullptr, kQuiet);
    r.report = p.run();
    return r;
  }();
  return run;
}

TEST(Pipeline, EchoMockReproducesTheModelExactly) {
  const auto& run = echo_run();
  const auto file = lnm::load_cv_run(lnm::RunPaths(run.dir).ml_run(lnm::ModelKind::LR));
  const auto oof = lnm::out_of_fold_probabilities(file.run.folds, 200);

  const auto rows = lnm::read_predictions_csv(lnm::RunPaths(run.dir).predictions);
  std::size_t full_rows = 0;
  for (const auto& r : rows) {
    if (r.template_kind != lnm::PromptTemplateKind::Full) continue;
    ++full_rows;
  }
  EXPECT_EQ(full_rows, 200u * 4u);

  // Map patient id -> cohort order via the plan-independent cohort file.
  const auto cohort = lnm::load_cohort(lnm::RunPaths(run.dir).cohort);
  for (const auto& r : rows) {
    if (r.template_kind == lnm::PromptTemplateKind::BaselineNoMl) continue;
    const auto i = *cohort.find(r.patient_id);
    ASSERT_EQ(r.final_probability, oof[i]) << r.patient_id << " " << lnm::to_string(r.strategy);
  }

  const lnm::VariantMetrics* ml = nullptr;
  for (const auto& row : run.report.rows) {
    if (row.variant == lnm::VariantKind::Ml) ml = &row;
  }
  ASSERT_NE(ml, nullptr);
  for (const auto& row : run.report.rows) {
    EXPECT_EQ(row.fold_auc, ml->fold_auc) << row.label;
    EXPECT_EQ(row.fold_ap, ml->fold_ap) << row.label;
  }
  ASSERT_FALSE(run.report.comparisons.empty());
  for (const auto& c : run.report.comparisons) {
    EXPECT_EQ(c.auc_diff, 0.0);
    EXPECT_EQ(c.auc_test.p_value, 1.0);
    EXPECT_EQ(c.ap_test.p_value, 1.0);
  }
}

TEST(Pipeline, ManifestRecordsProvenanceAndBlinding) {
  const auto& m = echo_run().report.manifest;
  EXPECT_EQ(m["config_hash"], small_config("").hash());
  EXPECT_TRUE(m["blinding_audit"]["passed"].get<bool>());
  EXPECT_EQ(m["blinding_audit"]["label_token_hits"], 0);
  EXPECT_TRUE(m["llm_cache"]["complete"].get<bool>());
  EXPECT_EQ(m["cohort"]["patients"], 200);
  EXPECT_EQ(m["prompts"], 600);
  ASSERT_TRUE(m.contains("nested_cv"));

  const fs::path report = lnm::RunPaths(echo_run().dir).report_dir;
  for (const char* f : {"results.csv", "results.md", "fold_metrics.csv", "comparisons.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(report / f)) << f;
  }
  EXPECT_TRUE(fs::exists(report / "curves" / "lr_full_mean_roc.csv"));
}

TEST(Pipeline, RerunInFreshDirectoryIsByteIdentical) {
  const auto& a = echo_run();
  const auto b = scratch("echo_b");
  lnm::Pipeline p(small_config(b), nullptr, kQuiet);
  p.run();
  const lnm::RunPaths pa(a.dir), pb(b);
  EXPECT_EQ(tree(pa.report_dir), tree(pb.report_dir));
  for (auto member : {&lnm::RunPaths::cohort, &lnm::RunPaths::prompts, &lnm::RunPaths::judgments,
                      &lnm::RunPaths::predictions, &lnm::RunPaths::evaluation}) {
    EXPECT_EQ(slurp(pa.*member), slurp(pb.*member)) << (pa.*member).filename();
  }
}

TEST(Pipeline, ResumeReusesModelsAndCachedResponses) {
  const auto dir = scratch("resume");
  const auto cfg = small_config(dir);
  {
    lnm::Pipeline first(cfg, nullptr, kQuiet);
    first.run();
    EXPECT_GT(first.counters().model_fits, 0u);
    EXPECT_GT(first.counters().llm_backend_calls, 0u);
  }
  auto before = tree(lnm::RunPaths(dir).report_dir);

  // Real-endpoint config with no credential: a cache miss would be a ConfigError.
  auto offline = cfg;
  offline.mock.reset();
  offline.llm.api_key_env = "LNM_TEST_DEFINITELY_UNSET";
  ::unsetenv("LNM_TEST_DEFINITELY_UNSET");
  lnm::Pipeline again(offline, nullptr, kQuiet);
  again.run();
  EXPECT_EQ(again.counters().model_fits, 0u);
  EXPECT_EQ(again.counters().reused_cv_runs, 1u);
  EXPECT_EQ(again.counters().llm_backend_calls, 0u);
  // Three templates x three repeats, plus one re-query per baseline-I repeat:
  // echo has no model result to quote there, so every first answer falls back.
  EXPECT_EQ(again.counters().llm_cache_hits, 200u * 3u * 3u + 200u * 3u);

  auto after = tree(lnm::RunPaths(dir).report_dir);
  // The manifest embeds the config hash, which differs for the offline config.
  before.erase("manifest.json");
  after.erase("manifest.json");
  EXPECT_EQ(after, before);

  const auto stats = nlohmann::json::parse(slurp(lnm::RunPaths(dir).run_stats));
  EXPECT_EQ(stats["model_fits"], 0);
  EXPECT_EQ(stats["llm_backend_calls"], 0);
}

TEST(Pipeline, StagesFailCleanlyWithoutTheirInputs) {
  const auto dir = scratch("missing_inputs");
  lnm::Pipeline p(small_config(dir), nullptr, kQuiet);
  EXPECT_THROW(p.train(), lnm::DataError);
  p.synth();
  EXPECT_THROW(p.prompt(), lnm::DataError);
  EXPECT_THROW(p.report(), lnm::DataError);
}

// -------------------------------------------------------------------- CLI

TEST(Cli, StageByStageMatchesInProcessRun) {
  const auto dir = scratch("cli_stages");
  write_config(small_config(dir / "out"), dir / "cfg.json");
  for (const char* stage : {"synth", "train", "prompt", "query", "ensemble", "evaluate", "report"}) {
    ASSERT_EQ(cli(std::string(stage) + " --config " + (dir / "cfg.json").string()), 0) << stage;
  }
  auto ours = tree(lnm::RunPaths(dir / "out").report_dir);
  auto reference = tree(lnm::RunPaths(echo_run().dir).report_dir);
  ours.erase("manifest.json");  // out path differs, and so does nothing else
  reference.erase("manifest.json");
  EXPECT_EQ(ours, reference);
}

TEST(Cli, ExitCodesFollowTheErrorKind) {
  const auto dir = scratch("cli_codes");
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli("run --config " + (dir / "absent.json").string()), 1);
  EXPECT_EQ(cli("run --models lr,knn --out " + dir.string()), 1);
  EXPECT_EQ(cli("frobnicate"), 1);

  // Data error: a cohort file that does not parse.
  std::ofstream(dir / "broken.csv") << "patient_id,age\nP1,abc\n";
  auto file_cfg = small_config(dir / "data_out");
  file_cfg.cohort.kind = lnm::CohortSource::Kind::File;
  file_cfg.cohort.path = dir / "broken.csv";
  write_config(file_cfg, dir / "data.json");
  EXPECT_EQ(cli("synth --config " + (dir / "data.json").string()), 2);

  // Transport error: real backend pointed at a closed local port.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  ::close(fd);
  ::setenv("LNM_TEST_API_KEY", "sk-test", 1);
  auto net_cfg = small_config(dir / "net_out");
  net_cfg.cohort.size = 60;
  net_cfg.cv = {3, 2};
  net_cfg.mock.reset();
  net_cfg.llm.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  net_cfg.llm.api_key_env = "LNM_TEST_API_KEY";
  net_cfg.llm.retry_budget = 0;
  net_cfg.llm.timeout_seconds = 2;
  write_config(net_cfg, dir / "net.json");
  EXPECT_EQ(cli("run --config " + (dir / "net.json").string()), 3);

  // Invariant violation: predictions that no longer cover the cohort.
  auto inv_cfg = small_config(dir / "inv_out");
  inv_cfg.cohort.size = 60;
  inv_cfg.cv = {3, 2};
  write_config(inv_cfg, dir / "inv.json");
  ASSERT_EQ(cli("run --config " + (dir / "inv.json").string()), 0);
  const fs::path preds = lnm::RunPaths(dir / "inv_out").predictions;
  std::string text = slurp(preds);
  text.erase(text.rfind('\n', text.size() - 2) + 1);  // drop the last row
  std::ofstream(preds, std::ios::binary | std::ios::trunc) << text;
  EXPECT_EQ(cli("evaluate --config " + (dir / "inv.json").string()), 4);
}

TEST(Cli, OverridesReachTheConfig) {
  const auto dir = scratch("cli_override");
  auto cfg = small_config(dir / "ignored");
  cfg.cohort.size = 60;
  cfg.cv = {3, 2};
  write_config(cfg, dir / "cfg.json");
  ASSERT_EQ(cli("run --config " + (dir / "cfg.json").string() + " --strategies max --templates full --seed 8 --out " +
                (dir / "out").string()),
            0);
  const auto results = slurp(dir / "out" / "report" / "results.csv");
  EXPECT_NE(results.find("max"), std::string::npos);
  EXPECT_EQ(results.find("median"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "ignored"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "report" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["seed"], 8);
}

}  // namespace
