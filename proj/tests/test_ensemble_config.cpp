#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "lnm/config.hpp"
#include "lnm/ensemble.hpp"
#include "lnm/error.hpp"

namespace fs = std::filesystem;

namespace {

using lnm::EnsembleStrategy;

double reference_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : (v[k / 2 - 1] + v[k / 2]) / 2.0;
}

TEST(Ensemble, AggregatesAgreeWithReferenceDefinitions) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 9);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) x = trial % 5 == 0 ? std::round(u(rng) * 4) / 4 : u(rng);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());

    EXPECT_EQ(lnm::aggregate(v, EnsembleStrategy::Max), *hi);
    EXPECT_EQ(lnm::aggregate(v, EnsembleStrategy::Min), *lo);
    EXPECT_NEAR(lnm::aggregate(v, EnsembleStrategy::Median), reference_median(v), 1e-15);
    EXPECT_NEAR(lnm::aggregate(v, EnsembleStrategy::Mean), mean, 1e-12);

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto s : lnm::kAllStrategies) {
      const double a = lnm::aggregate(v, s);
      EXPECT_GE(a, *lo);
      EXPECT_LE(a, *hi);
      EXPECT_NEAR(lnm::aggregate(shuffled, s), a, 1e-15);
    }
  }
}

TEST(Ensemble, IdenticalInputsAreReturnedExactly) {
  std::mt19937_64 rng(405);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = u(rng);
    const std::vector<double> v(static_cast<std::size_t>(1 + trial % 7), x);
    for (auto s : lnm::kAllStrategies) ASSERT_EQ(lnm::aggregate(v, s), x);
  }
}

TEST(Ensemble, RejectsEmptyAndOutOfRangeInputs) {
  EXPECT_THROW(lnm::aggregate({}, EnsembleStrategy::Mean), lnm::DataError);
  const std::vector<double> bad{0.2, 1.5};
  EXPECT_THROW(lnm::aggregate(bad, EnsembleStrategy::Max), lnm::DataError);
  const std::vector<double> nan{std::nan("")};
  EXPECT_THROW(lnm::aggregate(nan, EnsembleStrategy::Min), lnm::DataError);
  EXPECT_EQ(lnm::parse_strategy("median"), EnsembleStrategy::Median);
  EXPECT_THROW(lnm::parse_strategy("vote"), lnm::ConfigError);
}

lnm::LlmJudgment judgment(std::optional<double> answer, std::size_t repeat) {
  lnm::LlmJudgment j;
  j.patient_id = "P1";
  j.repeat_index = repeat;
  j.answer = answer;
  j.parse_status = answer ? lnm::ParseStatus::Clean : lnm::ParseStatus::Fallback;
  return j;
}

TEST(Ensemble, FallbackJudgmentsUseTheModelProbability) {
  const std::vector<lnm::LlmJudgment> js{judgment(0.2, 0), judgment(std::nullopt, 1), judgment(0.8, 2)};
  const auto resolved = lnm::resolve_inputs(js, 0.5);
  EXPECT_EQ(resolved.values, (std::vector<double>{0.2, 0.5, 0.8}));
  EXPECT_EQ(resolved.substitutions, 1u);

  const auto p = lnm::ensemble(js, 0.5, EnsembleStrategy::Max, lnm::ModelKind::SVM);
  EXPECT_EQ(p.final_probability, 0.8);
  EXPECT_EQ(p.substitutions, 1u);
  EXPECT_EQ(p.patient_id, "P1");
  EXPECT_EQ(p.model_kind, lnm::ModelKind::SVM);
}

TEST(Ensemble, PredictionsCsvRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "lnm_test_predictions";
  fs::create_directories(dir);
  std::vector<lnm::EnsembledPrediction> rows;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    std::vector<lnm::LlmJudgment> js{judgment(u(rng), 0), judgment(u(rng), 1), judgment(u(rng), 2)};
    rows.push_back(lnm::ensemble(js, u(rng), lnm::kAllStrategies[static_cast<std::size_t>(i % 4)],
                                 lnm::ModelKind::RF));
    rows.back().patient_id = "P" + std::to_string(i);
  }
  lnm::write_predictions_csv(rows, dir / "p.csv");
  EXPECT_EQ(lnm::read_predictions_csv(dir / "p.csv"), rows);
}

// ------------------------------------------------------------------ config

TEST(Config, JsonRoundTripAndValidation) {
  lnm::ExperimentConfig cfg;
  cfg.models = {lnm::ModelKind::RF};
  cfg.mock = lnm::MockSettings{lnm::MockScenario::OracleBeta, 0.1, 6.0, 0.12};
  cfg.seed = 99;
  cfg.llm.repeats = 5;
  const auto back = lnm::ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());

  auto j = cfg.to_json();
  j["modles"] = {"lr"};
  EXPECT_THROW(lnm::ExperimentConfig::from_json(j), lnm::ConfigError);

  auto no_full = cfg;
  no_full.templates = {lnm::PromptTemplateKind::BaselineNoMl};
  EXPECT_THROW(no_full.validate(), lnm::ConfigError);
  auto no_models = cfg;
  no_models.models.clear();
  EXPECT_THROW(no_models.validate(), lnm::ConfigError);
}

TEST(Config, HashIgnoresOutputLocationAndThreads) {
  lnm::ExperimentConfig a;
  auto b = a;
  b.out = "/somewhere/else";
  b.cv_threads = 7;
  b.llm.parallelism = 16;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed += 1;
  EXPECT_NE(a.hash(), b.hash());
  auto c = a;
  c.llm.temperature = 0.2;
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, DerivedSeedsAreDistinctAndOverridable) {
  lnm::ExperimentConfig cfg;
  const std::vector<std::uint64_t> seeds{cfg.cohort_seed(), cfg.plan_seed(), cfg.model_seed(), cfg.mock_seed()};
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t k = i + 1; k < seeds.size(); ++k) EXPECT_NE(seeds[i], seeds[k]);
  cfg.cohort.seed = 12345;
  EXPECT_EQ(cfg.cohort_seed(), 12345u);
}

TEST(Config, FileLoadingResolvesRelativePathsAndAllowsComments) {
  const fs::path dir = fs::temp_directory_path() / "lnm_test_config";
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({
    // comments are fine
    "seed": 5,
    "out": "results",
    "cohort": {"source": "file", "path": "data/cohort.csv", "mode": "lenient"},
    "models": ["lr", "svm"],
    "strategies": ["mean"]
  })";
  const auto cfg = lnm::load_config(dir / "c.json");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.out, dir / "results");
  EXPECT_EQ(cfg.cohort.kind, lnm::CohortSource::Kind::File);
  EXPECT_EQ(cfg.cohort.path, dir / "data/cohort.csv");
  EXPECT_EQ(cfg.cohort.mode, lnm::LoadMode::Lenient);
  EXPECT_EQ(cfg.models, (std::vector{lnm::ModelKind::LR, lnm::ModelKind::SVM}));

  std::ofstream(dir / "bad.json") << "{ \"seed\": ";
  EXPECT_THROW(lnm::load_config(dir / "bad.json"), lnm::ConfigError);
  EXPECT_THROW(lnm::load_config(dir / "missing.json"), lnm::ConfigError);
}

TEST(Config, ShippedExampleConfigLoads) {
  const auto cfg = lnm::load_config(fs::path(LNM_CONFIG_DIR) / "example_experiment.json");
  EXPECT_NO_THROW(cfg.validate());
  ASSERT_TRUE(cfg.mock.has_value());
  EXPECT_EQ(cfg.mock->scenario, lnm::MockScenario::OracleBeta);
}

TEST(Config, ListParsers) {
  EXPECT_EQ(lnm::parse_model_list("rf, lr"), (std::vector{lnm::ModelKind::RF, lnm::ModelKind::LR}));
  EXPECT_THROW(lnm::parse_model_list("lr,lr"), lnm::ConfigError);
  EXPECT_THROW(lnm::parse_model_list("lr,knn"), lnm::ConfigError);
  EXPECT_EQ(lnm::parse_strategy_list("mean,max").size(), 2u);
  EXPECT_EQ(lnm::parse_template_list("full,baseline2"),
            (std::vector{lnm::PromptTemplateKind::Full, lnm::PromptTemplateKind::BaselineNoIndependentEstimate}));
  EXPECT_THROW(lnm::parse_template_list(""), lnm::ConfigError);
}

}  // namespace
