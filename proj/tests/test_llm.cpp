#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "lnm/error.hpp"
#include "lnm/judgment.hpp"
#include "lnm/llm_gateway.hpp"
#include "lnm/mock_llm.hpp"
#include "lnm/synthesis.hpp"

// After the project headers: httplib pulls in system headers that upset Eigen
// when they come first.
#include <httplib.h>

namespace fs = std::filesystem;

namespace {

using lnm::ParseStatus;

std::vector<lnm::RenderedPrompt> sample_prompts(std::size_t n, lnm::PromptTemplateKind kind = lnm::PromptTemplateKind::Full) {
  const auto cohort = lnm::synthesize_cohort(lnm::default_marginal_spec(), std::max<std::size_t>(n, 10), 61);
  std::vector<lnm::RenderedPrompt> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<lnm::MlContext> ml;
    if (lnm::requires_ml(kind)) ml = lnm::MlContext{lnm::ModelKind::RF, 0.05 + 0.9 * i / n, 0.8, 0.5, 0.14};
    out.push_back(lnm::build_prompt(cohort[i], kind, ml));
  }
  return out;
}

lnm::LlmConfig quick_config() {
  lnm::LlmConfig cfg;
  cfg.parallelism = 1;
  return cfg;
}

struct SleepLog {
  std::shared_ptr<std::vector<double>> waits = std::make_shared<std::vector<double>>();
  lnm::Sleeper sleeper() {
    auto w = waits;
    return [w](std::chrono::duration<double> d) { w->push_back(d.count()); };
  }
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lnm_test_llm_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --------------------------------------------------------------- judgment

TEST(Judgment, CleanJsonInsideFencesAndProse) {
  const auto j = lnm::parse_judgment(
      "Here is my answer.\n```json\n{\"Step By Step Explanation\": \"Large nodule, {braces} inside\", "
      "\"Answer\": 0.35}\n```\nThanks",
      "P1", 2);
  EXPECT_EQ(j.parse_status, ParseStatus::Clean);
  EXPECT_EQ(j.answer, std::optional(0.35));
  EXPECT_EQ(j.explanation, "Large nodule, {braces} inside");
  EXPECT_EQ(j.repeat_index, 2u);
  EXPECT_EQ(j.patient_id, "P1");
}

TEST(Judgment, NumericStringsAndPercentages) {
  EXPECT_EQ(lnm::parse_judgment(R"({"Answer": "0.2"})", "p", 0).answer, std::optional(0.2));
  const auto pct = lnm::parse_judgment(R"({"Answer": "45%"})", "p", 0);
  EXPECT_EQ(pct.parse_status, ParseStatus::Repaired);
  EXPECT_NEAR(*pct.answer, 0.45, 1e-15);
  const auto big = lnm::parse_judgment(R"({"answer": 70})", "p", 0);
  EXPECT_NEAR(*big.answer, 0.7, 1e-15);
  EXPECT_EQ(big.parse_status, ParseStatus::Repaired);
}

TEST(Judgment, OutOfRangeIsClampedAndGarbageFallsBack) {
  const auto neg = lnm::parse_judgment(R"({"Answer": -0.1})", "p", 0);
  EXPECT_EQ(neg.parse_status, ParseStatus::Repaired);
  EXPECT_EQ(neg.answer, std::optional(0.0));
  const auto huge = lnm::parse_judgment(R"({"Answer": 250})", "p", 0);
  EXPECT_EQ(huge.answer, std::optional(1.0));

  for (const char* raw : {"I cannot estimate this.", R"({"Answer": "high"})", R"({"Explanation": "x"})", ""}) {
    const auto j = lnm::parse_judgment(raw, "p", 0);
    EXPECT_EQ(j.parse_status, ParseStatus::Fallback) << raw;
    EXPECT_FALSE(j.answer.has_value());
    EXPECT_FALSE(j.diagnostic.empty());
  }
}

TEST(Judgment, BrokenJsonIsRepairedFromTheAnswerPattern) {
  const auto j = lnm::parse_judgment("{\"Step By Step Explanation\": \"unterminated, \"Answer\": 0.62", "p", 1);
  EXPECT_EQ(j.parse_status, ParseStatus::Repaired);
  EXPECT_EQ(j.answer, std::optional(0.62));
}

TEST(Judgment, JsonRoundTrip) {
  auto j = lnm::parse_judgment(R"({"Step By Step Explanation":"a","Answer":0.5})", "P9", 1);
  j.prompt_hash = "abc";
  j.template_kind = lnm::PromptTemplateKind::BaselineNoMl;
  j.attempts = 2;
  EXPECT_EQ(lnm::judgment_from_json(lnm::to_json(j)), j);
  const auto fb = lnm::parse_judgment("nope", "P9", 0);
  EXPECT_EQ(lnm::judgment_from_json(lnm::to_json(fb)), fb);
}

// ------------------------------------------------------------------- mock

TEST(Mock, EchoReturnsTheQuotedProbabilityExactly) {
  const auto prompts = sample_prompts(5);
  lnm::MockOptions opt;
  for (const auto& p : prompts) {
    const auto j = lnm::parse_judgment(lnm::mock_judge(p, opt, 0), p.patient_id, 0);
    ASSERT_EQ(j.parse_status, ParseStatus::Clean);
    EXPECT_EQ(*j.answer, p.ml_context->probability);
  }
  const auto b1 = sample_prompts(1, lnm::PromptTemplateKind::BaselineNoMl);
  EXPECT_EQ(lnm::parse_judgment(lnm::mock_judge(b1[0], opt, 0), "x", 0).parse_status, ParseStatus::Fallback);
}

TEST(Mock, ScenariosAreDeterministicPerKey) {
  const auto prompts = sample_prompts(4);
  for (auto scenario : {lnm::MockScenario::OracleBeta, lnm::MockScenario::Noisy}) {
    lnm::MockOptions opt;
    opt.scenario = scenario;
    opt.seed = 5;
    for (const auto& p : prompts) opt.labels[p.patient_id] = true;
    for (const auto& p : prompts) {
      EXPECT_EQ(lnm::mock_judge(p, opt, 1), lnm::mock_judge(p, opt, 1));
      EXPECT_NE(lnm::mock_judge(p, opt, 0), lnm::mock_judge(p, opt, 1));
      const auto j = lnm::parse_judgment(lnm::mock_judge(p, opt, 2), p.patient_id, 2);
      ASSERT_TRUE(j.answer.has_value());
      EXPECT_GE(*j.answer, 0.0);
      EXPECT_LE(*j.answer, 1.0);
    }
    auto other = opt;
    other.seed = 6;
    EXPECT_NE(lnm::mock_judge(prompts[0], opt, 0), lnm::mock_judge(prompts[0], other, 0));
  }
  EXPECT_EQ(lnm::parse_mock_scenario("malformed-once"), lnm::MockScenario::MalformedOnce);
  EXPECT_THROW(lnm::parse_mock_scenario("chaos"), lnm::ConfigError);
}

TEST(Mock, OracleBetaLeansTowardsTheLabel) {
  const auto prompts = sample_prompts(60);
  lnm::MockOptions pos, neg;
  pos.scenario = neg.scenario = lnm::MockScenario::OracleBeta;
  pos.knowledge_strength = neg.knowledge_strength = 0.5;
  for (const auto& p : prompts) {
    pos.labels[p.patient_id] = true;
    neg.labels[p.patient_id] = false;
  }
  double sp = 0, sn = 0;
  for (const auto& p : prompts) {
    for (std::size_t r = 0; r < 3; ++r) {
      sp += *lnm::parse_judgment(lnm::mock_judge(p, pos, r), "", r).answer;
      sn += *lnm::parse_judgment(lnm::mock_judge(p, neg, r), "", r).answer;
    }
  }
  EXPECT_GT(sp - sn, 0.2 * 180);
}

// ---------------------------------------------------------------- gateway

TEST(Gateway, RetriesRateLimitWithExponentialBackoff) {
  auto backend = std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{});
  backend->inject_status(429, 2);
  SleepLog log;
  lnm::LlmGateway gw(quick_config(), backend, nullptr, log.sleeper());
  const auto p = sample_prompts(1)[0];
  const auto text = gw.complete(p, 0);
  EXPECT_EQ(lnm::parse_judgment(text, "", 0).answer, std::optional(p.ml_context->probability));
  EXPECT_EQ(backend->calls(), 3u);
  EXPECT_EQ(gw.stats().retries, 2u);
  EXPECT_EQ(*log.waits, (std::vector<double>{0.5, 1.0}));
}

TEST(Gateway, ExhaustedRetriesAndHardFailuresRaiseTransportError) {
  const auto p = sample_prompts(1)[0];
  {
    auto backend = std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{});
    backend->inject_status(503, 10);
    SleepLog log;
    lnm::LlmGateway gw(quick_config(), backend, nullptr, log.sleeper());
    try {
      gw.complete(p, 1);
      FAIL() << "expected TransportError";
    } catch (const lnm::TransportError& e) {
      EXPECT_EQ(e.patient_id(), p.patient_id);
      EXPECT_EQ(e.repeat_index(), 1);
    }
    EXPECT_EQ(backend->calls(), 5u);  // first try plus the retry budget of 4
  }
  {
    auto backend = std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{});
    backend->inject_status(401, 1);
    SleepLog log;
    lnm::LlmGateway gw(quick_config(), backend, nullptr, log.sleeper());
    EXPECT_THROW(gw.complete(p, 0), lnm::TransportError);
    EXPECT_EQ(backend->calls(), 1u);
    EXPECT_TRUE(log.waits->empty());
  }
  {
    auto backend = std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{});
    backend->inject_disconnect(1);
    SleepLog log;
    lnm::LlmGateway gw(quick_config(), backend, nullptr, log.sleeper());
    EXPECT_NO_THROW(gw.complete(p, 0));
    EXPECT_EQ(gw.stats().retries, 1u);
  }
}

TEST(Gateway, CacheServesRepeatsWithoutBackendCalls) {
  const auto dir = scratch("cache");
  const auto prompts = sample_prompts(6);
  std::vector<std::vector<lnm::LlmJudgment>> first;
  {
    auto backend = std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{});
    auto cache = std::make_shared<lnm::ResponseCache>(dir / "cache.jsonl");
    lnm::LlmGateway gw(quick_config(), backend, cache);
    first = gw.collect_all(prompts);
    EXPECT_EQ(backend->calls(), 18u);
    EXPECT_EQ(cache->size(), 18u);
  }
  auto cache = std::make_shared<lnm::ResponseCache>(dir / "cache.jsonl");
  EXPECT_EQ(cache->size(), 18u);
  // No backend at all: every answer must come from the file.
  auto cfg = quick_config();
  cfg.parallelism = 3;
  lnm::LlmGateway gw(cfg, nullptr, cache);
  const auto second = gw.collect_all(prompts);
  EXPECT_EQ(second, first);
  EXPECT_EQ(gw.stats().cache_hits, 18u);
  EXPECT_EQ(gw.stats().backend_calls, 0u);

  const auto entries = cache->entries();
  EXPECT_EQ(entries.front().request["model"], cfg.model);
  EXPECT_FALSE(entries.front().timestamp.empty());

  // A different model is a different key.
  cfg.model = "other-model";
  lnm::LlmGateway other(cfg, nullptr, cache);
  EXPECT_THROW(other.complete(prompts[0], 0), lnm::TransportError);
}

TEST(Gateway, TornCacheTailIsIgnored) {
  const auto dir = scratch("torn");
  const auto prompts = sample_prompts(2);
  {
    auto cache = std::make_shared<lnm::ResponseCache>(dir / "c.jsonl");
    lnm::LlmGateway gw(quick_config(), std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{}), cache);
    gw.collect_all(prompts);
  }
  std::ofstream(dir / "c.jsonl", std::ios::app) << "{\"content_hash\": \"abc";
  lnm::ResponseCache reopened(dir / "c.jsonl");
  EXPECT_EQ(reopened.size(), 6u);
}

TEST(Gateway, MalformedFirstAnswerIsRequeriedOnce) {
  const auto prompts = sample_prompts(3);
  lnm::MockOptions opt;
  opt.scenario = lnm::MockScenario::MalformedOnce;
  auto backend = std::make_shared<lnm::MockChatBackend>(opt);
  auto cache = std::make_shared<lnm::ResponseCache>();
  lnm::LlmGateway gw(quick_config(), backend, cache);
  const auto all = gw.collect_all(prompts);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    ASSERT_EQ(all[i].size(), 3u);
    // Repeat 0 is prose on both attempts, so it stays a fallback after one re-query.
    EXPECT_EQ(all[i][0].parse_status, ParseStatus::Fallback);
    EXPECT_EQ(all[i][0].attempts, 2);
    EXPECT_EQ(all[i][1].parse_status, ParseStatus::Clean);
    EXPECT_EQ(all[i][1].attempts, 1);
    EXPECT_EQ(all[i][2].prompt_hash, prompts[i].content_hash);
  }
  EXPECT_EQ(gw.stats().requeries, 3u);
  EXPECT_EQ(gw.stats().fallbacks, 3u);
  EXPECT_EQ(backend->calls(), 12u);
  EXPECT_EQ(cache->size(), 12u);
}

TEST(Gateway, JudgmentsJsonlRoundTrip) {
  const auto dir = scratch("judgments");
  lnm::LlmGateway gw(quick_config(), std::make_shared<lnm::MockChatBackend>(lnm::MockOptions{}), nullptr);
  std::vector<lnm::LlmJudgment> flat;
  for (auto& v : gw.collect_all(sample_prompts(3))) flat.insert(flat.end(), v.begin(), v.end());
  lnm::write_judgments_jsonl(flat, dir / "j.jsonl");
  EXPECT_EQ(lnm::read_judgments_jsonl(dir / "j.jsonl"), flat);
}

TEST(Gateway, ConfigValidationAndRequestBody) {
  lnm::LlmConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const auto back = lnm::LlmConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_THROW(lnm::LlmConfig::from_json({{"temprature", 0.5}}), lnm::ConfigError);
  cfg.repeats = 0;
  EXPECT_THROW(cfg.validate(), lnm::ConfigError);

  const auto p = sample_prompts(1)[0];
  const auto body = lnm::chat_request_body(p, lnm::LlmConfig{});
  EXPECT_EQ(body["model"], "gpt-4o-2024-05-13");
  EXPECT_EQ(body["temperature"], 1.0);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], p.text);
  EXPECT_EQ(lnm::extract_message_content(lnm::chat_response_body("hi", "m")), "hi");
  EXPECT_THROW(lnm::extract_message_content("{\"error\": 1}"), lnm::TransportError);
}

// -------------------------------------------------------------- transport

TEST(HttpBackend, SendsBearerTokenAndParsesResponse) {
  const auto prompt = sample_prompts(1)[0];
  httplib::Server server;
  std::string seen_auth, seen_model;
  int hits = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    if (hits == 1) {
      res.status = 429;
      res.set_content("{\"error\":\"slow down\"}", "application/json");
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_model = nlohmann::json::parse(req.body)["model"];
    res.set_content(lnm::chat_response_body(R"({"Answer": 0.25})", seen_model), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("LNM_TEST_API_KEY", "sk-test-123", 1);
  lnm::LlmConfig cfg = quick_config();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key_env = "LNM_TEST_API_KEY";
  cfg.timeout_seconds = 5;
  SleepLog log;
  lnm::LlmGateway gw(cfg, std::make_shared<lnm::HttpChatBackend>(cfg), nullptr, log.sleeper());
  const auto judgments = gw.collect_judgments(prompt);
  server.stop();
  runner.join();

  EXPECT_EQ(seen_auth, "Bearer sk-test-123");
  EXPECT_EQ(seen_model, cfg.model);
  ASSERT_EQ(judgments.size(), 3u);
  EXPECT_EQ(judgments[0].answer, std::optional(0.25));
  EXPECT_EQ(hits, 4);
  EXPECT_EQ(gw.stats().retries, 1u);
}

TEST(HttpBackend, MissingCredentialOrBadUrlIsAConfigError) {
  lnm::LlmConfig cfg;
  cfg.api_key_env = "LNM_TEST_UNSET_KEY_VARIABLE";
  ::unsetenv("LNM_TEST_UNSET_KEY_VARIABLE");
  EXPECT_THROW(lnm::HttpChatBackend{cfg}, lnm::ConfigError);
  ::setenv("LNM_TEST_API_KEY", "k", 1);
  cfg.api_key_env = "LNM_TEST_API_KEY";
  cfg.endpoint = "ftp:/nowhere";
  EXPECT_THROW(lnm::HttpChatBackend{cfg}, lnm::ConfigError);
}

TEST(HttpBackend, RefusedConnectionIsATransportError) {
  // Bind an ephemeral port, then release it so nothing is listening there.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  ::close(fd);
  ::setenv("LNM_TEST_API_KEY", "k", 1);
  lnm::LlmConfig cfg = quick_config();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key_env = "LNM_TEST_API_KEY";
  cfg.retry_budget = 1;
  SleepLog log;
  lnm::LlmGateway gw(cfg, std::make_shared<lnm::HttpChatBackend>(cfg), nullptr, log.sleeper());
  EXPECT_THROW(gw.complete(sample_prompts(1)[0], 0), lnm::TransportError);
  EXPECT_EQ(log.waits->size(), 1u);
}

}  // namespace
