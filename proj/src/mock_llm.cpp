#include "lnm/mock_llm.hpp"

#include <algorithm>
#include <random>

#include "lnm/error.hpp"
#include "lnm/seeding.hpp"

namespace lnm {
namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double beta_draw(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

std::string answer_json(double answer, std::string_view explanation) {
  const nlohmann::json j = {{"Step By Step Explanation", explanation}, {"Answer", answer}};
  return "```json\n" + j.dump() + "\n```";
}

}  // namespace

std::string_view to_string(MockScenario s) {
  switch (s) {
    case MockScenario::Echo: return "echo";
    case MockScenario::OracleBeta: return "oracle-beta";
    case MockScenario::Noisy: return "noisy";
    case MockScenario::MalformedOnce: return "malformed-once";
  }
  return "?";
}

MockScenario parse_mock_scenario(std::string_view text) {
  for (auto s : {MockScenario::Echo, MockScenario::OracleBeta, MockScenario::Noisy, MockScenario::MalformedOnce}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown mock scenario '" + std::string(text) +
                    "' (expected echo, oracle-beta, noisy or malformed-once)");
}

std::string mock_judge(const RenderedPrompt& prompt, const MockOptions& options, std::size_t repeat_index,
                       int attempt) {
  std::mt19937_64 rng(derive_seed(options.seed, {fnv1a64(prompt.content_hash),
                                                 static_cast<std::uint64_t>(options.scenario), repeat_index,
                                                 static_cast<std::uint64_t>(attempt)}));
  const auto echo = [&]() -> std::string {
    if (!prompt.ml_context) return "I am unable to give a number without a model estimate.";
    return answer_json(prompt.ml_context->probability, "Adopting the model estimate.");
  };

  switch (options.scenario) {
    case MockScenario::Echo:
      return echo();
    case MockScenario::MalformedOnce:
      if (repeat_index == 0) return "The likelihood appears moderate; further work-up is advised.";
      return echo();
    case MockScenario::Noisy:
      return answer_json(unit_uniform(rng), "Random guess.");
    case MockScenario::OracleBeta: {
      const auto label = options.labels.find(prompt.patient_id);
      if (label == options.labels.end()) {
        throw InvariantError("oracle-beta mock has no label for patient " + prompt.patient_id);
      }
      const double p = prompt.ml_context ? prompt.ml_context->probability : options.base_rate;
      const double w = options.knowledge_strength;
      const double y = label->second ? 1.0 : 0.0;
      const double center = std::clamp((1.0 - w) * p + w * y, 0.01, 0.99);
      const double kappa = options.concentration;
      return answer_json(beta_draw(rng, center * kappa, (1.0 - center) * kappa), "Weighed the findings.");
    }
  }
  throw InvariantError("unknown mock scenario");
}

std::string chat_response_body(std::string_view content, std::string_view model) {
  const nlohmann::json j = {
      {"object", "chat.completion"},
      {"model", model},
      {"choices",
       {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}};
  return j.dump();
}

MockChatBackend::MockChatBackend(MockOptions options) : options_(std::move(options)) {
  if (!(options_.knowledge_strength >= 0.0 && options_.knowledge_strength <= 1.0)) {
    throw ConfigError("mock knowledge strength must lie in [0, 1]");
  }
  if (!(options_.concentration > 0.0)) throw ConfigError("mock concentration must be positive");
  if (!(options_.base_rate > 0.0 && options_.base_rate < 1.0)) throw ConfigError("mock base rate must lie in (0, 1)");
}

void MockChatBackend::inject_status(int status, std::size_t count) {
  std::lock_guard lock(mutex_);
  faults_.insert(faults_.end(), count, status);
}

void MockChatBackend::inject_disconnect(std::size_t count) {
  std::lock_guard lock(mutex_);
  faults_.insert(faults_.end(), count, 0);
}

HttpResponse MockChatBackend::send(const ChatRequest& request) {
  calls_.fetch_add(1);
  {
    std::lock_guard lock(mutex_);
    if (!faults_.empty()) {
      const int status = faults_.front();
      faults_.pop_front();
      if (status == 0) throw TransportError("mock connection dropped");
      return {status, R"({"error":{"message":"injected failure"}})"};
    }
  }
  const std::string model = request.body.value("model", std::string("mock"));
  return {200, chat_response_body(mock_judge(request.prompt, options_, request.repeat_index, request.attempt), model)};
}

}  // namespace lnm
