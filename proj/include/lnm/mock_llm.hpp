#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

#include "lnm/llm_gateway.hpp"

namespace lnm {

enum class MockScenario {
  Echo,          // answers with the quoted model probability
  OracleBeta,    // Beta draw centred between the model probability and the true label
  Noisy,         // uniform on [0, 1]
  MalformedOnce, // repeat 0 is unparseable; other repeats echo
};

std::string_view to_string(MockScenario s);  // "echo", "oracle-beta", "noisy", "malformed-once"
MockScenario parse_mock_scenario(std::string_view text);

struct MockOptions {
  MockScenario scenario = MockScenario::Echo;
  std::uint64_t seed = 0;
  /// Oracle-beta: weight w of the true label in the centre (1-w)*p + w*y.
  double knowledge_strength = 0.08;
  /// Oracle-beta: Beta concentration; larger values mean less spread.
  double concentration = 8.0;
  /// Oracle-beta stand-in for p on prompts without a model result.
  double base_rate = 0.136;
  /// Oracle-beta labels by patient id. Never read from the prompt.
  std::map<std::string, bool, std::less<>> labels;
};

/// Assistant message text for one query. A pure function of
/// (content hash, scenario, repeat, attempt, seed) plus the label side channel.
std::string mock_judge(const RenderedPrompt& prompt, const MockOptions& options, std::size_t repeat_index,
                       int attempt = 0);

/// In-process backend returning chat-completions bodies built from mock_judge.
/// Scripted HTTP statuses can be queued to exercise retry handling.
class MockChatBackend final : public ChatBackend {
 public:
  explicit MockChatBackend(MockOptions options);
  HttpResponse send(const ChatRequest& request) override;

  /// The next `count` calls return `status` with an error body.
  void inject_status(int status, std::size_t count = 1);
  /// The next `count` calls throw TransportError.
  void inject_disconnect(std::size_t count = 1);
  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  MockOptions options_;
  std::mutex mutex_;
  std::deque<int> faults_;  // HTTP status, or 0 for a dropped connection
  std::atomic<std::uint64_t> calls_{0};
};

/// Wraps assistant text in a chat-completions response body.
std::string chat_response_body(std::string_view content, std::string_view model);

}  // namespace lnm
