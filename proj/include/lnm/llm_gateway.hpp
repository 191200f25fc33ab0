#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnm/judgment.hpp"
#include "lnm/prompting.hpp"

namespace lnm {

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-2024-05-13";
  double temperature = 1.0;
  int max_output_tokens = 1024;
  std::size_t repeats = 3;
  double timeout_seconds = 60.0;
  int retry_budget = 4;
  double backoff_initial_seconds = 0.5;
  unsigned parallelism = 4;
  std::string api_key_env = "OPENAI_API_KEY";

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigError.
  static LlmConfig from_json(const nlohmann::json& j);
};

/// Chat-completions request body: the prompt as the single user message.
nlohmann::json chat_request_body(const RenderedPrompt& prompt, const LlmConfig& cfg);
/// Content of the first choice's message. Throws TransportError on a body
/// that is not a chat-completions response.
std::string extract_message_content(std::string_view body);

struct ChatRequest {
  const RenderedPrompt& prompt;
  std::size_t repeat_index;
  int attempt;  // 0 for the first query, 1 for the re-query after a fallback
  const nlohmann::json& body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Sends one request. Connection-level failures throw TransportError; HTTP
/// failures are returned as a status code.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual HttpResponse send(const ChatRequest& request) = 0;
};

/// POSTs to a chat-completions endpoint with a bearer token taken from the
/// environment variable named in the config.
class HttpChatBackend final : public ChatBackend {
 public:
  /// Throws ConfigError when the endpoint URL is malformed or the credential
  /// variable is unset.
  explicit HttpChatBackend(const LlmConfig& cfg);
  HttpResponse send(const ChatRequest& request) override;

 private:
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
  double timeout_seconds_;
};

// ---------------------------------------------------------------- cache --

struct CacheKey {
  std::string content_hash;
  std::string model;
  std::size_t repeat_index = 0;
  int attempt = 0;
  auto operator<=>(const CacheKey&) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::string patient_id;
  PromptTemplateKind template_kind = PromptTemplateKind::Full;
  nlohmann::json request;
  std::string response;  // assistant message content
  int status = 200;
  std::string timestamp;
};

/// Append-only JSON-lines response cache. Existing entries are loaded at
/// construction; a later duplicate of a key replaces the earlier one.
class ResponseCache {
 public:
  /// In-memory cache when `path` is empty.
  explicit ResponseCache(std::filesystem::path path = {});

  std::optional<std::string> lookup(const CacheKey& key) const;
  void append(CacheEntry entry);
  std::size_t size() const;
  std::vector<CacheEntry> entries() const;  // ordered by key
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<CacheKey, CacheEntry> entries_;
};

// -------------------------------------------------------------- gateway --

struct GatewayStats {
  std::uint64_t backend_calls = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t retries = 0;
  std::uint64_t requeries = 0;
  std::uint64_t fallbacks = 0;  // judgments still fallback after the re-query
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

class LlmGateway {
 public:
  /// `cache` may be null (no caching). `sleeper` defaults to sleeping the
  /// calling thread.
  LlmGateway(LlmConfig cfg, std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache,
             Sleeper sleeper = {});

  /// Raw response text for one (prompt, repeat, attempt). Rate-limit (429),
  /// server (5xx) and connection failures are retried with exponential
  /// backoff up to the retry budget; other statuses fail immediately.
  std::string complete(const RenderedPrompt& prompt, std::size_t repeat_index, int attempt = 0);

  /// k judgments with repeat indices 0..k-1, issued sequentially. A fallback
  /// judgment is re-queried once.
  std::vector<LlmJudgment> collect_judgments(const RenderedPrompt& prompt);

  /// collect_judgments for every prompt, up to `parallelism` prompts at a
  /// time. Output order follows `prompts`.
  std::vector<std::vector<LlmJudgment>> collect_all(std::span<const RenderedPrompt> prompts);

  GatewayStats stats() const;
  const LlmConfig& config() const noexcept { return cfg_; }

 private:
  LlmConfig cfg_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  Sleeper sleeper_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> retries_{0};
  std::atomic<std::uint64_t> requeries_{0};
  std::atomic<std::uint64_t> fallbacks_{0};
};

void write_judgments_jsonl(std::span<const LlmJudgment> judgments, const std::filesystem::path& path);
std::vector<LlmJudgment> read_judgments_jsonl(const std::filesystem::path& path);

}  // namespace lnm
