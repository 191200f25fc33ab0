#include "lnm/llm_gateway.hpp"

#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <thread>

#include "lnm/error.hpp"

namespace lnm {
namespace {

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string excerpt(std::string_view body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? std::string(body) : std::string(body.substr(0, kMax)) + "...";
}

bool retryable(int status) { return status == 429 || status >= 500; }

nlohmann::json entry_to_json(const CacheEntry& e) {
  return {{"content_hash", e.key.content_hash},
          {"patient_id", e.patient_id},
          {"template_kind", to_string(e.template_kind)},
          {"model", e.key.model},
          {"repeat_index", e.key.repeat_index},
          {"attempt", e.key.attempt},
          {"request", e.request},
          {"response", e.response},
          {"status", e.status},
          {"timestamp", e.timestamp}};
}

CacheEntry entry_from_json(const nlohmann::json& j) {
  CacheEntry e;
  e.key.content_hash = j.at("content_hash").get<std::string>();
  e.key.model = j.at("model").get<std::string>();
  e.key.repeat_index = j.at("repeat_index").get<std::size_t>();
  e.key.attempt = j.value("attempt", 0);
  e.patient_id = j.at("patient_id").get<std::string>();
  e.template_kind = parse_template_kind(j.at("template_kind").get<std::string>());
  e.request = j.value("request", nlohmann::json::object());
  e.response = j.at("response").get<std::string>();
  e.status = j.value("status", 200);
  e.timestamp = j.value("timestamp", std::string());
  return e;
}

}  // namespace

// ---------------------------------------------------------------- config --

void LlmConfig::validate() const {
  if (model.empty()) throw ConfigError("llm.model must not be empty");
  if (endpoint.empty()) throw ConfigError("llm.endpoint must not be empty");
  if (!(temperature >= 0.0)) throw ConfigError("llm.temperature must be >= 0");
  if (max_output_tokens < 1) throw ConfigError("llm.max_output_tokens must be >= 1");
  if (repeats < 1) throw ConfigError("llm.repeats must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("llm.timeout_seconds must be > 0");
  if (retry_budget < 0) throw ConfigError("llm.retry_budget must be >= 0");
  if (!(backoff_initial_seconds >= 0.0)) throw ConfigError("llm.backoff_initial_seconds must be >= 0");
  if (parallelism < 1) throw ConfigError("llm.parallelism must be >= 1");
}

nlohmann::json LlmConfig::to_json() const {
  return {{"endpoint", endpoint},
          {"model", model},
          {"temperature", temperature},
          {"max_output_tokens", max_output_tokens},
          {"repeats", repeats},
          {"timeout_seconds", timeout_seconds},
          {"retry_budget", retry_budget},
          {"backoff_initial_seconds", backoff_initial_seconds},
          {"parallelism", parallelism},
          {"api_key_env", api_key_env}};
}

LlmConfig LlmConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("llm section must be an object");
  LlmConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "endpoint") c.endpoint = v.get<std::string>();
      else if (key == "model") c.model = v.get<std::string>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "max_output_tokens") c.max_output_tokens = v.get<int>();
      else if (key == "repeats") c.repeats = v.get<std::size_t>();
      else if (key == "timeout_seconds") c.timeout_seconds = v.get<double>();
      else if (key == "retry_budget") c.retry_budget = v.get<int>();
      else if (key == "backoff_initial_seconds") c.backoff_initial_seconds = v.get<double>();
      else if (key == "parallelism") c.parallelism = v.get<unsigned>();
      else if (key == "api_key_env") c.api_key_env = v.get<std::string>();
      else throw ConfigError("unknown key llm." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid llm section: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json chat_request_body(const RenderedPrompt& prompt, const LlmConfig& cfg) {
  return {{"model", cfg.model},
          {"messages", {{{"role", "user"}, {"content", prompt.text}}}},
          {"temperature", cfg.temperature},
          {"max_tokens", cfg.max_output_tokens}};
}

std::string extract_message_content(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response body is not JSON: " + excerpt(body));
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("response has no choices[0].message.content: " + excerpt(body));
  }
}

// ----------------------------------------------------------------- cache --

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw DataError("cannot open cache " + path_.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      // A torn final line from an interrupted run is dropped; anything else is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw DataError(path_.string() + ":" + std::to_string(line_no) + ": malformed cache line");
    }
    try {
      auto e = entry_from_json(j);
      entries_[e.key] = std::move(e);
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path_.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.response;
}

void ResponseCache::append(CacheEntry entry) {
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to cache " + path_.string());
    out << entry_to_json(entry).dump() << '\n';
    out.flush();
    if (!out) throw DataError("write failed: " + path_.string());
  }
  entries_[entry.key] = std::move(entry);
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<CacheEntry> ResponseCache::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<CacheEntry> out;
  out.reserve(entries_.size());
  for (const auto& [k, e] : entries_) out.push_back(e);
  return out;
}

// --------------------------------------------------------------- gateway --

LlmGateway::LlmGateway(LlmConfig cfg, std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache,
                       Sleeper sleeper)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), cache_(std::move(cache)), sleeper_(std::move(sleeper)) {
  cfg_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

std::string LlmGateway::complete(const RenderedPrompt& prompt, std::size_t repeat_index, int attempt) {
  const CacheKey key{prompt.content_hash, cfg_.model, repeat_index, attempt};
  if (cache_) {
    if (auto hit = cache_->lookup(key)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  if (!backend_) {
    throw TransportError("no backend configured and no cached response for patient " + prompt.patient_id,
                         prompt.patient_id, static_cast<int>(repeat_index));
  }

  const nlohmann::json body = chat_request_body(prompt, cfg_);
  const ChatRequest request{prompt, repeat_index, attempt, body};
  std::string last_error;
  for (int tries = 0;; ++tries) {
    if (tries > 0) {
      retries_.fetch_add(1);
      sleeper_(std::chrono::duration<double>(cfg_.backoff_initial_seconds * std::ldexp(1.0, tries - 1)));
    }
    HttpResponse response;
    try {
      backend_calls_.fetch_add(1);
      response = backend_->send(request);
    } catch (const TransportError& e) {
      last_error = e.what();
      if (tries < cfg_.retry_budget) continue;
      break;
    }
    if (response.status >= 200 && response.status < 300) {
      std::string content;
      try {
        content = extract_message_content(response.body);
      } catch (const TransportError& e) {
        throw TransportError(e.what(), prompt.patient_id, static_cast<int>(repeat_index));
      }
      if (cache_) {
        cache_->append(CacheEntry{key, prompt.patient_id, prompt.template_kind, body, content, response.status,
                                  utc_timestamp()});
      }
      return content;
    }
    last_error = "HTTP " + std::to_string(response.status) + ": " + excerpt(response.body);
    if (!retryable(response.status)) {
      throw TransportError(last_error + " (patient " + prompt.patient_id + ", repeat " +
                               std::to_string(repeat_index) + ")",
                           prompt.patient_id, static_cast<int>(repeat_index));
    }
    if (tries >= cfg_.retry_budget) break;
  }
  throw TransportError("retries exhausted for patient " + prompt.patient_id + ", repeat " +
                           std::to_string(repeat_index) + ": " + last_error,
                       prompt.patient_id, static_cast<int>(repeat_index));
}

std::vector<LlmJudgment> LlmGateway::collect_judgments(const RenderedPrompt& prompt) {
  std::vector<LlmJudgment> out;
  out.reserve(cfg_.repeats);
  for (std::size_t r = 0; r < cfg_.repeats; ++r) {
    auto j = parse_judgment(complete(prompt, r, 0), prompt.patient_id, r);
    if (j.parse_status == ParseStatus::Fallback) {
      requeries_.fetch_add(1);
      auto retry = parse_judgment(complete(prompt, r, 1), prompt.patient_id, r);
      retry.attempts = 2;
      if (retry.parse_status == ParseStatus::Fallback) fallbacks_.fetch_add(1);
      j = std::move(retry);
    }
    j.template_kind = prompt.template_kind;
    j.prompt_hash = prompt.content_hash;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<std::vector<LlmJudgment>> LlmGateway::collect_all(std::span<const RenderedPrompt> prompts) {
  std::vector<std::vector<LlmJudgment>> out(prompts.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < prompts.size(); i = next.fetch_add(1)) {
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        out[i] = collect_judgments(prompts[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(cfg_.parallelism, std::max<std::size_t>(prompts.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

GatewayStats LlmGateway::stats() const {
  return {backend_calls_.load(), cache_hits_.load(), retries_.load(), requeries_.load(), fallbacks_.load()};
}

void write_judgments_jsonl(std::span<const LlmJudgment> judgments, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& j : judgments) out << to_json(j).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<LlmJudgment> read_judgments_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<LlmJudgment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON");
    out.push_back(judgment_from_json(j));
  }
  return out;
}

}  // namespace lnm
