// lnm headers pull in Eigen, which must precede httplib's system headers.
#include "lnm/error.hpp"
#include "lnm/llm_gateway.hpp"

#include <cstdlib>
#include <regex>

#include <httplib.h>

namespace lnm {

HttpChatBackend::HttpChatBackend(const LlmConfig& cfg) : timeout_seconds_(cfg.timeout_seconds) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg.endpoint, m, kUrl)) throw ConfigError("malformed endpoint URL: " + cfg.endpoint);
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable " + cfg.api_key_env + " is not set; it must hold the API key");
    }
    api_key_ = key;
  }
}

HttpResponse HttpChatBackend::send(const ChatRequest& request) {
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  const auto usecs = static_cast<time_t>((timeout_seconds_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const auto result = client.Post(path_, headers, request.body.dump(), "application/json");
  if (!result) {
    throw TransportError("request to " + base_ + path_ + " failed: " + httplib::to_string(result.error()),
                         request.prompt.patient_id, static_cast<int>(request.repeat_index));
  }
  return {result->status, result->body};
}

}  // namespace lnm
