// The only translation unit that touches the HTTP library; everything else
// sees just the LlmClient interface.
#include "fdj/http_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <stdexcept>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fdj/core.hpp"

namespace fdj {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

struct HttpLlmClient::Impl {
  HttpClientConfig config;
  httplib::Client http;

  explicit Impl(HttpClientConfig cfg)
      : config(std::move(cfg)), http(config.base_url) {
    if (config.api_key.empty()) {
      const char* env = std::getenv("FDJ_API_KEY");
      if (env != nullptr) config.api_key = env;
    }
    http.set_connection_timeout(config.timeout_seconds);
    http.set_read_timeout(config.timeout_seconds);
  }

  std::string post(const std::string& prompt) {
    nlohmann::json body{
        {"model", config.model},
        {"temperature", config.temperature},
        {"messages",
         nlohmann::json::array(
             {nlohmann::json{{"role", "user"}, {"content", prompt}}})}};
    httplib::Headers headers;
    if (!config.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config.api_key);
    }
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      auto res =
          http.Post(config.path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP status " + std::to_string(res->status);
        if (res->status >= 400 && res->status < 500 && res->status != 429) {
          break;  // client errors other than rate limits will not heal
        }
        continue;
      }
      nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
      if (reply.is_discarded()) {
        last_error = "response body is not JSON";
        continue;
      }
      // OpenAI-style chat reply; accept the plain-completion shape too.
      if (reply.contains("choices") && reply["choices"].is_array() &&
          !reply["choices"].empty()) {
        const auto& choice = reply["choices"][0];
        if (choice.contains("message") &&
            choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
          return choice["message"]["content"].get<std::string>();
        }
        if (choice.contains("text") && choice["text"].is_string()) {
          return choice["text"].get<std::string>();
        }
      }
      if (reply.contains("text") && reply["text"].is_string()) {
        return reply["text"].get<std::string>();
      }
      last_error = "response JSON has no completion text";
      break;
    }
    throw DataError("LLM endpoint " + config.base_url + config.path +
                    " failed: " + last_error);
  }
};

HttpLlmClient::HttpLlmClient(HttpClientConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpLlmClient::~HttpLlmClient() = default;

std::string HttpLlmClient::name() const {
  return "http:" + impl_->config.model;
}

std::string HttpLlmClient::do_complete(const std::string& prompt) {
  return impl_->post(prompt);
}

bool HttpLlmClient::do_judge(const std::string& prompt) {
  std::string reply = lowercase(impl_->post(prompt));
  auto first = reply.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return false;
  return reply.compare(first, 3, "yes") == 0;
}

}  // namespace fdj
