#pragma once

#include <memory>
#include <string>

#include "fdj/extraction.hpp"

namespace fdj {

// Connection settings for an OpenAI-style chat completion endpoint. The API
// key is taken from the FDJ_API_KEY environment variable when the field is
// left empty; no other component reads that variable.
struct HttpClientConfig {
  std::string base_url = "http://localhost:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key;
  double temperature = 0.0;
  int timeout_seconds = 60;
  int max_retries = 2;
};

// Minimal HTTP-backed LlmClient. Completions POST a single-message chat
// request; judgements reuse the completion path and read a leading yes/no.
// Network or protocol failures surface as DataError after the configured
// retries.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientConfig config);
  ~HttpLlmClient() override;

  std::string name() const override;

 protected:
  std::string do_complete(const std::string& prompt) override;
  bool do_judge(const std::string& prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fdj
