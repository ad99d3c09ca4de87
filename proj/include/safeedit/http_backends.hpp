#pragma once
// HTTP implementations of the judge and generator interfaces against
// chat-completions-style and image-generation endpoints.
//
// Images cross the wire base64-encoded inside the chat payload. Each call
// carries an Idempotency-Key derived from (prompt, round, image digest).
// Retries: transient transport failures, 429 and 5xx retry with exponential
// backoff; other 4xx fail immediately. Credentials arrive through the
// caller (resolved from environment variables by the config layer) and are
// never persisted.

#include "safeedit/backends.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace safeedit {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;
};

struct HttpEndpoint {
  std::string base_url; // e.g. "http://127.0.0.1:8080"
  std::string path;
  std::string model;
  std::string api_key; // empty = no Authorization header
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
};

using ImageBytesLoader =
    std::function<std::vector<std::uint8_t>(const ImageRef &)>;

std::string base64_encode(const std::vector<std::uint8_t> &bytes);
std::vector<std::uint8_t> base64_decode(const std::string &text);

class HttpChatJudge : public JudgeBackend {
public:
  HttpChatJudge(HttpEndpoint endpoint, ImageBytesLoader load_image);

  std::string evaluate(const JudgeRequest &request) override;
  std::string identity() const override;

private:
  HttpEndpoint endpoint_;
  ImageBytesLoader load_image_;
};

class HttpImageGenerator : public GeneratorBackend {
public:
  explicit HttpImageGenerator(HttpEndpoint endpoint,
                              std::string size = "512x512");

  std::vector<std::uint8_t> generate(const std::string &prompt,
                                     std::uint64_t seed) override;
  std::string identity() const override;

private:
  HttpEndpoint endpoint_;
  std::string size_;
};

} // namespace safeedit
