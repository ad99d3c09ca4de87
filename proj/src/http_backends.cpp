#include "safeedit/http_backends.hpp"

#include "safeedit/errors.hpp"
#include "safeedit/image_io.hpp"
#include "safeedit/sha256.hpp"

#include <span>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace safeedit {

using nlohmann::json;

namespace {

constexpr char kBase64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::string base64_encode(const std::vector<std::uint8_t> &bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < bytes.size()) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(kBase64Chars[(v >> 6) & 63]);
    out.push_back(kBase64Chars[v & 63]);
    i += 3;
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t v = bytes[i] << 16;
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kBase64Chars[(v >> 18) & 63]);
    out.push_back(kBase64Chars[(v >> 12) & 63]);
    out.push_back(kBase64Chars[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string &text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) throw MalformedUpstreamError("invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

namespace {

struct HttpReply {
  int status = 0;
  std::string body;
};

// POSTs a JSON body with retries per the endpoint policy. 429 and 5xx retry
// with exponential backoff; transport failures retry and end as Timeout.
HttpReply post_with_retries(const HttpEndpoint &endpoint, const json &body,
                            const std::string &idempotency_key) {
  std::string payload = body.dump();
  std::chrono::milliseconds backoff = endpoint.retry.initial_backoff;
  int last_status = 0;
  std::string last_detail;
  bool saw_rate_limit = false;

  for (int attempt = 1; attempt <= endpoint.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(
          static_cast<double>(backoff.count()) * endpoint.retry.backoff_factor));
    }
    httplib::Client client(endpoint.base_url);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout));
    httplib::Headers headers{{"Idempotency-Key", idempotency_key}};
    if (!endpoint.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    }
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_detail = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429) {
      saw_rate_limit = true;
      last_status = res->status;
      last_detail = res->body;
      continue;
    }
    if (res->status >= 500) {
      last_status = res->status;
      last_detail = res->body;
      continue;
    }
    if (res->status >= 400) {
      throw UpstreamStatusError(res->status, res->body);
    }
    return {res->status, res->body};
  }

  if (last_status == 429 || saw_rate_limit) {
    throw RateLimitedError(std::to_string(endpoint.retry.max_attempts) +
                           " attempts");
  }
  if (last_status >= 500) {
    throw UpstreamStatusError(last_status,
                              "persistent server error after " +
                                  std::to_string(endpoint.retry.max_attempts) +
                                  " attempts");
  }
  throw TimeoutError(last_detail);
}

std::string sniff_mime(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() > 8 && bytes[0] == 0x89 && bytes[1] == 'P') return "image/png";
  if (bytes.size() > 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return "image/x-portable-pixmap";
  }
  return "application/octet-stream";
}

} // namespace

HttpChatJudge::HttpChatJudge(HttpEndpoint endpoint, ImageBytesLoader load_image)
    : endpoint_(std::move(endpoint)), load_image_(std::move(load_image)) {}

std::string HttpChatJudge::identity() const {
  return "http:" + endpoint_.model + "@" + endpoint_.base_url;
}

std::string HttpChatJudge::evaluate(const JudgeRequest &request) {
  std::vector<std::uint8_t> image_bytes = load_image_(request.image);
  std::string data_url = "data:" + sniff_mime(image_bytes) + ";base64," +
                         base64_encode(image_bytes);

  json body{
      {"model", endpoint_.model},
      {"messages",
       json::array(
           {json{{"role", "system"}, {"content", request.system_text}},
            json{{"role", "user"},
                 {"content",
                  json::array(
                      {json{{"type", "text"}, {"text", request.user_text}},
                       json{{"type", "image_url"},
                            {"image_url", json{{"url", data_url}}}}})}}})}};

  std::string key = sha256_hex(request.prompt_text + "|" +
                               std::to_string(request.round_index) + "|" +
                               std::string(to_string(request.template_id)) +
                               "|" + request.image.digest);
  HttpReply reply = post_with_retries(endpoint_, body, key);

  try {
    json j = json::parse(reply.body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception &e) {
    throw MalformedUpstreamError(std::string("chat response: ") + e.what());
  }
}

HttpImageGenerator::HttpImageGenerator(HttpEndpoint endpoint, std::string size)
    : endpoint_(std::move(endpoint)), size_(std::move(size)) {}

std::string HttpImageGenerator::identity() const {
  return "http:" + endpoint_.model + "@" + endpoint_.base_url;
}

std::vector<std::uint8_t> HttpImageGenerator::generate(const std::string &prompt,
                                                       std::uint64_t seed) {
  json body{{"model", endpoint_.model},
            {"prompt", prompt},
            {"size", size_},
            {"seed", seed},
            {"response_format", "b64_json"}};
  std::string key =
      sha256_hex("gen|" + prompt + "|" + std::to_string(seed) + "|" + size_);
  HttpReply reply = post_with_retries(endpoint_, body, key);

  std::string b64;
  try {
    json j = json::parse(reply.body);
    b64 = j.at("data").at(0).at("b64_json").get<std::string>();
  } catch (const json::exception &e) {
    throw MalformedUpstreamError(std::string("image response: ") + e.what());
  }
  std::vector<std::uint8_t> bytes = base64_decode(b64);
  if (bytes.empty()) {
    throw MalformedUpstreamError("image payload is empty");
  }
  return bytes;
}

} // namespace safeedit
