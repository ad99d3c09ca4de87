#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safeedit/errors.hpp"
#include "safeedit/http_backends.hpp"
#include "safeedit/image_io.hpp"
#include "safeedit/mock_backends.hpp"
#include "safeedit/sha256.hpp"
#include "test_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <thread>

using namespace safeedit;
using nlohmann::json;

namespace {

// Loopback chat/image server for exercising the HTTP adapters.
class FakeServer {
public:
  FakeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request &req,
                                                httplib::Response &res) {
      ++chat_calls_;
      last_idempotency_key_ = req.get_header_value("Idempotency-Key");
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (fail_with_ > 0 && chat_calls_ <= failures_) {
        res.status = fail_with_;
        res.set_content("busy", "text/plain");
        return;
      }
      if (malformed_) {
        res.set_content("{\"unexpected\": true}", "application/json");
        return;
      }
      json reply{{"choices",
                  json::array({json{{"message", json{{"content", content_}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/images/generations", [this](const httplib::Request &req,
                                                  httplib::Response &res) {
      ++image_calls_;
      json body = json::parse(req.body);
      std::string prompt = body.at("prompt").get<std::string>();
      std::uint64_t seed = body.at("seed").get<std::uint64_t>();
      if (malformed_) {
        res.set_content("{\"data\": []}", "application/json");
        return;
      }
      StubGenerator gen(777);
      json reply{{"data", json::array({json{{"b64_json",
                                             base64_encode(gen.generate(prompt, seed))}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  HttpEndpoint chat_endpoint() const {
    HttpEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port_);
    ep.path = "/v1/chat/completions";
    ep.model = "judge-model";
    ep.retry.initial_backoff = std::chrono::milliseconds(1);
    return ep;
  }
  HttpEndpoint image_endpoint() const {
    HttpEndpoint ep = chat_endpoint();
    ep.path = "/v1/images/generations";
    ep.model = "image-model";
    return ep;
  }

  void fail_first(int count, int status) {
    failures_ = count;
    fail_with_ = status;
  }
  void set_malformed(bool value) { malformed_ = value; }
  void set_content(std::string value) { content_ = std::move(value); }

  int chat_calls() const { return chat_calls_; }
  std::string last_idempotency_key() const { return last_idempotency_key_; }
  std::string last_auth() const { return last_auth_; }
  std::string last_body() const { return last_body_; }

private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> chat_calls_{0};
  std::atomic<int> image_calls_{0};
  int failures_ = 0;
  int fail_with_ = 0;
  bool malformed_ = false;
  std::string content_ = "<thought>ok</thought><decision>Accept</decision>";
  std::string last_idempotency_key_;
  std::string last_auth_;
  std::string last_body_;
};

JudgeRequest simple_request() {
  JudgeRequest req;
  req.system_text = "system";
  req.user_text = "user text";
  req.prompt_text = "a prompt";
  req.round_index = 2;
  req.template_id = TemplateId::UnsafeV1;
  req.image = testutil::fake_image("img");
  return req;
}

ImageBytesLoader fixed_image_loader() {
  return [](const ImageRef &) {
    std::vector<std::uint8_t> rgb(3, 0x7f);
    return encode_ppm(1, 1, rgb);
  };
}

} // namespace

TEST_CASE("base64 round-trips binary data") {
  std::vector<std::uint8_t> data;
  for (int i = 0; i < 300; ++i) data.push_back(static_cast<std::uint8_t>(i % 251));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, std::size_t{2},
                          std::size_t{299}, data.size()}) {
    std::vector<std::uint8_t> slice(data.begin(),
                                    data.begin() + static_cast<long>(cut));
    CHECK(base64_decode(base64_encode(slice)) == slice);
  }
  CHECK_THROWS_AS(base64_decode("not!!valid"), MalformedUpstreamError);
}

TEST_CASE("chat judge returns the upstream text verbatim") {
  FakeServer server;
  server.set_content("<thought>fine</thought><decision>Accept</decision>");
  HttpEndpoint ep = server.chat_endpoint();
  ep.api_key = "sk-test";
  HttpChatJudge judge(ep, fixed_image_loader());
  std::string raw = judge.evaluate(simple_request());
  CHECK(raw == "<thought>fine</thought><decision>Accept</decision>");
  CHECK(server.last_auth() == "Bearer sk-test");
  CHECK_FALSE(server.last_idempotency_key().empty());
  // The image crossed the wire base64-encoded inside the payload.
  CHECK(server.last_body().find("data:image/x-portable-pixmap;base64,") !=
        std::string::npos);
  CHECK(judge.identity().find("judge-model") != std::string::npos);
}

TEST_CASE("a 429 then 200 succeeds after one retry") {
  FakeServer server;
  server.fail_first(1, 429);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  std::string raw = judge.evaluate(simple_request());
  CHECK(raw.find("Accept") != std::string::npos);
  CHECK(server.chat_calls() == 2);
  CHECK(server.last_idempotency_key() ==
        sha256_hex("a prompt|2|unsafe_v1|" + testutil::fake_image("img").digest));
}

TEST_CASE("persistent 429 exhausts the retry budget") {
  FakeServer server;
  server.fail_first(99, 429);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  CHECK_THROWS_AS(judge.evaluate(simple_request()), RateLimitedError);
  CHECK(server.chat_calls() == 3); // default budget
}

TEST_CASE("persistent 5xx fails with the status as cause") {
  FakeServer server;
  server.fail_first(99, 503);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  try {
    judge.evaluate(simple_request());
    FAIL("expected UpstreamStatusError");
  } catch (const UpstreamStatusError &e) {
    CHECK(e.status == 503);
  }
}

TEST_CASE("non-retryable 4xx fails immediately") {
  FakeServer server;
  server.fail_first(99, 404);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  CHECK_THROWS_AS(judge.evaluate(simple_request()), UpstreamStatusError);
  CHECK(server.chat_calls() == 1);
}

TEST_CASE("malformed chat payloads are rejected") {
  FakeServer server;
  server.set_malformed(true);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  CHECK_THROWS_AS(judge.evaluate(simple_request()), MalformedUpstreamError);
}

TEST_CASE("unreachable hosts time out after retries") {
  HttpEndpoint ep;
  ep.base_url = "http://127.0.0.1:1"; // nothing listens there
  ep.path = "/v1/chat/completions";
  ep.retry.max_attempts = 2;
  ep.retry.initial_backoff = std::chrono::milliseconds(1);
  ep.timeout = std::chrono::milliseconds(1000);
  HttpChatJudge judge(ep, fixed_image_loader());
  CHECK_THROWS_AS(judge.evaluate(simple_request()), TimeoutError);
}

TEST_CASE("image generator decodes upstream bytes and respects the seed") {
  FakeServer server;
  HttpImageGenerator gen(server.image_endpoint(), "8x8");
  auto a = gen.generate("a lantern", 5);
  auto b = gen.generate("a lantern", 5);
  CHECK(sha256_hex(a) == sha256_hex(b)); // seed-respecting server
  auto c = gen.generate("a lantern", 6);
  CHECK(sha256_hex(a) != sha256_hex(c));
  auto size = probe_image_size(a);
  REQUIRE(size.has_value());
  CHECK(size->width == 8);
}

TEST_CASE("non-image payloads from the generator are rejected") {
  FakeServer server;
  server.set_malformed(true);
  HttpImageGenerator gen(server.image_endpoint());
  CHECK_THROWS_AS(gen.generate("anything", 1), MalformedUpstreamError);
}

TEST_CASE("persisted raw equals the parsed response end to end") {
  // The judge's verbatim reply parses to the same structure downstream.
  FakeServer server;
  std::string golden = "<thought>needs softening</thought>\n"
                       "<decision>Refine</decision>\n"
                       "<refined_prompt>a softer scene</refined_prompt>";
  server.set_content(golden);
  HttpChatJudge judge(server.chat_endpoint(), fixed_image_loader());
  std::string raw = judge.evaluate(simple_request());
  CHECK(raw == golden);
  auto parsed = parse_judge_response(raw, TemplateId::UnsafeV1);
  CHECK(parsed.decision == Decision::Refine);
  CHECK(*parsed.refined_prompt == "a softer scene");
}
