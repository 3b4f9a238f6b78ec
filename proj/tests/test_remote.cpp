#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "inlik/error.hpp"
#include "inlik/remote.hpp"

using namespace inlik;
using nlohmann::json;
using doctest::Approx;

namespace {

constexpr double kLnHalf = -0.6931;

// Echo endpoint: every 3-byte chunk of the prompt is a token scored ln(1/2);
// the first token has no score. Prompts containing "flaky" fail with 429 then
// 503 before succeeding; prompts containing "broken" always get a 500.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(bool with_logprobs = true, bool shift_offsets = false) {
    server_.Post("/v1/completions", [=, this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const std::string prompt = body.at("prompt");
      {
        std::lock_guard lock(mu_);
        last_auth_ = req.get_header_value("Authorization");
        last_body_ = body;
        const int seen = attempts_[prompt]++;
        if (prompt.find("flaky") != std::string::npos && seen < 2) {
          res.status = seen == 0 ? 429 : 503;
          return;
        }
      }
      if (prompt.find("broken") != std::string::npos) {
        res.status = 500;
        return;
      }
      const int k = body.at("logprobs");
      json lp = {{"tokens", json::array()}, {"token_logprobs", json::array()},
                 {"text_offset", json::array()}, {"top_logprobs", json::array()}};
      for (std::size_t at = 0; at < prompt.size(); at += 3) {
        const std::string tok = prompt.substr(at, 3);
        lp["tokens"].push_back(tok);
        lp["text_offset"].push_back(at + (shift_offsets && at > 0 ? 1 : 0));
        if (at == 0) {
          lp["token_logprobs"].push_back(nullptr);
          lp["top_logprobs"].push_back(nullptr);
          continue;
        }
        lp["token_logprobs"].push_back(kLnHalf);
        json top = json::object();
        if (k >= 1) top[tok] = kLnHalf;
        if (k >= 2) top["zzz"] = -1.2;
        lp["top_logprobs"].push_back(k > 0 ? top : json(nullptr));
      }
      json choice = {{"text", prompt}, {"index", 0}};
      choice["logprobs"] = with_logprobs ? lp : json(nullptr);
      res.set_content(json{{"choices", json::array({choice})}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int attempts(const std::string& prompt) {
    std::lock_guard lock(mu_);
    return attempts_[prompt];
  }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  json last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::map<std::string, int> attempts_;
  std::string last_auth_;
  json last_body_;
};

RemoteConfig config_for(const FakeEndpoint& e, int top_k) {
  RemoteConfig c;
  c.endpoint = e.url();
  c.model = "fake";
  c.top_k = top_k;
  c.backoff_seconds = 0.01;
  c.timeout_seconds = 5;
  return c;
}

RemoteRequest request(std::string id, std::string prompt, CharSpan sentence) {
  return {std::move(id), std::move(prompt), sentence};
}

}  // namespace

TEST_CASE("completion conversion") {
  const std::string prompt = "Q: abcdefghi";
  json lp = {{"tokens", {"Q:", " ab", "cde", "fgh", "i"}},
             {"token_logprobs", {nullptr, -0.6931, -0.1, -2.0, -0.5}},
             {"text_offset", {0, 2, 5, 8, 11}},
             {"top_logprobs", {nullptr, {{" ab", -0.6931}, {"x", -0.9}}, {{"zz", -0.05}, {"cde", -0.1}},
                               {{"q", -0.3}}, json::object()}}};
  const TokenTrace t = trace_from_completion({{"logprobs", lp}}, request("r", prompt, {3, 12}));
  REQUIRE(t.tokens.size() == 5);
  CHECK(t.sentence == TokenRange{1, 4});
  CHECK_FALSE(t.tokens[0].surprisal.has_value());
  CHECK(*t.tokens[1].surprisal == Approx(1.0).epsilon(1e-4));
  CHECK(*t.tokens[1].oddball == 0.0);
  CHECK(*t.tokens[1].max_prob == Approx(std::exp(-0.6931)));
  CHECK(*t.tokens[2].oddball == Approx(std::exp(-0.05) - std::exp(-0.1)));
  CHECK(*t.tokens[2].max_prob == Approx(std::exp(-0.05)));
  // Observed token not listed: max-prob is known, oddballness is not.
  CHECK(*t.tokens[3].max_prob == Approx(std::exp(-0.3)));
  CHECK_FALSE(t.tokens[3].oddball.has_value());
  CHECK_FALSE(t.tokens[4].max_prob.has_value());
  for (const auto& s : t.tokens) {
    CHECK_FALSE(s.entropy.has_value());
    CHECK_FALSE(s.kl_ref.has_value());
    CHECK_FALSE(s.cis_next.has_value());
  }
  CHECK(validate_trace(t).empty());

  lp["text_offset"][2] = 6;
  CHECK_THROWS_AS(trace_from_completion({{"logprobs", lp}}, request("r", prompt, {3, 12})), Error);
  CHECK_THROWS_AS(trace_from_completion({{"logprobs", nullptr}}, request("r", prompt, {3, 12})), Error);
}

TEST_CASE("fetching from an echo endpoint") {
  FakeEndpoint server;
  testing::TempDir dir("remote");
  ::setenv("INLIK_TEST_KEY", "sekrit", 1);

  std::vector<RemoteRequest> reqs{request("c", "zzz sentence one", {4, 16}),
                                  request("a", "flaky sentence two", {6, 18}),
                                  request("b", "broken sentence", {7, 15})};

  SUBCASE("observed-only mode") {
    RemoteConfig c = config_for(server, 0);
    c.api_key_env = "INLIK_TEST_KEY";
    c.log_path = dir / "log.jsonl";
    const auto out = fetch_remote_traces(c, reqs);
    REQUIRE(out.size() == 3);
    CHECK(out[0].example_id == "a");
    CHECK(out[1].example_id == "b");
    CHECK(out[2].example_id == "c");
    REQUIRE(out[0].trace);
    CHECK(server.attempts("flaky sentence two") == 3);
    CHECK_FALSE(out[1].trace);
    CHECK(out[1].error.find("HTTP 500") != std::string::npos);
    REQUIRE(out[2].trace);
    for (const auto& s : out[2].trace->tokens) CHECK_FALSE(s.max_prob.has_value());
    CHECK(*out[2].trace->tokens[1].surprisal == Approx(1.0).epsilon(1e-4));
    CHECK(server.last_auth() == "Bearer sekrit");
    CHECK(server.last_body()["echo"] == true);
    CHECK(server.last_body()["max_tokens"] == 0);

    // probe + 3 attempts for "a" + 5 for "b" + 1 for "c"
    const std::string log = testing::read_file(dir / "log.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 1 + 3 + 5 + 1);
    CHECK(log.find("sekrit") == std::string::npos);
  }

  SUBCASE("top-k mode") {
    const auto out = fetch_remote_traces(config_for(server, 2), {reqs[0]});
    REQUIRE(out[0].trace);
    const auto& s = out[0].trace->tokens[1];
    CHECK(*s.oddball == 0.0);
    CHECK(*s.max_prob == Approx(std::exp(kLnHalf)));
  }
}

TEST_CASE("endpoints without prompt logprobs are refused up front") {
  FakeEndpoint server(false);
  CHECK_THROWS_AS(fetch_remote_traces(config_for(server, 1), {request("a", "abcdef", {0, 6})}), Error);
  RemoteConfig dead;
  dead.endpoint = "http://127.0.0.1:1";
  dead.max_retries = 0;
  dead.timeout_seconds = 1;
  CHECK_THROWS_AS(fetch_remote_traces(dead, {}), Error);
}

TEST_CASE("misaligned offsets fail only that example") {
  FakeEndpoint server(true, true);
  const auto out = fetch_remote_traces(config_for(server, 1), {request("a", "abcdefghi", {0, 9})});
  REQUIRE(out.size() == 1);
  CHECK_FALSE(out[0].trace);
  CHECK(out[0].error.find("does not match") != std::string::npos);
}
