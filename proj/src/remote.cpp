#include "inlik/remote.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "inlik/error.hpp"

namespace inlik {
namespace {

using nlohmann::json;

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // .../v1/completions
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("endpoint must look like http://host:port: " + url);
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.base = url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix.ends_with("/completions") ? prefix : prefix + "/v1/completions";
  return e;
}

double bits(double natural_log) { return -natural_log / std::numbers::ln2; }

bool transient(int status) { return status == 429 || status >= 500; }

struct Attempt {
  int status = 0;  // 0: no response
  std::string body;
  std::string transport_error;
};

class Session {
 public:
  explicit Session(const RemoteConfig& config) : config_(config), endpoint_(split_endpoint(config.endpoint)) {
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
      headers_.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body(const std::string& prompt) const {
    json b = {{"model", config_.model}, {"prompt", prompt}, {"max_tokens", 0},
              {"echo", true},           {"temperature", 0}};
    b["logprobs"] = config_.top_k > 0 ? json(config_.top_k) : json(0);
    return b;
  }

  // Sends with retries; every attempt is appended to `log`.
  Attempt send(const json& request, const std::string& id, std::vector<json>& log) const {
    httplib::Client client(endpoint_.base);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    const std::string payload = request.dump();
    Attempt a;
    for (int attempt = 0;; ++attempt) {
      auto res = client.Post(endpoint_.path, headers_, payload, "application/json");
      a = {};
      if (res) {
        a.status = res->status;
        a.body = res->body;
      } else {
        a.transport_error = httplib::to_string(res.error());
      }
      json entry = {{"example_id", id}, {"attempt", attempt}, {"request", request}};
      if (a.status) {
        entry["status"] = a.status;
        entry["response"] = json::parse(a.body, nullptr, false).is_discarded()
                                ? json(a.body)
                                : json::parse(a.body);
      } else {
        entry["transport_error"] = a.transport_error;
      }
      log.push_back(std::move(entry));
      const bool retry = a.status == 0 || transient(a.status);
      if (!retry || attempt >= config_.max_retries) return a;
      std::this_thread::sleep_for(
          std::chrono::duration<double>(config_.backoff_seconds * std::ldexp(1.0, attempt)));
    }
  }

 private:
  const RemoteConfig& config_;
  Endpoint endpoint_;
  httplib::Headers headers_;
};

const json& first_choice(const json& response) {
  const auto& choices = response.at("choices");
  if (!choices.is_array() || choices.empty()) throw Error("response has no choices");
  return choices[0];
}

std::string describe(const Attempt& a) {
  if (!a.status) return "transport error: " + a.transport_error;
  return "HTTP " + std::to_string(a.status) + ": " + a.body.substr(0, 200);
}

}  // namespace

TokenTrace trace_from_completion(const nlohmann::json& choice, const RemoteRequest& request) {
  const auto& lp = choice.at("logprobs");
  if (lp.is_null()) throw Error("completion carries no logprobs");
  const auto& tokens = lp.at("tokens");
  const auto& logprobs = lp.at("token_logprobs");
  const auto& offsets = lp.at("text_offset");
  const json top = lp.contains("top_logprobs") ? lp.at("top_logprobs") : json();
  if (tokens.size() != logprobs.size() || tokens.size() != offsets.size())
    throw Error("logprob arrays differ in length");
  if (!top.is_null() && top.size() != tokens.size())
    throw Error("top_logprobs length differs from tokens");

  TokenTrace trace;
  trace.example_id = request.example_id;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    TokenStep step;
    step.text = tokens[i].get<std::string>();
    const auto begin = offsets[i].get<std::size_t>();
    step.span = {begin, begin + step.text.size()};
    // Generated text (if any) starts past the prompt.
    if (begin >= request.prompt.size()) break;
    if (begin < cursor || step.span.end > request.prompt.size() ||
        request.prompt.compare(begin, step.text.size(), step.text) != 0)
      throw Error("token " + std::to_string(i) + " ('" + step.text + "') does not match the prompt at offset " +
                  std::to_string(begin));
    cursor = step.span.end;

    if (!logprobs[i].is_null()) {
      const double observed = logprobs[i].get<double>();
      step.surprisal = std::max(0.0, bits(observed));
      if (!top.is_null() && top[i].is_object() && !top[i].empty()) {
        double best = observed;
        bool observed_listed = false;
        for (const auto& [tok, value] : top[i].items()) {
          best = std::max(best, value.get<double>());
          observed_listed = observed_listed || tok == step.text;
        }
        step.max_prob = std::min(1.0, std::exp(best));
        if (observed_listed) {
          double odd = 0.0;
          for (const auto& [tok, value] : top[i].items()) {
            if (tok != step.text) odd += std::max(0.0, std::exp(value.get<double>()) - std::exp(observed));
          }
          step.oddball = std::min(1.0, odd);
        }
      }
    }
    trace.tokens.push_back(std::move(step));
  }
  if (trace.tokens.empty()) throw Error("completion echoed no prompt tokens");
  trace.sentence = sentence_range_for(trace.tokens, request.sentence);
  return trace;
}

std::vector<RemoteOutcome> fetch_remote_traces(const RemoteConfig& config,
                                               const std::vector<RemoteRequest>& requests) {
  if (config.concurrency < 1) throw Error("remote concurrency must be at least 1");
  if (config.top_k < 0) throw Error("top-k must be >= 0");
  Session session(config);

  std::vector<json> probe_log;
  {
    const Attempt a = session.send(session.body("Hello world"), "<probe>", probe_log);
    if (a.status != 200) throw Error("endpoint probe failed: " + describe(a));
    const json r = json::parse(a.body, nullptr, false);
    bool ok = false;
    if (!r.is_discarded() && r.contains("choices") && r["choices"].is_array() && !r["choices"].empty()) {
      const auto& c = r["choices"][0];
      ok = c.contains("logprobs") && c["logprobs"].is_object() &&
           c["logprobs"].contains("token_logprobs") && c["logprobs"].contains("text_offset");
    }
    if (!ok) throw Error("endpoint does not return prompt logprobs with text offsets (echo + logprobs)");
  }

  std::vector<RemoteOutcome> outcomes(requests.size());
  std::vector<std::vector<json>> logs(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < requests.size();) {
      const auto& req = requests[i];
      auto& out = outcomes[i];
      out.example_id = req.example_id;
      try {
        const Attempt a = session.send(session.body(req.prompt), req.example_id, logs[i]);
        if (a.status != 200) throw Error(describe(a));
        out.trace = trace_from_completion(first_choice(json::parse(a.body)), req);
      } catch (const std::exception& e) {
        out.trace.reset();
        out.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(config.concurrency, std::max<std::size_t>(requests.size(), 1)); ++t)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (config.log_path) {
    std::ofstream log(*config.log_path, std::ios::binary);
    if (!log) throw Error("cannot write " + config.log_path->string());
    for (const auto& e : probe_log) log << e.dump() << '\n';
    for (const auto& entries : logs) {
      for (const auto& e : entries) log << e.dump() << '\n';
    }
  }
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const auto& a, const auto& b) { return a.example_id < b.example_id; });
  return outcomes;
}

std::vector<RemoteRequest> remote_requests(const std::vector<ExampleRecord>& records) {
  std::vector<RemoteRequest> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const Prompt p = build_prompt(rec);
    out.push_back({rec.id, p.text, p.sentence});
  }
  return out;
}

}  // namespace inlik
