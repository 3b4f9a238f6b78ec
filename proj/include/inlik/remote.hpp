#pragma once

// Traces from a served model over an OpenAI-style completions endpoint that
// echoes the prompt with per-token logprobs (echo=true, max_tokens=0).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "inlik/corpus.hpp"
#include "inlik/trace.hpp"

namespace inlik {

struct RemoteConfig {
  std::string endpoint;  // scheme://host[:port][/prefix]
  std::string model;
  int top_k = 5;  // 0 asks for observed logprobs only
  std::size_t concurrency = 4;
  int max_retries = 4;
  double backoff_seconds = 0.5;  // doubled after every retry
  double timeout_seconds = 60.0;
  std::string api_key_env = "INLIK_API_KEY";
  std::optional<std::filesystem::path> log_path;  // JSONL request/response log
};

struct RemoteRequest {
  std::string example_id;
  std::string prompt;
  CharSpan sentence;  // in prompt coordinates
};

struct RemoteOutcome {
  std::string example_id;
  std::optional<TokenTrace> trace;
  std::string error;  // set when `trace` is empty
};

/// Converts one echoed completion choice. Natural-log values become bits.
/// With top-k alternatives, max_prob is read from the list and oddballness is
/// filled only when the observed token is in it; entropy, KL and the
/// deleted-prefix score are never available. Throws when the token offsets do
/// not line up with `prompt`.
TokenTrace trace_from_completion(const nlohmann::json& choice, const RemoteRequest& request);

/// Probes the endpoint first and throws if it cannot return prompt logprobs.
/// Per-example failures are reported in the outcome. Results are ordered by
/// example id.
std::vector<RemoteOutcome> fetch_remote_traces(const RemoteConfig& config,
                                               const std::vector<RemoteRequest>& requests);

std::vector<RemoteRequest> remote_requests(const std::vector<ExampleRecord>& records);

}  // namespace inlik
