#pragma once

// Per-token likelihood traces: the contract between whatever scored a prompt
// (toy model, served endpoint, offline extractor) and feature computation.
// All logarithms are base 2.

#include <bitset>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "inlik/corpus.hpp"

namespace inlik {

enum class TraceField : std::size_t { surprisal, entropy, kl_ref, max_prob, oddball, cis_next };
inline constexpr std::size_t kTraceFieldCount = 6;

using AvailabilityMask = std::bitset<kTraceFieldCount>;

std::string_view field_name(TraceField f);

struct TokenStep {
  std::string text;
  CharSpan span;  // into the prompt text
  std::optional<double> surprisal;
  std::optional<double> entropy;
  std::optional<double> kl_ref;  // D_KL(P || Q) against the 0.9-peaked reference
  std::optional<double> max_prob;
  std::optional<double> oddball;
  // log2 P(t_{i+1} | t_{<i}): the next token rescored with this token deleted.
  std::optional<double> cis_next;

  AvailabilityMask availability() const;
  const std::optional<double>& field(TraceField f) const;
};

/// Inclusive token index range.
struct TokenRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  bool contains(std::size_t i) const { return first <= i && i <= last; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

struct TokenTrace {
  static constexpr int kLogBase = 2;

  std::string example_id;
  std::vector<TokenStep> tokens;
  TokenRange sentence;
};

struct Violation {
  static constexpr std::size_t kWholeTrace = static_cast<std::size_t>(-1);

  std::size_t token = kWholeTrace;
  std::string message;
};

/// Every broken invariant, in token order. Empty means the trace is valid.
std::vector<Violation> validate_trace(const TokenTrace& trace);

/// Sorted, duplicate-free token indices.
using IndexSet = std::vector<std::size_t>;

/// Tokens whose character span overlaps `span`. Throws when none do.
IndexSet map_span(const TokenTrace& trace, CharSpan span);

/// Tokens covering the sentence's characters; what producers use to fill
/// TokenTrace::sentence.
TokenRange sentence_range_for(const std::vector<TokenStep>& tokens, CharSpan sentence);

struct Granularities {
  IndexSet sentence;
  IndexSet expression;
  IndexSet boundary;
  IndexSet context;

  bool boundary_empty() const { return boundary.empty(); }
  bool context_empty() const { return context.empty(); }
};

/// Throws std::invalid_argument if `expression` is empty or leaves the sentence.
Granularities granularity_index_sets(const TokenTrace& trace, const IndexSet& expression);

nlohmann::json trace_to_json(const TokenTrace& trace);
TokenTrace trace_from_json(const nlohmann::json& j);

std::vector<TokenTrace> read_traces(std::istream& in);
std::vector<TokenTrace> load_traces(const std::filesystem::path& path);
void write_traces(std::ostream& out, const std::vector<TokenTrace>& traces);
void save_traces(const std::filesystem::path& path, const std::vector<TokenTrace>& traces);

}  // namespace inlik
