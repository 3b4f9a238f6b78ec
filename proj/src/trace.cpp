#include "inlik/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "inlik/error.hpp"

namespace inlik {
namespace {

using nlohmann::json;

// Slack for producer round-off in the inequality checks.
constexpr double kSlack = 1e-9;

constexpr std::array<const char*, kTraceFieldCount> kJsonKeys = {
    "surprisal", "entropy", "kl_ref", "max_prob", "oddball", "cis_next"};

std::optional<double> optional_number(const json& tok, const char* key, std::size_t row) {
  auto it = tok.find(key);
  if (it == tok.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ParseError(row, key, "expected number or null");
  return it->get<double>();
}

}  // namespace

std::string_view field_name(TraceField f) {
  static constexpr std::array<std::string_view, kTraceFieldCount> kNames = {
      "surprisal", "entropy", "kl_ref", "max_prob", "oddball", "cis_next"};
  return kNames[static_cast<std::size_t>(f)];
}

const std::optional<double>& TokenStep::field(TraceField f) const {
  switch (f) {
    case TraceField::surprisal: return surprisal;
    case TraceField::entropy: return entropy;
    case TraceField::kl_ref: return kl_ref;
    case TraceField::max_prob: return max_prob;
    case TraceField::oddball: return oddball;
    case TraceField::cis_next: return cis_next;
  }
  throw std::logic_error("bad TraceField");
}

AvailabilityMask TokenStep::availability() const {
  AvailabilityMask mask;
  for (std::size_t f = 0; f < kTraceFieldCount; ++f) {
    mask[f] = field(static_cast<TraceField>(f)).has_value();
  }
  return mask;
}

std::vector<Violation> validate_trace(const TokenTrace& trace) {
  std::vector<Violation> out;
  const std::size_t n = trace.tokens.size();
  if (n == 0) {
    out.push_back({Violation::kWholeTrace, "trace has no tokens"});
    return out;
  }
  if (trace.sentence.first > trace.sentence.last || trace.sentence.last >= n) {
    out.push_back({Violation::kWholeTrace,
                   "sentence_token_range [" + std::to_string(trace.sentence.first) + ", " +
                       std::to_string(trace.sentence.last) + "] outside [0, " +
                       std::to_string(n) + ")"});
  }

  for (std::size_t i = 0; i < n; ++i) {
    const TokenStep& t = trace.tokens[i];
    auto flag = [&](std::string msg) { out.push_back({i, std::move(msg)}); };

    if (t.span.begin > t.span.end) flag("char span begins after it ends");
    if (i > 0 && t.span.begin < trace.tokens[i - 1].span.end)
      flag("char span overlaps or precedes the previous token");

    for (std::size_t f = 0; f < kTraceFieldCount; ++f) {
      const auto& v = t.field(static_cast<TraceField>(f));
      if (v && !std::isfinite(*v))
        flag(std::string(field_name(static_cast<TraceField>(f))) + " is not finite");
    }
    if (t.surprisal && *t.surprisal < -kSlack) flag("negative surprisal");
    if (t.entropy && *t.entropy < -kSlack) flag("negative entropy");
    if (t.kl_ref && *t.kl_ref < -kSlack) flag("negative kl_ref");
    if (t.max_prob && !(*t.max_prob > 0.0 && *t.max_prob <= 1.0 + kSlack))
      flag("max_prob outside (0, 1]");
    if (t.oddball && !(*t.oddball >= -kSlack && *t.oddball <= 1.0 + kSlack))
      flag("oddball outside [0, 1]");
    if (t.cis_next && *t.cis_next > kSlack) flag("cis_next is a log-probability but positive");
    if (t.cis_next && i + 1 == n) flag("cis_next present on the last token (no successor)");
    if (t.surprisal && t.max_prob && *t.max_prob > 0.0 &&
        *t.surprisal < -std::log2(*t.max_prob) - kSlack) {
      flag("surprisal below -log2(max_prob): observed token more likely than the argmax");
    }
  }
  return out;
}

IndexSet map_span(const TokenTrace& trace, CharSpan span) {
  IndexSet out;
  if (!span.empty()) {
    for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
      if (trace.tokens[i].span.overlaps(span)) out.push_back(i);
    }
  }
  if (out.empty()) {
    throw Error("character span [" + std::to_string(span.begin) + ", " +
                std::to_string(span.end) + ") covers no token of trace '" + trace.example_id +
                "' (annotation/tokenization mismatch)");
  }
  return out;
}

TokenRange sentence_range_for(const std::vector<TokenStep>& tokens, CharSpan sentence) {
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].span.overlaps(sentence)) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) throw Error("no token overlaps the sentence");
  return {*first, last};
}

Granularities granularity_index_sets(const TokenTrace& trace, const IndexSet& expression) {
  const TokenRange s = trace.sentence;
  if (expression.empty()) throw std::invalid_argument("empty expression index set");
  if (!std::is_sorted(expression.begin(), expression.end()) ||
      std::adjacent_find(expression.begin(), expression.end()) != expression.end()) {
    throw std::invalid_argument("expression index set must be sorted and unique");
  }
  if (!s.contains(expression.front()) || !s.contains(expression.back())) {
    throw std::invalid_argument("expression tokens fall outside the sentence range");
  }

  Granularities g;
  g.sentence.reserve(s.size());
  for (std::size_t i = s.first; i <= s.last; ++i) g.sentence.push_back(i);
  g.expression = expression;
  if (expression.front() > s.first) g.boundary.push_back(expression.front() - 1);
  if (expression.back() < s.last) g.boundary.push_back(expression.back() + 1);
  std::set_difference(g.sentence.begin(), g.sentence.end(), expression.begin(), expression.end(),
                      std::back_inserter(g.context));
  return g;
}

json trace_to_json(const TokenTrace& trace) {
  json tokens = json::array();
  for (const auto& t : trace.tokens) {
    json tok;
    tok["text"] = t.text;
    tok["span"] = {t.span.begin, t.span.end};
    for (std::size_t f = 0; f < kTraceFieldCount; ++f) {
      const auto& v = t.field(static_cast<TraceField>(f));
      tok[kJsonKeys[f]] = v ? json(*v) : json(nullptr);
    }
    tokens.push_back(std::move(tok));
  }
  return json{{"example_id", trace.example_id},
              {"sentence_token_range", {trace.sentence.first, trace.sentence.last}},
              {"tokens", std::move(tokens)}};
}

namespace {

TokenTrace trace_from_json_row(const json& j, std::size_t row) {
  if (!j.is_object()) throw ParseError(row, "", "expected a JSON object");
  TokenTrace trace;
  if (!j.contains("example_id") || !j["example_id"].is_string())
    throw ParseError(row, "example_id", "missing or not a string");
  trace.example_id = j["example_id"].get<std::string>();

  const auto& range = j.value("sentence_token_range", json());
  if (!range.is_array() || range.size() != 2 || !range[0].is_number_unsigned() ||
      !range[1].is_number_unsigned())
    throw ParseError(row, "sentence_token_range", "expected [int, int]");
  trace.sentence = {range[0].get<std::size_t>(), range[1].get<std::size_t>()};

  if (!j.contains("tokens") || !j["tokens"].is_array())
    throw ParseError(row, "tokens", "missing or not an array");
  for (const auto& tok : j["tokens"]) {
    TokenStep step;
    if (!tok.contains("text") || !tok["text"].is_string())
      throw ParseError(row, "tokens.text", "missing or not a string");
    step.text = tok["text"].get<std::string>();
    const auto& span = tok.value("span", json());
    if (!span.is_array() || span.size() != 2 || !span[0].is_number_unsigned() ||
        !span[1].is_number_unsigned())
      throw ParseError(row, "tokens.span", "expected [int, int]");
    step.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    step.surprisal = optional_number(tok, "surprisal", row);
    step.entropy = optional_number(tok, "entropy", row);
    step.kl_ref = optional_number(tok, "kl_ref", row);
    step.max_prob = optional_number(tok, "max_prob", row);
    step.oddball = optional_number(tok, "oddball", row);
    step.cis_next = optional_number(tok, "cis_next", row);
    trace.tokens.push_back(std::move(step));
  }
  return trace;
}

}  // namespace

TokenTrace trace_from_json(const json& j) { return trace_from_json_row(j, 0); }

std::vector<TokenTrace> read_traces(std::istream& in) {
  std::vector<TokenTrace> traces;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(row, "", e.what());
    }
    traces.push_back(trace_from_json_row(j, row));
    ++row;
  }
  return traces;
}

std::vector<TokenTrace> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_traces(in);
}

void write_traces(std::ostream& out, const std::vector<TokenTrace>& traces) {
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

void save_traces(const std::filesystem::path& path, const std::vector<TokenTrace>& traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_traces(out, traces);
}

}  // namespace inlik
