#include "inlik/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "inlik/error.hpp"

namespace inlik {

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::spr: return "spr";
    case Measure::entropy: return "entropy";
    case Measure::cws: return "cws";
    case Measure::cis: return "cis";
    case Measure::max_prob: return "max_prob";
    case Measure::oddball: return "oddball";
  }
  return "?";
}

Measure parse_measure(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "spr" || lower == "surprisal") return Measure::spr;
  if (lower == "entropy" || lower == "h") return Measure::entropy;
  if (lower == "cws") return Measure::cws;
  if (lower == "cis") return Measure::cis;
  if (lower == "max_prob" || lower == "maxp") return Measure::max_prob;
  if (lower == "oddball" || lower == "odd") return Measure::oddball;
  throw Error("unknown measure '" + std::string(name) + "'");
}

double surprisal(double p_observed, ZeroProbability policy) {
  if (!(p_observed <= 1.0)) throw Error("probability above 1: " + std::to_string(p_observed));
  if (!(p_observed > 0.0)) {
    if (policy == ZeroProbability::clamp && p_observed == 0.0) p_observed = kClampFloor;
    else throw Error("surprisal of non-positive probability " + std::to_string(p_observed));
  }
  return -std::log2(p_observed);
}

void check_distribution(std::span<const double> dist, double tolerance) {
  if (dist.empty()) throw Error("empty distribution");
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("distribution has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > tolerance)
    throw Error("distribution sums to " + std::to_string(total) + ", not 1");
}

double entropy(std::span<const double> dist) {
  check_distribution(dist);
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double kl_to_reference(std::span<const double> dist, std::size_t observed) {
  check_distribution(dist);
  if (dist.size() < 2) throw Error("reference distribution undefined for a one-symbol vocabulary");
  if (observed >= dist.size()) throw Error("observed index outside the vocabulary");
  const double q_observed = CwsConfig::kReferenceMass;
  const double q_rest = (1.0 - CwsConfig::kReferenceMass) / static_cast<double>(dist.size() - 1);
  double kl = 0.0;
  for (std::size_t v = 0; v < dist.size(); ++v) {
    const double p = dist[v];
    if (p > 0.0) kl += p * (std::log2(p) - std::log2(v == observed ? q_observed : q_rest));
  }
  return kl;
}

double cws(double p_observed, double kl_bits, const CwsConfig& config) {
  return surprisal(p_observed) + config.gamma * kl_bits;
}

double cis(double logp_next_full_prefix, double logp_next_deleted_prefix) {
  return logp_next_full_prefix - logp_next_deleted_prefix;
}

double oddballness(std::span<const double> dist, std::size_t observed) {
  check_distribution(dist);
  if (observed >= dist.size()) throw Error("observed index outside the vocabulary");
  const double p = dist[observed];
  double surplus = 0.0;
  for (double q : dist) surplus += std::max(0.0, q - p);
  return surplus;
}

double max_probability(std::span<const double> dist) {
  check_distribution(dist);
  return *std::max_element(dist.begin(), dist.end());
}

namespace {

// Trace field whose absence makes `m` unavailable at a position.
TraceField limiting_field(const TokenTrace& trace, Measure m) {
  switch (m) {
    case Measure::spr: return TraceField::surprisal;
    case Measure::entropy: return TraceField::entropy;
    case Measure::cws: {
      for (const auto& t : trace.tokens) {
        if (t.surprisal) return TraceField::kl_ref;
      }
      return TraceField::surprisal;
    }
    case Measure::cis: return TraceField::cis_next;
    case Measure::max_prob: return TraceField::max_prob;
    case Measure::oddball: return TraceField::oddball;
  }
  return TraceField::surprisal;
}

std::optional<double> value_at(const TokenTrace& trace, std::size_t i, Measure m,
                               const CwsConfig& config) {
  const TokenStep& t = trace.tokens[i];
  switch (m) {
    case Measure::spr: return t.surprisal;
    case Measure::entropy: return t.entropy;
    case Measure::cws:
      if (t.surprisal && t.kl_ref) return *t.surprisal + config.gamma * *t.kl_ref;
      return std::nullopt;
    case Measure::cis: {
      if (i + 1 >= trace.tokens.size() || !t.cis_next) return std::nullopt;
      const auto& next = trace.tokens[i + 1].surprisal;
      if (!next) return std::nullopt;
      return cis(-*next, *t.cis_next);
    }
    case Measure::max_prob: return t.max_prob;
    case Measure::oddball: return t.oddball;
  }
  return std::nullopt;
}

}  // namespace

bool has_measure(const TokenTrace& trace, Measure m) {
  const CwsConfig config;
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    if (value_at(trace, i, m, config)) return true;
  }
  return false;
}

MeasureSeries series_from_trace(const TokenTrace& trace, Measure m, const CwsConfig& config) {
  MeasureSeries series;
  series.measure = m;
  series.values.assign(trace.tokens.size(), 0.0);
  series.available.assign(trace.tokens.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    if (auto v = value_at(trace, i, m, config)) {
      series.values[i] = *v;
      series.available[i] = true;
      any = true;
    }
  }
  if (!any) {
    throw Error(std::string(measure_name(m)) + " unavailable: trace '" + trace.example_id +
                "' has no usable " + std::string(field_name(limiting_field(trace, m))) +
                " values");
  }
  return series;
}

}  // namespace inlik
