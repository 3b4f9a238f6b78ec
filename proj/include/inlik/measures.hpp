#pragma once

// Tokenwise information measures, in bits.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "inlik/trace.hpp"

namespace inlik {

enum class Measure { spr, entropy, cws, cis, max_prob, oddball };

/// The four measures that feature vectors are built from, in manifest order.
inline constexpr std::array<Measure, 4> kFeatureMeasures = {Measure::spr, Measure::entropy,
                                                            Measure::cws, Measure::cis};

std::string_view measure_name(Measure m);  // "spr", "entropy", ...
Measure parse_measure(std::string_view name);

struct CwsConfig {
  static constexpr double kReferenceMass = 0.9;  // Q's mass on the observed token

  double gamma = 1.0;
};

/// What to do with p = 0 from a lossy producer.
enum class ZeroProbability { reject, clamp };
inline constexpr double kClampFloor = 1e-12;

double surprisal(double p_observed, ZeroProbability policy = ZeroProbability::reject);

/// Shannon entropy with 0 log 0 = 0. Rejects inputs more than 1e-6 from unit mass.
double entropy(std::span<const double> dist);

/// D_KL(P || Q) where Q puts 0.9 on `observed` and spreads 0.1 uniformly over
/// the rest of the vocabulary.
double kl_to_reference(std::span<const double> dist, std::size_t observed);

double cws(double p_observed, double kl_bits, const CwsConfig& config = {});

/// log2 P(next | full prefix) - log2 P(next | prefix without the current token).
double cis(double logp_next_full_prefix, double logp_next_deleted_prefix);

/// Total probability surplus of tokens more likely than the observed one.
double oddballness(std::span<const double> dist, std::size_t observed);

double max_probability(std::span<const double> dist);

/// Throws if `dist` is not a probability vector within `tolerance`.
void check_distribution(std::span<const double> dist, double tolerance = 1e-6);

struct MeasureSeries {
  Measure measure = Measure::spr;
  std::vector<double> values;  // one per trace token; 0 where unavailable
  std::vector<bool> available;

  std::size_t size() const { return values.size(); }
};

/// True when at least one position of `trace` supports `m`.
bool has_measure(const TokenTrace& trace, Measure m);

/// Per-position series read off the trace. CWS is recomputed from surprisal and
/// kl_ref so gamma stays a consumer-side setting. Throws inlik::Error naming the
/// missing trace field when no position supports `m`.
MeasureSeries series_from_trace(const TokenTrace& trace, Measure m, const CwsConfig& config = {});

}  // namespace inlik
