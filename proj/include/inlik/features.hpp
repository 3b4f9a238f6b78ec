#pragma once

// Feature assembly: measure x granularity x aggregator statistics, the
// span-localized linguistic features, the sentence-level restriction and the
// scalar baselines.
//
// Every feature carries a validity flag. An invalid feature (empty index set,
// measure missing from the trace, span touching the sentence edge) is 0 with
// valid = false; vectors never change length.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "inlik/measures.hpp"
#include "inlik/trace.hpp"

namespace inlik {

enum class Granularity { sentence, expression, boundary, context };
enum class Aggregator { mean, max, min, std };

inline constexpr std::array<Granularity, 4> kGranularities = {
    Granularity::sentence, Granularity::expression, Granularity::boundary, Granularity::context};
inline constexpr std::array<Aggregator, 4> kAggregators = {Aggregator::mean, Aggregator::max,
                                                           Aggregator::min, Aggregator::std};

std::string_view granularity_name(Granularity g);
std::string_view aggregator_name(Aggregator a);

struct FeatureSpec {
  std::string name;
  std::optional<Measure> measure;
  std::optional<Granularity> granularity;
  std::optional<Aggregator> aggregator;
  std::string kind;  // aggregator name, or the linguistic feature / baseline name

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

using Manifest = std::vector<FeatureSpec>;

struct FeatureVector {
  std::string example_id;
  std::vector<double> values;
  std::vector<bool> valid;
  std::shared_ptr<const Manifest> manifest;

  std::size_t size() const { return values.size(); }
  /// Value by manifest name; throws if absent.
  double at(std::string_view name) const;
  bool valid_at(std::string_view name) const;
};

/// One computed feature.
struct Feature {
  double value = 0.0;
  bool valid = false;
};

/// mean / max / min / population std over the available positions of `indices`.
Feature aggregate(const MeasureSeries& series, const IndexSet& indices, Aggregator op);

/// 1 iff values strictly decrease along the span; a single token counts as decreasing.
Feature monotonic_decrease(const MeasureSeries& series, const IndexSet& expression);

/// Local maxima inside the span whose two sentence neighbours both exist.
Feature spike_count(const MeasureSeries& series, const IndexSet& expression, TokenRange sentence);

/// k(token after the span) - k(last span token); invalid when the span ends the sentence.
Feature boundary_shift(const MeasureSeries& series, const IndexSet& expression,
                       TokenRange sentence);

/// 1 iff the sentence argmax (first occurrence) lies in the span.
Feature peak_in_span(const MeasureSeries& series, const IndexSet& expression,
                     const IndexSet& sentence);

inline constexpr double kContrastEpsilon = 1e-6;

/// max surprisal in the span / (sum of surprisal over the rest of the sentence + epsilon).
Feature contrast_ratio(const MeasureSeries& spr, const IndexSet& expression,
                       const IndexSet& sentence, double epsilon = kContrastEpsilon);

/// 1-based argmin / argmax sentence position divided by sentence length.
std::pair<Feature, Feature> extreme_positions(const MeasureSeries& series,
                                              const IndexSet& sentence);

inline constexpr std::size_t kFullFeatureCount = 89;
inline constexpr std::size_t kSentenceFeatureCount = 8;

const std::shared_ptr<const Manifest>& full_manifest();
const std::shared_ptr<const Manifest>& sentence_manifest();

/// `expression` is in prompt character coordinates.
FeatureVector build_full_features(const TokenTrace& trace, CharSpan expression,
                                  const CwsConfig& config = {});
FeatureVector build_sentence_features(const TokenTrace& trace, const CwsConfig& config = {});

struct BaselineVector {
  double mean_log_prob = 0.0;
  double mean_max_token_prob = 0.0;
  double max_oddballness = 0.0;
  bool mean_log_prob_valid = false;
  bool mean_max_token_prob_valid = false;
  bool max_oddballness_valid = false;
};

BaselineVector build_baselines(const TokenTrace& trace);

enum class FeatureSet { full, sentence, baseline_logprob, baseline_maxprob, baseline_odd,
                        baseline_combined };

std::string_view feature_set_name(FeatureSet s);  // "full", "sentence", "baseline:odd", ...
FeatureSet parse_feature_set(std::string_view name);
bool is_baseline(FeatureSet s);

const std::shared_ptr<const Manifest>& baseline_manifest(FeatureSet s);
FeatureVector baseline_features(const BaselineVector& b, FeatureSet s, std::string example_id);

/// Featurizes one trace under `set`. `expression` is only used by FeatureSet::full.
FeatureVector featurize(const TokenTrace& trace, std::optional<CharSpan> expression,
                        FeatureSet set, const CwsConfig& config = {});

/// Drops every entry tagged with `measure`. Throws if nothing matches unless
/// `allow_missing`.
FeatureVector ablate(const FeatureVector& vector, Measure measure, bool allow_missing = false);
std::shared_ptr<const Manifest> ablate(const Manifest& manifest, Measure measure,
                                       bool allow_missing = false);

}  // namespace inlik
