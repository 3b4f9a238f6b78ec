#include "inlik/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "inlik/error.hpp"

namespace inlik {
namespace {

std::vector<std::size_t> available_only(const MeasureSeries& s, const IndexSet& indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i < s.size() && s.available[i]) out.push_back(i);
  }
  return out;
}

bool contains(const IndexSet& set, std::size_t i) {
  return std::binary_search(set.begin(), set.end(), i);
}

FeatureSpec spec(Measure m, Granularity g, std::string kind) {
  return {std::string(measure_name(m)) + "." + std::string(granularity_name(g)) + "." + kind, m,
          g, std::nullopt, std::move(kind)};
}

std::shared_ptr<const Manifest> make_full_manifest() {
  Manifest m;
  for (Measure k : kFeatureMeasures) {
    for (Granularity g : kGranularities) {
      for (Aggregator a : kAggregators) {
        auto s = spec(k, g, std::string(aggregator_name(a)));
        s.aggregator = a;
        m.push_back(std::move(s));
      }
    }
  }
  for (Measure k : kFeatureMeasures) m.push_back(spec(k, Granularity::expression, "monotonic_decrease"));
  for (Measure k : kFeatureMeasures) m.push_back(spec(k, Granularity::expression, "spike_count"));
  for (Measure k : kFeatureMeasures) m.push_back(spec(k, Granularity::boundary, "boundary_shift"));
  for (Measure k : kFeatureMeasures) m.push_back(spec(k, Granularity::sentence, "peak_in_span"));
  m.push_back(spec(Measure::spr, Granularity::expression, "contrast_ratio"));
  for (Measure k : kFeatureMeasures) {
    m.push_back(spec(k, Granularity::sentence, "p_min"));
    m.push_back(spec(k, Granularity::sentence, "p_max"));
  }
  if (m.size() != kFullFeatureCount) throw std::logic_error("full manifest arity drifted");
  return std::make_shared<const Manifest>(std::move(m));
}

std::shared_ptr<const Manifest> make_sentence_manifest() {
  Manifest m;
  for (Measure k : kFeatureMeasures) {
    for (Aggregator a : {Aggregator::mean, Aggregator::max}) {
      auto s = spec(k, Granularity::sentence, std::string(aggregator_name(a)));
      s.aggregator = a;
      m.push_back(std::move(s));
    }
  }
  return std::make_shared<const Manifest>(std::move(m));
}

FeatureSpec baseline_spec(std::string kind, Measure source) {
  return {"baseline." + kind, source, Granularity::sentence, std::nullopt, std::move(kind)};
}

// Fills a vector whose manifest is fixed; entries are appended in manifest order.
class Builder {
 public:
  Builder(std::string id, std::shared_ptr<const Manifest> manifest) {
    v_.example_id = std::move(id);
    v_.manifest = std::move(manifest);
    v_.values.reserve(v_.manifest->size());
    v_.valid.reserve(v_.manifest->size());
  }

  void push(Feature f) {
    v_.values.push_back(f.valid ? f.value : 0.0);
    v_.valid.push_back(f.valid);
  }

  FeatureVector finish() && {
    if (v_.values.size() != v_.manifest->size())
      throw std::logic_error("feature vector does not match its manifest");
    return std::move(v_);
  }

 private:
  FeatureVector v_;
};

}  // namespace

std::string_view granularity_name(Granularity g) {
  switch (g) {
    case Granularity::sentence: return "sentence";
    case Granularity::expression: return "expression";
    case Granularity::boundary: return "boundary";
    case Granularity::context: return "context";
  }
  return "?";
}

std::string_view aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::mean: return "mean";
    case Aggregator::max: return "max";
    case Aggregator::min: return "min";
    case Aggregator::std: return "std";
  }
  return "?";
}

double FeatureVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < manifest->size(); ++i) {
    if ((*manifest)[i].name == name) return values[i];
  }
  throw Error("no feature named '" + std::string(name) + "'");
}

bool FeatureVector::valid_at(std::string_view name) const {
  for (std::size_t i = 0; i < manifest->size(); ++i) {
    if ((*manifest)[i].name == name) return valid[i];
  }
  throw Error("no feature named '" + std::string(name) + "'");
}

Feature aggregate(const MeasureSeries& series, const IndexSet& indices, Aggregator op) {
  const auto idx = available_only(series, indices);
  if (idx.empty()) return {};
  const double n = static_cast<double>(idx.size());
  switch (op) {
    case Aggregator::mean: {
      double sum = 0.0;
      for (auto i : idx) sum += series.values[i];
      return {sum / n, true};
    }
    case Aggregator::max: {
      double best = -std::numeric_limits<double>::infinity();
      for (auto i : idx) best = std::max(best, series.values[i]);
      return {best, true};
    }
    case Aggregator::min: {
      double best = std::numeric_limits<double>::infinity();
      for (auto i : idx) best = std::min(best, series.values[i]);
      return {best, true};
    }
    case Aggregator::std: {
      double sum = 0.0;
      for (auto i : idx) sum += series.values[i];
      const double mean = sum / n;
      double ss = 0.0;
      for (auto i : idx) ss += (series.values[i] - mean) * (series.values[i] - mean);
      return {std::sqrt(ss / n), true};
    }
  }
  return {};
}

Feature monotonic_decrease(const MeasureSeries& series, const IndexSet& expression) {
  const auto idx = available_only(series, expression);
  if (idx.empty()) return {};
  for (std::size_t k = 1; k < idx.size(); ++k) {
    if (!(series.values[idx[k - 1]] > series.values[idx[k]])) return {0.0, true};
  }
  return {1.0, true};
}

Feature spike_count(const MeasureSeries& series, const IndexSet& expression, TokenRange sentence) {
  const auto idx = available_only(series, expression);
  if (idx.empty()) return {};
  std::size_t spikes = 0;
  for (std::size_t i : idx) {
    if (i == sentence.first || i >= sentence.last) continue;
    if (!series.available[i - 1] || !series.available[i + 1]) continue;
    const double v = series.values[i];
    if (v > series.values[i - 1] && v > series.values[i + 1]) ++spikes;
  }
  return {static_cast<double>(spikes), true};
}

Feature boundary_shift(const MeasureSeries& series, const IndexSet& expression,
                       TokenRange sentence) {
  if (expression.empty()) return {};
  const std::size_t end = expression.back();
  const std::size_t post = end + 1;
  if (post > sentence.last || post >= series.size()) return {};
  if (!series.available[end] || !series.available[post]) return {};
  return {series.values[post] - series.values[end], true};
}

Feature peak_in_span(const MeasureSeries& series, const IndexSet& expression,
                     const IndexSet& sentence) {
  const auto idx = available_only(series, sentence);
  if (idx.empty()) return {};
  std::size_t best = idx.front();
  for (std::size_t i : idx) {
    if (series.values[i] > series.values[best]) best = i;
  }
  return {contains(expression, best) ? 1.0 : 0.0, true};
}

Feature contrast_ratio(const MeasureSeries& spr, const IndexSet& expression,
                       const IndexSet& sentence, double epsilon) {
  const auto in_span = available_only(spr, expression);
  if (in_span.empty()) return {};
  double span_max = -std::numeric_limits<double>::infinity();
  for (auto i : in_span) span_max = std::max(span_max, spr.values[i]);
  double rest = 0.0;
  for (auto i : available_only(spr, sentence)) {
    if (!contains(expression, i)) rest += spr.values[i];
  }
  return {span_max / (rest + epsilon), true};
}

std::pair<Feature, Feature> extreme_positions(const MeasureSeries& series,
                                              const IndexSet& sentence) {
  const auto idx = available_only(series, sentence);
  if (idx.empty() || sentence.empty()) return {};
  std::size_t lo = idx.front();
  std::size_t hi = idx.front();
  for (std::size_t i : idx) {
    if (series.values[i] < series.values[lo]) lo = i;
    if (series.values[i] > series.values[hi]) hi = i;
  }
  const double n = static_cast<double>(sentence.size());
  auto position = [&](std::size_t i) {
    const auto offset = std::lower_bound(sentence.begin(), sentence.end(), i) - sentence.begin();
    return static_cast<double>(offset + 1) / n;
  };
  return {{position(lo), true}, {position(hi), true}};
}

const std::shared_ptr<const Manifest>& full_manifest() {
  static const auto manifest = make_full_manifest();
  return manifest;
}

const std::shared_ptr<const Manifest>& sentence_manifest() {
  static const auto manifest = make_sentence_manifest();
  return manifest;
}

FeatureVector build_full_features(const TokenTrace& trace, CharSpan expression,
                                  const CwsConfig& config) {
  const IndexSet expr = map_span(trace, expression);
  const Granularities g = granularity_index_sets(trace, expr);

  std::array<std::optional<MeasureSeries>, kFeatureMeasures.size()> series;
  for (std::size_t k = 0; k < kFeatureMeasures.size(); ++k) {
    if (has_measure(trace, kFeatureMeasures[k]))
      series[k] = series_from_trace(trace, kFeatureMeasures[k], config);
  }
  auto each_measure = [&](auto&& compute) {
    for (const auto& s : series) compute(s);
  };

  Builder b(trace.example_id, full_manifest());
  for (const auto& s : series) {
    for (const IndexSet* set : {&g.sentence, &g.expression, &g.boundary, &g.context}) {
      for (Aggregator a : kAggregators) b.push(s ? aggregate(*s, *set, a) : Feature{});
    }
  }
  each_measure([&](const auto& s) { b.push(s ? monotonic_decrease(*s, g.expression) : Feature{}); });
  each_measure([&](const auto& s) {
    b.push(s ? spike_count(*s, g.expression, trace.sentence) : Feature{});
  });
  each_measure([&](const auto& s) {
    b.push(s ? boundary_shift(*s, g.expression, trace.sentence) : Feature{});
  });
  each_measure([&](const auto& s) {
    b.push(s ? peak_in_span(*s, g.expression, g.sentence) : Feature{});
  });
  b.push(series[0] ? contrast_ratio(*series[0], g.expression, g.sentence) : Feature{});
  each_measure([&](const auto& s) {
    auto [lo, hi] = s ? extreme_positions(*s, g.sentence) : std::pair<Feature, Feature>{};
    b.push(lo);
    b.push(hi);
  });
  return std::move(b).finish();
}

FeatureVector build_sentence_features(const TokenTrace& trace, const CwsConfig& config) {
  IndexSet sentence;
  for (std::size_t i = trace.sentence.first; i <= trace.sentence.last; ++i) sentence.push_back(i);
  Builder b(trace.example_id, sentence_manifest());
  for (Measure k : kFeatureMeasures) {
    std::optional<MeasureSeries> s;
    if (has_measure(trace, k)) s = series_from_trace(trace, k, config);
    for (Aggregator a : {Aggregator::mean, Aggregator::max}) {
      b.push(s ? aggregate(*s, sentence, a) : Feature{});
    }
  }
  return std::move(b).finish();
}

BaselineVector build_baselines(const TokenTrace& trace) {
  BaselineVector b;
  const TokenRange s = trace.sentence;
  if (s.first > s.last || s.last >= trace.tokens.size())
    throw Error("trace '" + trace.example_id + "' has an invalid sentence range");

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = s.first; i <= s.last; ++i) {
    if (const auto& v = trace.tokens[i].surprisal) {
      sum -= *v;
      ++n;
    }
  }
  if (n) {
    b.mean_log_prob = sum / static_cast<double>(n);
    b.mean_log_prob_valid = true;
  }

  // Position i holds the distribution that predicted token i, so the first
  // sentence position is the one conditioned on no sentence token.
  sum = 0.0;
  n = 0;
  for (std::size_t i = s.first + 1; i <= s.last; ++i) {
    if (const auto& v = trace.tokens[i].max_prob) {
      sum += *v;
      ++n;
    }
  }
  if (n) {
    b.mean_max_token_prob = sum / static_cast<double>(n);
    b.mean_max_token_prob_valid = true;
  }

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = s.first; i <= s.last; ++i) {
    if (const auto& v = trace.tokens[i].oddball) {
      best = std::max(best, *v);
      b.max_oddballness_valid = true;
    }
  }
  if (b.max_oddballness_valid) b.max_oddballness = best;
  return b;
}

std::string_view feature_set_name(FeatureSet s) {
  switch (s) {
    case FeatureSet::full: return "full";
    case FeatureSet::sentence: return "sentence";
    case FeatureSet::baseline_logprob: return "baseline:logprob";
    case FeatureSet::baseline_maxprob: return "baseline:maxprob";
    case FeatureSet::baseline_odd: return "baseline:odd";
    case FeatureSet::baseline_combined: return "baseline:combined";
  }
  return "?";
}

FeatureSet parse_feature_set(std::string_view name) {
  for (FeatureSet s : {FeatureSet::full, FeatureSet::sentence, FeatureSet::baseline_logprob,
                       FeatureSet::baseline_maxprob, FeatureSet::baseline_odd,
                       FeatureSet::baseline_combined}) {
    if (feature_set_name(s) == name) return s;
  }
  throw Error("unknown feature set '" + std::string(name) +
              "' (expected full, sentence, baseline:{logprob|maxprob|odd|combined})");
}

bool is_baseline(FeatureSet s) { return s != FeatureSet::full && s != FeatureSet::sentence; }

const std::shared_ptr<const Manifest>& baseline_manifest(FeatureSet s) {
  static const auto logprob = std::make_shared<const Manifest>(
      Manifest{baseline_spec("mean_log_prob", Measure::spr)});
  static const auto maxprob = std::make_shared<const Manifest>(
      Manifest{baseline_spec("mean_max_token_prob", Measure::max_prob)});
  static const auto odd = std::make_shared<const Manifest>(
      Manifest{baseline_spec("max_oddballness", Measure::oddball)});
  static const auto combined = std::make_shared<const Manifest>(
      Manifest{(*logprob)[0], (*maxprob)[0], (*odd)[0]});
  switch (s) {
    case FeatureSet::baseline_logprob: return logprob;
    case FeatureSet::baseline_maxprob: return maxprob;
    case FeatureSet::baseline_odd: return odd;
    case FeatureSet::baseline_combined: return combined;
    default: throw Error("not a baseline feature set: " + std::string(feature_set_name(s)));
  }
}

FeatureVector baseline_features(const BaselineVector& b, FeatureSet s, std::string example_id) {
  Builder out(std::move(example_id), baseline_manifest(s));
  const Feature logprob{b.mean_log_prob, b.mean_log_prob_valid};
  const Feature maxprob{b.mean_max_token_prob, b.mean_max_token_prob_valid};
  const Feature odd{b.max_oddballness, b.max_oddballness_valid};
  switch (s) {
    case FeatureSet::baseline_logprob: out.push(logprob); break;
    case FeatureSet::baseline_maxprob: out.push(maxprob); break;
    case FeatureSet::baseline_odd: out.push(odd); break;
    default:
      out.push(logprob);
      out.push(maxprob);
      out.push(odd);
  }
  return std::move(out).finish();
}

FeatureVector featurize(const TokenTrace& trace, std::optional<CharSpan> expression, FeatureSet set,
                        const CwsConfig& config) {
  switch (set) {
    case FeatureSet::full:
      if (!expression)
        throw Error("example '" + trace.example_id + "' has no expression span for full features");
      return build_full_features(trace, *expression, config);
    case FeatureSet::sentence: return build_sentence_features(trace, config);
    default: return baseline_features(build_baselines(trace), set, trace.example_id);
  }
}

std::shared_ptr<const Manifest> ablate(const Manifest& manifest, Measure measure,
                                       bool allow_missing) {
  Manifest kept;
  for (const auto& s : manifest) {
    if (s.measure != measure) kept.push_back(s);
  }
  if (kept.size() == manifest.size() && !allow_missing) {
    throw Error("cannot ablate '" + std::string(measure_name(measure)) +
                "': no feature in the vector uses it");
  }
  return std::make_shared<const Manifest>(std::move(kept));
}

FeatureVector ablate(const FeatureVector& vector, Measure measure, bool allow_missing) {
  FeatureVector out;
  out.example_id = vector.example_id;
  out.manifest = ablate(*vector.manifest, measure, allow_missing);
  for (std::size_t i = 0; i < vector.size(); ++i) {
    if ((*vector.manifest)[i].measure != measure) {
      out.values.push_back(vector.values[i]);
      out.valid.push_back(vector.valid[i]);
    }
  }
  return out;
}

}  // namespace inlik
