#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "inlik/error.hpp"
#include "inlik/feature_io.hpp"
#include "inlik/features.hpp"
#include "inlik/rng.hpp"
#include "inlik/toy_lm.hpp"

using namespace inlik;
using doctest::Approx;

namespace {

MeasureSeries series(std::vector<double> v, Measure m = Measure::spr) {
  MeasureSeries s;
  s.measure = m;
  s.available.assign(v.size(), true);
  s.values = std::move(v);
  return s;
}

IndexSet range(std::size_t a, std::size_t b) {
  IndexSet s;
  for (std::size_t i = a; i <= b; ++i) s.push_back(i);
  return s;
}

TokenTrace sample_trace() {
  const BigramModel m = BigramModel::train("abcabcab\nbcaacb\ncbba\n");
  return trace_prompt(m, "ccabbacbca", {1, 8}, "s");
}

}  // namespace

TEST_CASE("aggregators") {
  const auto c = series({2.5, 2.5, 2.5});
  for (Aggregator a : {Aggregator::mean, Aggregator::max, Aggregator::min})
    CHECK(aggregate(c, {0, 1, 2}, a).value == 2.5);
  CHECK(aggregate(c, {0, 1, 2}, Aggregator::std).value == 0.0);

  const auto s = series({1, 3, 2});
  CHECK(aggregate(s, {0, 1, 2}, Aggregator::mean).value == 2.0);
  CHECK(aggregate(s, {0, 1, 2}, Aggregator::std).value == Approx(std::sqrt(2.0 / 3.0)));
  CHECK(aggregate(s, {1}, Aggregator::std).value == 0.0);

  const Feature empty = aggregate(s, {}, Aggregator::max);
  CHECK_FALSE(empty.valid);
  CHECK(empty.value == 0.0);

  auto partial = s;
  partial.available[1] = false;
  CHECK(aggregate(partial, {0, 1, 2}, Aggregator::max).value == 2.0);
}

TEST_CASE("monotonic decrease") {
  CHECK(monotonic_decrease(series({5, 4, 3}), {0, 1, 2}).value == 1.0);
  CHECK(monotonic_decrease(series({5, 5, 3}), {0, 1, 2}).value == 0.0);
  CHECK(monotonic_decrease(series({5, 4, 3}), {1}).value == 1.0);
}

TEST_CASE("spike count") {
  CHECK(spike_count(series({0, 1, 3, 2, 0}), {1, 2, 3}, {0, 4}).value == 1.0);
  CHECK(spike_count(series({0, 1, 2, 3, 4}), {1, 2, 3}, {0, 4}).value == 0.0);
  // Position 0 has no left neighbour and position 4 no right one.
  const auto edge = series({9, 1, 5, 1, 9});
  CHECK(spike_count(edge, {0, 1, 2}, {0, 4}).value == 1.0);
  CHECK(spike_count(edge, {3, 4}, {0, 4}).value == 0.0);
  CHECK(spike_count(edge, {2}, {1, 3}).value == 1.0);
  CHECK(spike_count(edge, {2}, {2, 3}).value == 0.0);
}

TEST_CASE("boundary shift") {
  const Feature f = boundary_shift(series({1, 2, 5, 0}), {0, 1}, {0, 3});
  CHECK(f.valid);
  CHECK(f.value == 3.0);
  const Feature end = boundary_shift(series({1, 2, 5, 0}), {2, 3}, {0, 3});
  CHECK_FALSE(end.valid);
  CHECK(end.value == 0.0);
  CHECK_FALSE(boundary_shift(series({1, 2, 5, 0}), {1, 2}, {0, 2}).valid);
}

TEST_CASE("peak in span") {
  CHECK(peak_in_span(series({1, 2, 9, 3}), {2, 3}, range(0, 3)).value == 1.0);
  CHECK(peak_in_span(series({1, 7, 2, 3, 7}), {3, 4}, range(0, 4)).value == 0.0);
}

TEST_CASE("contrast ratio") {
  CHECK(contrast_ratio(series({3, 5, 4, 2, 0}), {2, 3}, range(0, 4)).value == Approx(0.5).epsilon(1e-6));
  CHECK(contrast_ratio(series({4, 1}), {0, 1}, range(0, 1)).value == Approx(4.0 / 1e-6));
}

TEST_CASE("extreme positions") {
  std::vector<double> v(10, 1.0);
  v[9] = 5.0;
  v[0] = 0.0;
  auto [lo, hi] = extreme_positions(series(v), range(0, 9));
  CHECK(hi.value == 1.0);
  CHECK(lo.value == Approx(0.1));
  auto [clo, chi] = extreme_positions(series(std::vector<double>(10, 2.0)), range(0, 9));
  CHECK(clo.value == Approx(0.1));
  CHECK(chi.value == Approx(0.1));
}

TEST_CASE("order statistics are invariant to positive scaling") {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 3 + rng.index(12);
    std::vector<double> v(n);
    for (auto& x : v) x = std::floor(rng.uniform(0, 6));  // ties on purpose
    const std::size_t a = rng.index(n);
    const std::size_t b = a + rng.index(n - a);
    const IndexSet expr = range(a, b);
    const IndexSet sent = range(0, n - 1);
    const TokenRange sr{0, n - 1};
    const double c = rng.uniform(0.1, 10.0);
    std::vector<double> w(v);
    for (auto& x : w) x *= c;
    const auto s = series(v);
    const auto t = series(w);
    CHECK(monotonic_decrease(s, expr).value == monotonic_decrease(t, expr).value);
    CHECK(spike_count(s, expr, sr).value == spike_count(t, expr, sr).value);
    CHECK(peak_in_span(s, expr, sent).value == peak_in_span(t, expr, sent).value);
    CHECK(extreme_positions(s, sent).first.value == extreme_positions(t, sent).first.value);
    CHECK(extreme_positions(s, sent).second.value == extreme_positions(t, sent).second.value);
    CHECK(boundary_shift(t, expr, sr).value == Approx(c * boundary_shift(s, expr, sr).value));
  }
}

TEST_CASE("full and sentence vectors") {
  const TokenTrace t = sample_trace();
  const FeatureVector full = build_full_features(t, {3, 6});
  const FeatureVector sent = build_sentence_features(t);
  CHECK(full.size() == kFullFeatureCount);
  CHECK(sent.size() == kSentenceFeatureCount);
  for (const auto& spec : *sent.manifest) {
    CHECK(sent.at(spec.name) == full.at(spec.name));
    CHECK(sent.valid_at(spec.name) == full.valid_at(spec.name));
  }
  CHECK(full.manifest == full_manifest());

  const FeatureVector whole = build_full_features(t, {1, 9});
  for (const auto& spec : *whole.manifest) {
    if (spec.granularity == Granularity::context) CHECK_FALSE(whole.valid_at(spec.name));
  }
  CHECK_FALSE(whole.valid_at("spr.boundary.boundary_shift"));
}

TEST_CASE("baselines") {
  BigramModel half("ab");
  const TokenTrace t = trace_prompt(half, "abba", {0, 3});
  const BaselineVector b = build_baselines(t);
  CHECK(b.mean_log_prob == Approx(-1.0));
  CHECK(b.mean_max_token_prob == Approx(0.5));
  CHECK(b.max_oddballness == 0.0);

  const BigramModel m = BigramModel::train("ababababab\n");
  const BaselineVector c = build_baselines(trace_prompt(m, "abab", {0, 3}));
  CHECK(c.max_oddballness == 0.0);
  CHECK(c.mean_max_token_prob > 0.0);
  CHECK(c.mean_max_token_prob <= 1.0);
}

TEST_CASE("ablation") {
  const TokenTrace t = sample_trace();
  const FeatureVector sent = build_sentence_features(t);
  CHECK(ablate(sent, Measure::cws).size() == 6);
  const FeatureVector full = build_full_features(t, {3, 6});
  const FeatureVector no_spr = ablate(full, Measure::spr);
  CHECK(no_spr.size() == 66);
  CHECK_THROWS_AS(ablate(no_spr, Measure::spr), Error);
  CHECK(ablate(no_spr, Measure::spr, true).size() == 66);
  for (const auto& spec : *no_spr.manifest) CHECK(spec.measure != Measure::spr);
}

TEST_CASE("baseline sets") {
  CHECK(parse_feature_set("baseline:odd") == FeatureSet::baseline_odd);
  CHECK(baseline_manifest(FeatureSet::baseline_odd)->size() == 1);
  CHECK(baseline_manifest(FeatureSet::baseline_combined)->size() == 3);
  CHECK_THROWS(parse_feature_set("everything"));
  const FeatureVector v = featurize(sample_trace(), std::nullopt, FeatureSet::baseline_logprob);
  CHECK(v.size() == 1);
  CHECK_THROWS(featurize(sample_trace(), std::nullopt, FeatureSet::full));
}

TEST_CASE("feature tables") {
  const TokenTrace t = sample_trace();
  TokenTrace u = t;
  u.example_id = "u";
  const FeatureTable table = make_table({build_full_features(t, {3, 6}), build_full_features(u, {2, 4})}, true);
  CHECK(table.values.rows() == 2);
  CHECK(table.values.cols() == 178);
  CHECK(table.column_names()[89] == table.manifest[0].name + "_valid");
  CHECK(uses_validity_columns(FeatureSet::full));
  CHECK_FALSE(uses_validity_columns(FeatureSet::baseline_combined));
  CHECK_THROWS(make_table({build_full_features(t, {3, 6}), build_sentence_features(u)}, true));

  const FeatureTable dropped = ablate(table, Measure::cis);
  CHECK(dropped.values.cols() == 2 * (89 - 22));
  CHECK(manifest_hash(dropped) != manifest_hash(table));
  CHECK(spec_for_name("cis.context.std").aggregator == Aggregator::std);

  testing::TempDir dir("features");
  save_feature_table(dir / "f.csv", table);
  CHECK(std::filesystem::exists(manifest_path_for(dir / "f.csv")));
  const FeatureTable back = load_feature_table(dir / "f.csv");
  CHECK(back.ids == table.ids);
  CHECK(back.manifest == table.manifest);
  CHECK(back.validity_columns);
  CHECK(((back.values - table.values).array().abs() <= 1e-9 * (1.0 + table.values.array().abs())).all());
  CHECK(manifest_hash(back) == manifest_hash(table));
}
