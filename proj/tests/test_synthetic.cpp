#include <doctest.h>

#include <cmath>

#include "inlik/error.hpp"
#include "inlik/measures.hpp"
#include "inlik/synthetic.hpp"

using namespace inlik;
using doctest::Approx;

namespace {

SyntheticSpec small(std::size_t n = 300) {
  SyntheticSpec s;
  s.n = n;
  s.lm_training_sentences = 60;
  return s;
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_NOTHROW(SyntheticSpec{}.validate());
  for (double rho : {0.4, 1.1}) {
    SyntheticSpec s;
    s.rho = rho;
    CHECK_THROWS_AS(s.validate(), Error);
  }
  SyntheticSpec s;
  s.vocab = "abca";
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.span_length = s.sentence_min;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.error_rate = -0.1;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("suites are complete, valid and reproducible") {
  const SyntheticSuite a = make_synthetic(small(), 3);
  REQUIRE(a.dataset.size() == 300);
  REQUIRE(a.traces.size() == 300);
  REQUIRE(a.errors.size() == 300);
  REQUIRE(a.spiked.size() == 300);
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    CHECK(validate_trace(a.traces[i]).empty());
    CHECK(a.traces[i].example_id == a.dataset[i].id);
  }

  const Labeling l = label_errors(a.dataset, a.predictions);
  for (std::size_t i = 0; i < l.labels.size(); ++i) CHECK(l.labels[i].error == a.errors[i].error);

  const SyntheticSuite b = make_synthetic(small(), 3);
  CHECK(b.dataset == a.dataset);
  CHECK(*b.traces[17].tokens[20].surprisal == *a.traces[17].tokens[20].surprisal);
  CHECK(error_vector(b.errors) == error_vector(a.errors));
}

TEST_CASE("spike rate follows rho") {
  auto rates = [](double rho) {
    SyntheticSpec s = small(2000);
    s.rho = rho;
    const SyntheticSuite suite = make_synthetic(s, 21);
    double hit[2] = {0, 0}, total[2] = {0, 0};
    for (std::size_t i = 0; i < suite.errors.size(); ++i) {
      const int e = suite.errors[i].error;
      total[e] += 1;
      hit[e] += suite.spiked[i];
    }
    return std::pair{hit[1] / total[1], hit[0] / total[0]};
  };
  const auto [err9, ok9] = rates(0.9);
  CHECK(err9 == Approx(0.9).epsilon(0.05));
  CHECK(ok9 == Approx(0.1).epsilon(0.4));
  const auto [err5, ok5] = rates(0.5);
  CHECK(std::abs(err5 - ok5) < 0.06);
}

TEST_CASE("zero-magnitude spikes leave the traces unchanged") {
  SyntheticSpec s = small(120);
  s.spike_bits = 0.0;
  const SyntheticSuite a = make_synthetic(s, 5);
  s.rho = 0.5;
  const SyntheticSuite b = make_synthetic(s, 5);
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    for (std::size_t k = 0; k < a.traces[i].tokens.size(); ++k)
      CHECK(*a.traces[i].tokens[k].surprisal == Approx(*b.traces[i].tokens[k].surprisal).epsilon(1e-12));
  }
}

TEST_CASE("reshaping a token keeps its cis contribution") {
  const SyntheticSuite suite = make_synthetic(small(20), 9);
  TokenTrace t = suite.traces[0];
  const auto before = series_from_trace(t, Measure::cis);
  const std::size_t n = suite.model.size();
  const std::size_t i = t.sentence.first + 3;
  std::vector<double> dist(n, 0.5 / static_cast<double>(n - 1));
  dist[0] = 0.5;
  const std::size_t observed = suite.model.index_of(t.tokens[i].text[0]);
  reshape_token(t, i, dist, observed);
  CHECK(*t.tokens[i].surprisal == Approx(-std::log2(dist[observed])));
  CHECK(*t.tokens[i].max_prob == Approx(0.5));
  CHECK(validate_trace(t).empty());
  const auto after = series_from_trace(t, Measure::cis);
  CHECK(after.values[i - 1] == Approx(before.values[i - 1]).epsilon(1e-12));
}
