#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inlik/error.hpp"
#include "inlik/measures.hpp"
#include "inlik/toy_lm.hpp"

using namespace inlik;
using doctest::Approx;

TEST_CASE("surprisal") {
  CHECK(surprisal(0.25) == 2.0);
  CHECK(surprisal(1.0) == 0.0);
  CHECK_THROWS_AS(surprisal(0.0), Error);
  CHECK_THROWS_AS(surprisal(-0.1), Error);
  CHECK(surprisal(0.0, ZeroProbability::clamp) == Approx(-std::log2(kClampFloor)));
}

TEST_CASE("entropy") {
  CHECK(entropy(std::vector<double>(8, 0.125)) == Approx(3.0));
  CHECK(entropy(std::vector<double>{0, 0, 1}) == 0.0);
  CHECK(entropy(std::vector<double>{0.5, 0.25, 0.25}) == Approx(1.5));
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, 0.6}), Error);
}

TEST_CASE("kl to the peaked reference") {
  const std::vector<double> q{0.1 / 3, 0.9, 0.1 / 3, 0.1 / 3};
  CHECK(kl_to_reference(q, 1) == Approx(0.0).epsilon(1e-12));
  CHECK(kl_to_reference(std::vector<double>{0, 1, 0}, 1) == Approx(std::log2(1 / 0.9)));
  CHECK(kl_to_reference(std::vector<double>{0, 1, 0}, 1) == Approx(0.152).epsilon(1e-3));
  CHECK_THROWS_AS(kl_to_reference(std::vector<double>{1.0}, 0), Error);

  // Brute force over a toy row.
  const BigramModel m = BigramModel::train("abcabcaab\nbca\n");
  const auto row = m.row_distribution(m.index_of('a'));
  double want = 0.0;
  for (std::size_t v = 0; v < row.size(); ++v) {
    const double qv = v == 2 ? 0.9 : 0.05;
    want += row[v] * std::log2(row[v] / qv);
  }
  CHECK(kl_to_reference(row, 2) == Approx(want).epsilon(1e-12));
}

TEST_CASE("cws") {
  CHECK(cws(0.3, 1.7, {0.0}) == surprisal(0.3));
  CHECK(cws(0.9, 0.0) == Approx(0.152).epsilon(1e-3));
  CHECK(cws(0.5, 0.25, {2.0}) == Approx(1.5));
}

TEST_CASE("cis") {
  CHECK(cis(-2.0, -2.0) == 0.0);
  CHECK(cis(-1.0, -3.0) == 2.0);

  const BigramModel uniform("abcd");
  const TokenTrace u = trace_prompt(uniform, "abcdab", {0, 5});
  const auto su = series_from_trace(u, Measure::cis);
  for (std::size_t i = 0; i + 1 < su.size(); ++i) CHECK(su.values[i] == 0.0);
  CHECK_FALSE(su.available.back());

  const BigramModel m = BigramModel::train("abac\nbcab\n");
  const TokenTrace t = trace_prompt(m, "aaa", {0, 2});
  CHECK(series_from_trace(t, Measure::cis).values[1] == 0.0);
}

TEST_CASE("bigram cis rescoring uses the row before the deleted token") {
  const BigramModel m = BigramModel::train("abcbca\ncab\n");
  const std::string text = "bcab";
  const TokenTrace t = trace_prompt(m, text, {0, 3});
  const auto s = series_from_trace(t, Measure::cis);
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    const double full = std::log2(m.next_distribution(text.substr(0, i + 1))[m.index_of(text[i + 1])]);
    const double cut = std::log2(m.row_distribution(m.index_of(text[i - 1]))[m.index_of(text[i + 1])]);
    CHECK(s.values[i] == Approx(full - cut).epsilon(1e-12));
  }
}

TEST_CASE("oddballness") {
  CHECK(oddballness(std::vector<double>{0.5, 0.3, 0.2}, 0) == 0.0);
  CHECK(oddballness(std::vector<double>{0.6, 0.4, 0.0}, 2) == Approx(1.0));
  CHECK(oddballness(std::vector<double>{0.5, 0.3, 0.2}, 2) == Approx(0.4));
}

TEST_CASE("series availability") {
  const BigramModel m = BigramModel::train("abab\n");
  TokenTrace t = trace_prompt(m, "abab", {0, 3});
  for (auto& s : t.tokens) {
    s.entropy.reset();
    s.kl_ref.reset();
    s.cis_next.reset();
    s.oddball.reset();
  }
  CHECK(series_from_trace(t, Measure::spr).available == std::vector<bool>(4, true));
  CHECK(series_from_trace(t, Measure::max_prob).size() == 4);
  try {
    series_from_trace(t, Measure::entropy);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("entropy unavailable") != std::string::npos);
  }
  CHECK_THROWS_AS(series_from_trace(t, Measure::cws), Error);
}

TEST_CASE("cws with gamma 0 is the surprisal series") {
  const BigramModel m = BigramModel::train("abcab\nbca\n");
  const TokenTrace t = trace_prompt(m, "cabbac", {0, 5});
  CHECK(series_from_trace(t, Measure::cws, {0.0}).values == series_from_trace(t, Measure::spr).values);
}

TEST_CASE("measure names") {
  for (Measure m : {Measure::spr, Measure::entropy, Measure::cws, Measure::cis, Measure::max_prob,
                    Measure::oddball})
    CHECK(parse_measure(measure_name(m)) == m);
  CHECK_THROWS(parse_measure("pmi"));
}

// --- toy model ---------------------------------------------------------------

TEST_CASE("untrained model is uniform") {
  const BigramModel m("wxyz");
  for (double p : m.next_distribution("")) CHECK(p == 0.25);
  for (double p : m.next_distribution("wxy")) CHECK(p == 0.25);
  const TokenTrace t = trace_prompt(m, "wxyz", {0, 3});
  for (const auto& s : t.tokens) CHECK(*s.entropy == Approx(2.0));
}

TEST_CASE("trained rows follow the add-alpha formula") {
  // "ab" x 4: a->b four times, b->a three times, start->a once.
  const BigramModel m = BigramModel::train("abababab");
  const auto a = m.index_of('a');
  const auto b = m.index_of('b');
  CHECK(m.row_distribution(a)[b] == Approx(5.0 / 6.0));
  CHECK(m.row_distribution(a)[b] > m.row_distribution(a)[a]);
  CHECK(m.row_distribution(b)[a] == Approx(4.0 / 5.0));
  CHECK(m.row_distribution(m.start_row())[a] == Approx(2.0 / 3.0));

  const TokenTrace t = trace_prompt(m, "abab", {0, 3});
  const double want[] = {-std::log2(2.0 / 3.0), -std::log2(5.0 / 6.0), -std::log2(4.0 / 5.0),
                         -std::log2(5.0 / 6.0)};
  for (int i = 0; i < 4; ++i) CHECK(*t.tokens[i].surprisal == Approx(want[i]).epsilon(1e-14));
  CHECK(*t.tokens[0].cis_next == Approx(std::log2(1.0 / 3.0)).epsilon(1e-14));
  CHECK(*t.tokens[1].cis_next == Approx(std::log2(1.0 / 6.0)).epsilon(1e-14));
}

TEST_CASE("next distribution depends only on the last symbol") {
  const BigramModel m = BigramModel::train("abcabcab\nbbca\n", 0.5);
  CHECK(m.next_distribution("aab") == m.next_distribution("cb"));
  CHECK(m.next_distribution("b") == m.row_distribution(m.index_of('b')));
  CHECK_THROWS_AS(m.next_distribution("aq"), Error);
  for (std::size_t r = 0; r <= m.size(); ++r) {
    double total = 0.0;
    for (double p : m.row_distribution(r)) total += p;
    CHECK(total == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("single-token prompt has no successor score") {
  const BigramModel m("ab");
  const TokenTrace t = trace_prompt(m, "a", {0, 0});
  REQUIRE(t.tokens.size() == 1);
  CHECK_FALSE(t.tokens[0].cis_next.has_value());
}

TEST_CASE("model construction rejects bad input") {
  CHECK_THROWS_AS(BigramModel("aa"), Error);
  CHECK_THROWS_AS(BigramModel("", 1.0), Error);
  CHECK_THROWS_AS(BigramModel("ab", 0.0), Error);
}

TEST_CASE("model json round-trip") {
  const BigramModel m = BigramModel::train("abcab\nbca\n", 0.25);
  const BigramModel back = BigramModel::from_json(m.to_json());
  CHECK(back.vocab() == m.vocab());
  CHECK(back.alpha() == m.alpha());
  for (std::size_t r = 0; r <= m.size(); ++r) CHECK(back.row_distribution(r) == m.row_distribution(r));
}

TEST_CASE("toy traces are valid and bounded") {
  const BigramModel m = BigramModel::train("the cat sat on the mat\nthe dog ate\n");
  const TokenTrace t = trace_prompt(m, "the mat ate the cat", {4, 10});
  CHECK(validate_trace(t).empty());
  const double hmax = std::log2(static_cast<double>(m.size()));
  for (const auto& s : t.tokens) {
    CHECK(*s.entropy <= hmax + 1e-12);
    CHECK(*s.oddball >= 0.0);
    CHECK(*s.oddball <= 1.0);
  }
}
