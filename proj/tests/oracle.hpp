#pragma once

// Reference recomputation for toy-model traces. Bigram probabilities are exact
// rationals; logarithms are taken at 50 decimal digits. Everything here is
// written from the set definitions, without calling into the library's measure
// or feature code.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "inlik/toy_lm.hpp"

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using Real = boost::multiprecision::cpp_bin_float_50;

/// The rational number a double holds, bit for bit.
inline Rational exact(double x) {
  int exp = 0;
  const double mant = std::frexp(x, &exp);
  // 53 bits of mantissa as an integer.
  const auto scaled = static_cast<long long>(std::ldexp(mant, 53));
  Rational r(scaled);
  exp -= 53;
  Rational two_pow(1);
  for (int k = 0; k < (exp < 0 ? -exp : exp); ++k) two_pow *= 2;
  if (exp < 0) return r / two_pow;
  return r * two_pow;
}

inline Real real(const Rational& q) {
  return Real(boost::multiprecision::numerator(q)) / Real(boost::multiprecision::denominator(q));
}

inline Real log2(const Rational& q) { return boost::multiprecision::log(real(q)) / boost::multiprecision::log(Real(2)); }

struct ExactModel {
  std::string vocab;
  // rows[u][v] = P(v | u); row vocab.size() is the start row.
  std::vector<std::vector<Rational>> rows;

  explicit ExactModel(const inlik::BigramModel& m) : vocab(m.vocab()) {
    const std::size_t n = vocab.size();
    const Rational alpha = exact(m.alpha());
    for (std::size_t u = 0; u <= n; ++u) {
      Rational total(0);
      for (std::size_t v = 0; v < n; ++v) total += Rational(m.count(u, v));
      std::vector<Rational> row;
      for (std::size_t v = 0; v < n; ++v)
        row.push_back((Rational(m.count(u, v)) + alpha) / (total + alpha * n));
      rows.push_back(std::move(row));
    }
  }

  std::size_t symbol(char c) const { return vocab.find(c); }
  std::size_t start() const { return vocab.size(); }
};

// Measure name -> per-position value; nullopt where undefined.
using Series = std::map<std::string, std::vector<std::optional<Real>>>;

inline Series series(const ExactModel& m, std::string_view text, const Rational& gamma) {
  const std::size_t n = m.vocab.size();
  const Rational q_obs(9, 10);
  const Rational q_rest = Rational(1, 10) / Rational(n - 1);
  Series out;
  for (const char* name : {"spr", "entropy", "cws", "cis", "max_prob", "oddball"})
    out[name].assign(text.size(), std::nullopt);

  auto row_before = [&](std::size_t i) { return i == 0 ? m.start() : m.symbol(text[i - 1]); };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& p = m.rows[row_before(i)];
    const std::size_t obs = m.symbol(text[i]);

    const Real spr = -log2(p[obs]);
    Real h = 0;
    Real kl = 0;
    Rational top(0);
    Rational surplus(0);
    for (std::size_t v = 0; v < n; ++v) {
      h -= real(p[v]) * log2(p[v]);
      kl += real(p[v]) * (log2(p[v]) - log2(v == obs ? q_obs : q_rest));
      if (p[v] > top) top = p[v];
      if (p[v] > p[obs]) surplus += p[v] - p[obs];
    }
    out["spr"][i] = spr;
    out["entropy"][i] = h;
    out["cws"][i] = spr + real(gamma) * kl;
    out["max_prob"][i] = real(top);
    out["oddball"][i] = real(surplus);
    if (i + 1 < text.size()) {
      const std::size_t next = m.symbol(text[i + 1]);
      out["cis"][i] = log2(m.rows[obs][next]) - log2(m.rows[row_before(i)][next]);
    }
  }
  return out;
}

// Feature name -> value; nullopt marks an invalid feature.
using Features = std::map<std::string, std::optional<Real>>;

/// Every full-vector feature for a sentence [first, last] and span [a, b] in
/// token coordinates.
inline Features features(const Series& s, std::size_t first, std::size_t last, std::size_t a,
                         std::size_t b) {
  Features f;
  auto in_span = [&](std::size_t i) { return a <= i && i <= b; };

  for (const char* m : {"spr", "entropy", "cws", "cis"}) {
    const auto& v = s.at(m);
    auto have = [&](std::size_t i) { return i < v.size() && v[i].has_value(); };
    const std::string pre = std::string(m) + ".";

    std::map<std::string, std::vector<std::size_t>> sets;
    for (std::size_t i = first; i <= last; ++i) {
      sets["sentence"].push_back(i);
      if (in_span(i)) sets["expression"].push_back(i);
      else sets["context"].push_back(i);
    }
    sets["boundary"];
    if (a > first) sets["boundary"].push_back(a - 1);
    if (b < last) sets["boundary"].push_back(b + 1);

    for (const char* g : {"sentence", "expression", "boundary", "context"}) {
      std::vector<Real> xs;
      for (auto i : sets[g])
        if (have(i)) xs.push_back(*v[i]);
      const std::string key = pre + g + ".";
      if (xs.empty()) {
        for (const char* agg : {"mean", "max", "min", "std"}) f[key + agg] = std::nullopt;
        continue;
      }
      Real sum = 0, hi = xs[0], lo = xs[0];
      for (const auto& x : xs) {
        sum += x;
        if (x > hi) hi = x;
        if (x < lo) lo = x;
      }
      const Real mean = sum / xs.size();
      Real ss = 0;
      for (const auto& x : xs) ss += (x - mean) * (x - mean);
      f[key + "mean"] = mean;
      f[key + "max"] = hi;
      f[key + "min"] = lo;
      f[key + "std"] = boost::multiprecision::sqrt(ss / xs.size());
    }

    std::vector<std::size_t> span_avail;
    for (std::size_t i = a; i <= b; ++i)
      if (have(i)) span_avail.push_back(i);

    if (span_avail.empty()) {
      f[pre + "expression.monotonic_decrease"] = std::nullopt;
      f[pre + "expression.spike_count"] = std::nullopt;
    } else {
      bool decreasing = true;
      for (std::size_t x = 0; x < span_avail.size(); ++x)
        for (std::size_t y = x + 1; y < span_avail.size(); ++y)
          if (!(*v[span_avail[x]] > *v[span_avail[y]])) decreasing = false;
      f[pre + "expression.monotonic_decrease"] = Real(decreasing ? 1 : 0);

      int spikes = 0;
      for (auto i : span_avail) {
        if (i <= first || i + 1 > last) continue;
        if (have(i - 1) && have(i + 1) && *v[i] > *v[i - 1] && *v[i] > *v[i + 1]) ++spikes;
      }
      f[pre + "expression.spike_count"] = Real(spikes);
    }

    if (b + 1 <= last && have(b) && have(b + 1)) f[pre + "boundary.boundary_shift"] = *v[b + 1] - *v[b];
    else f[pre + "boundary.boundary_shift"] = std::nullopt;

    std::optional<std::size_t> arg_hi, arg_lo;
    for (std::size_t i = first; i <= last; ++i) {
      if (!have(i)) continue;
      if (!arg_hi || *v[i] > *v[*arg_hi]) arg_hi = i;
      if (!arg_lo || *v[i] < *v[*arg_lo]) arg_lo = i;
    }
    if (arg_hi) {
      const Real len = Real(last - first + 1);
      f[pre + "sentence.peak_in_span"] = Real(in_span(*arg_hi) ? 1 : 0);
      f[pre + "sentence.p_min"] = Real(*arg_lo - first + 1) / len;
      f[pre + "sentence.p_max"] = Real(*arg_hi - first + 1) / len;
    } else {
      f[pre + "sentence.peak_in_span"] = std::nullopt;
      f[pre + "sentence.p_min"] = std::nullopt;
      f[pre + "sentence.p_max"] = std::nullopt;
    }

    if (std::string(m) == "spr") {
      std::optional<Real> top;
      Real rest = 0;
      for (std::size_t i = first; i <= last; ++i) {
        if (!have(i)) continue;
        if (in_span(i)) {
          if (!top || *v[i] > *top) top = *v[i];
        } else {
          rest += *v[i];
        }
      }
      if (top) f["spr.expression.contrast_ratio"] = *top / (rest + real(exact(1e-6)));
      else f["spr.expression.contrast_ratio"] = std::nullopt;
    }
  }
  return f;
}

struct Baselines {
  Real mean_log_prob;
  Real mean_max_token_prob;
  Real max_oddballness;
};

/// Max-probability skips the first sentence position, whose distribution was
/// conditioned on no sentence token.
inline Baselines baselines(const Series& s, std::size_t first, std::size_t last) {
  Baselines out;
  Real lp = 0, mp = 0;
  Real odd = *s.at("oddball")[first];
  for (std::size_t i = first; i <= last; ++i) {
    lp -= *s.at("spr")[i];
    if (i > first) mp += *s.at("max_prob")[i];
    if (*s.at("oddball")[i] > odd) odd = *s.at("oddball")[i];
  }
  out.mean_log_prob = lp / Real(last - first + 1);
  out.mean_max_token_prob = last > first ? mp / Real(last - first) : Real(0);
  out.max_oddballness = odd;
  return out;
}

}  // namespace oracle
