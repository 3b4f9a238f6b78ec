#include "inlik/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "inlik/error.hpp"
#include "inlik/measures.hpp"
#include "inlik/rng.hpp"

namespace inlik {
namespace {

using Dist = std::vector<double>;

bool is_rate(double r) { return r >= 0.0 && r <= 1.0; }

// Row-stochastic source with rows of varying sharpness.
std::vector<Dist> random_source(std::size_t k, double lo, double hi, Rng& rng) {
  std::vector<Dist> rows(k + 1, Dist(k));
  for (auto& row : rows) {
    const double sharpness = rng.uniform(lo, hi);
    double total = 0.0;
    for (auto& w : row) total += (w = std::exp(sharpness * rng.normal()));
    for (auto& w : row) w /= total;
  }
  return rows;
}

std::size_t draw(const Dist& dist, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < dist.size(); ++i) {
    if (u < dist[i]) return i;
    u -= dist[i];
  }
  return dist.size() - 1;
}

std::string sample_sentence(const std::vector<Dist>& source, const std::string& vocab,
                            std::size_t length, Rng& rng) {
  std::string s;
  std::size_t prev = vocab.size();  // start row
  for (std::size_t i = 0; i < length; ++i) {
    prev = draw(source[prev], rng);
    s += vocab[prev];
  }
  return s;
}

// Scales the observed probability by 2^-bits and spreads the removed mass over
// the other symbols in proportion to their current probability.
void spike(Dist& p, std::size_t observed, double bits) {
  const double old = p[observed];
  const double now = old * std::exp2(-bits);
  const double scale = (1.0 - now) / (1.0 - old);
  for (std::size_t v = 0; v < p.size(); ++v) p[v] = v == observed ? now : p[v] * scale;
}

void flatten(Dist& p, double mix) {
  const double u = 1.0 / static_cast<double>(p.size());
  for (auto& x : p) x = (1.0 - mix) * x + mix * u;
}

// Keeps p[observed]; gives `mass` of the remainder to `competitor`.
void peak(Dist& p, std::size_t observed, std::size_t competitor, double mass) {
  const double rest = 1.0 - p[observed];
  double others = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (v != observed && v != competitor) others += p[v];
  }
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (v == observed) continue;
    p[v] = v == competitor ? mass * rest : (1.0 - mass) * rest * p[v] / others;
  }
}

// Multiplies every non-observed probability by exp(spread * N(0, 1)) and
// renormalizes them to their old total.
void reshape_rest(Dist& p, std::size_t observed, double spread, Rng& rng) {
  const double rest = 1.0 - p[observed];
  double total = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (v != observed) total += (p[v] *= std::exp(spread * rng.normal()));
  }
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (v != observed) p[v] *= rest / total;
  }
}

ExampleRecord make_record(std::string id, std::string sentence, std::size_t span_start,
                          std::size_t span_length, std::string gold) {
  ExampleRecord rec;
  rec.id = std::move(id);
  rec.sentence = std::move(sentence);
  rec.expression = CharSpan{span_start, span_start + span_length};
  rec.task = TaskKind::idiom;
  rec.gold = std::move(gold);
  return rec;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n < 2) throw Error("synthetic spec: need at least two examples");
  if (vocab.size() < 2) throw Error("synthetic spec: sentence vocabulary needs two symbols");
  std::string sorted = vocab;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error("synthetic spec: vocabulary symbols must be distinct");
  for (char c : vocab) {
    if (c == '\n' || c == '\r') throw Error("synthetic spec: vocabulary cannot hold line breaks");
  }
  if (!(source_sharpness_min >= 0.0 && source_sharpness_min <= source_sharpness_max))
    throw Error("synthetic spec: bad source sharpness range");
  if (sentence_min < 1 || sentence_min > sentence_max)
    throw Error("synthetic spec: bad sentence length range");
  if (span_length < 1 || span_length >= sentence_min)
    throw Error("synthetic spec: span must be shorter than every sentence");
  if (!(spike_bits >= 0.0 && std::isfinite(spike_bits)))
    throw Error("synthetic spec: spike magnitude must be a finite number of bits >= 0");
  if (!(rho >= 0.5 && rho <= 1.0)) throw Error("synthetic spec: rho must lie in [0.5, 1]");
  if (!(error_rate > 0.0 && error_rate < 1.0))
    throw Error("synthetic spec: error rate must lie in (0, 1)");
  if (!is_rate(context_spike_rate) || !is_rate(diffuse_rate) || !is_rate(peak_decoy_rate) ||
      !is_rate(context_peak_rate))
    throw Error("synthetic spec: decoy rates must lie in [0, 1]");
  if (!(diffuse_mix >= 0.0 && diffuse_mix < 1.0))
    throw Error("synthetic spec: diffuse mix must lie in [0, 1)");
  if (!(peak_mass >= 0.0 && peak_mass < 1.0))
    throw Error("synthetic spec: peak mass must lie in [0, 1)");
  if (!(shape_jitter >= 0.0 && shape_jitter <= 4.0))
    throw Error("synthetic spec: shape jitter must lie in [0, 4]");
  if (!(lm_alpha > 0.0)) throw Error("synthetic spec: LM smoothing must be positive");
}

void reshape_token(TokenTrace& trace, std::size_t i, const std::vector<double>& dist,
                   std::size_t observed) {
  TokenStep& step = trace.tokens.at(i);
  const double p = dist.at(observed);
  const double delta = -surprisal(p) + (step.surprisal ? *step.surprisal : 0.0);
  step.surprisal = surprisal(p);
  step.entropy = entropy(dist);
  step.kl_ref = kl_to_reference(dist, observed);
  step.max_prob = max_probability(dist);
  step.oddball = oddballness(dist, observed);
  if (i > 0 && trace.tokens[i - 1].cis_next) {
    auto& c = *trace.tokens[i - 1].cis_next;
    c = std::min(0.0, c + delta);
  }
}

SyntheticSuite make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto source = random_source(spec.vocab.size(), spec.source_sharpness_min, spec.source_sharpness_max, rng);
  const std::array<std::string, 2> golds = {"i", "l"};

  auto random_record = [&](std::string id) {
    const std::size_t length =
        spec.sentence_min + rng.index(spec.sentence_max - spec.sentence_min + 1);
    std::string sentence = sample_sentence(source, spec.vocab, length, rng);
    const std::size_t start = rng.index(length - spec.span_length + 1);
    return make_record(std::move(id), std::move(sentence), start, spec.span_length,
                       golds[rng.index(2)]);
  };

  // The LM sees filled prompts but never the evaluation sentences.
  std::string corpus = spec.vocab + '\n';
  for (std::size_t k = 0; k < spec.lm_training_sentences; ++k) {
    corpus += build_prompt(random_record("lm")).text;
    corpus += '\n';
  }
  SyntheticSuite suite{BigramModel::train(corpus, spec.lm_alpha), {}, {}, {}, {}, {}};
  const BigramModel& model = suite.model;

  std::vector<std::size_t> symbols;
  for (char c : spec.vocab) symbols.push_back(model.index_of(c));

  for (std::size_t k = 0; k < spec.n; ++k) {
    ExampleRecord rec = random_record(fmt::format("syn-{:05d}", k));
    const Prompt prompt = build_prompt(rec);
    const TokenRange sentence{prompt.sentence.begin, prompt.sentence.end - 1};
    TokenTrace trace = trace_prompt(model, prompt.text, sentence, rec.id);

    const bool error = rng.bernoulli(spec.error_rate);
    const bool planted = rng.bernoulli(error ? spec.rho : 1.0 - spec.rho);
    const std::size_t span_first = prompt.expression->begin;
    const std::size_t span_end = prompt.expression->end;

    // Current distribution and observed symbol for every sentence token.
    const std::size_t len = sentence.size();
    std::vector<Dist> dists(len);
    std::vector<std::size_t> observed(len);
    std::vector<bool> touched(len, false);
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t i = sentence.first + j;
      dists[j] = model.row_distribution(model.index_of(prompt.text[i - 1]));
      observed[j] = model.index_of(prompt.text[i]);
    }
    auto local = [&](std::size_t i) { return i - sentence.first; };
    auto context_token = [&] {
      std::size_t j = rng.index(len - spec.span_length);
      if (sentence.first + j >= span_first) j += spec.span_length;
      return sentence.first + j;
    };

    if (spec.shape_jitter > 0.0) {
      for (std::size_t j = 0; j < len; ++j) {
        reshape_rest(dists[j], observed[j], rng.uniform(0.0, spec.shape_jitter), rng);
        touched[j] = true;
      }
    }
    if (rng.bernoulli(spec.diffuse_rate)) {
      const std::size_t run = std::min(spec.diffuse_length, len);
      const std::size_t start = rng.index(len - run + 1);
      for (std::size_t j = start; j < start + run; ++j) {
        flatten(dists[j], spec.diffuse_mix);
        touched[j] = true;
      }
    }
    // Peak decoys sit on the least likely token of their region, where the
    // oddballness they cause is largest.
    auto place_peak = [&](std::size_t first, std::size_t last, bool in_span) {
      std::size_t best = len;
      for (std::size_t j = first; j <= last; ++j) {
        const bool inside = sentence.first + j >= span_first && sentence.first + j < span_end;
        if (inside != in_span) continue;
        if (best == len || dists[j][observed[j]] < dists[best][observed[best]]) best = j;
      }
      std::vector<std::size_t> rivals;
      for (auto v : symbols) {
        if (v != observed[best]) rivals.push_back(v);
      }
      peak(dists[best], observed[best], rivals[rng.index(rivals.size())], spec.peak_mass);
      touched[best] = true;
    };
    if (rng.bernoulli(spec.peak_decoy_rate)) place_peak(local(span_first), local(span_end - 1), true);
    if (rng.bernoulli(spec.context_peak_rate)) place_peak(0, len - 1, false);
    if (rng.bernoulli(spec.context_spike_rate)) {
      const std::size_t j = local(context_token());
      spike(dists[j], observed[j], spec.spike_bits);
      touched[j] = true;
    }
    // Drawn whether or not it is used, so suites that differ only in rho
    // consume the same random stream.
    const std::size_t planted_at = local(span_first + rng.index(spec.span_length));
    if (planted) {
      spike(dists[planted_at], observed[planted_at], spec.spike_bits);
      touched[planted_at] = true;
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (touched[j]) reshape_token(trace, sentence.first + j, dists[j], observed[j]);
    }

    const auto violations = validate_trace(trace);
    if (!violations.empty())
      throw Error("synthetic trace '" + rec.id + "' breaks trace invariants: " +
                  violations.front().message);

    const std::string predicted = error ? (rec.gold == "i" ? "l" : "i") : rec.gold;
    suite.predictions.push_back({rec.id, "output: " + predicted});
    suite.errors.push_back({rec.id, predicted, error});
    suite.spiked.push_back(planted);
    suite.traces.push_back(std::move(trace));
    suite.dataset.push_back(std::move(rec));
  }
  return suite;
}

std::vector<int> error_vector(const std::vector<ErrorLabel>& labels) {
  std::vector<int> e;
  e.reserve(labels.size());
  for (const auto& l : labels) e.push_back(l.error ? 1 : 0);
  return e;
}

}  // namespace inlik
