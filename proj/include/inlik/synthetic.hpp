#pragma once

// Planted-signal synthetic experiments. Sentences are sampled from a random
// bigram source, scored by a toy LM trained on the filled prompts, and the
// resulting traces are edited: with probability rho an error example gets a
// surprisal spike inside its annotated span (1 - rho for a correct one).
// Label-independent decoys keep the coarser feature sets honest:
//  - context spikes raise sentence-level maxima outside the span;
//  - diffuse stretches flatten the distribution and raise mean surprisal;
//  - peak decoys move mass onto a competitor while keeping the observed
//    probability, which raises KL, CWS and oddballness but not surprisal;
//  - shape jitter re-sharpens the non-observed mass of every sentence token,
//    so entropy and KL (and with them CWS) vary at fixed surprisal.

#include <cstdint>
#include <string>
#include <vector>

#include "inlik/corpus.hpp"
#include "inlik/toy_lm.hpp"
#include "inlik/trace.hpp"

namespace inlik {

struct SyntheticSpec {
  std::size_t n = 2000;
  std::string vocab = "abcdefghijklmnop";  // sentence symbols
  double source_sharpness_min = 0.1;  // spread of the log-weights of a source row
  double source_sharpness_max = 0.4;
  std::size_t sentence_min = 24;
  std::size_t sentence_max = 40;
  std::size_t span_length = 4;
  double spike_bits = 4.5;
  double rho = 0.9;
  double error_rate = 0.35;
  double context_spike_rate = 0.2;
  double diffuse_rate = 0.5;
  std::size_t diffuse_length = 8;
  double diffuse_mix = 0.6;  // weight of the uniform component
  double peak_decoy_rate = 0.7;    // inside the span
  double context_peak_rate = 0.7;  // outside the span
  double peak_mass = 0.999;  // share of the non-observed mass given to the competitor
  double shape_jitter = 4.0;  // largest log-scale noise on the non-observed mass
  double lm_alpha = 0.1;
  std::size_t lm_training_sentences = 400;

  /// Throws on rho outside [0.5, 1], rates outside [0, 1] and impossible shapes.
  void validate() const;
};

struct SyntheticSuite {
  BigramModel model;
  std::vector<ExampleRecord> dataset;
  std::vector<TokenTrace> traces;
  std::vector<ErrorLabel> errors;
  std::vector<RawPrediction> predictions;  // answers that reproduce `errors`
  std::vector<bool> spiked;                // a span spike was planted
};

SyntheticSuite make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

std::vector<int> error_vector(const std::vector<ErrorLabel>& labels);

/// Replaces the distribution behind token `i` and recomputes its scalars. The
/// deleted-prefix score of the token is shifted by the same log-probability
/// change, so CIS does not see the edit.
void reshape_token(TokenTrace& trace, std::size_t i, const std::vector<double>& dist,
                   std::size_t observed);

}  // namespace inlik
