#pragma once

// Add-alpha smoothed character bigram model. Small enough that every next-token
// distribution is exactly computable, which makes it the reference producer
// for traces in tests and synthetic experiments.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "inlik/trace.hpp"

namespace inlik {

class BigramModel {
 public:
  /// `vocab` lists distinct byte symbols; at most 256. All counts start at zero.
  explicit BigramModel(std::string vocab, double alpha = 1.0);

  /// Vocabulary = sorted distinct bytes of `corpus` (newlines excluded); each
  /// line is a sequence whose first symbol is counted in the start row.
  static BigramModel train(std::string_view corpus, double alpha = 1.0);

  /// Adds counts for one sequence, starting from the start row.
  void observe(std::string_view sequence);

  const std::string& vocab() const { return vocab_; }
  std::size_t size() const { return vocab_.size(); }
  double alpha() const { return alpha_; }

  /// Index of `symbol` in the vocabulary; throws for unknown symbols.
  std::size_t index_of(char symbol) const;

  /// Row `from` is a vocabulary index, or start_row() for the empty prefix.
  std::size_t start_row() const { return vocab_.size(); }
  std::uint64_t count(std::size_t from, std::size_t to) const;
  void set_count(std::size_t from, std::size_t to, std::uint64_t value);

  std::vector<double> row_distribution(std::size_t from) const;

  /// P(. | prefix). Depends only on the last symbol of `prefix`.
  std::vector<double> next_distribution(std::string_view prefix) const;

  nlohmann::json to_json() const;
  static BigramModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static BigramModel load(const std::filesystem::path& path);

 private:
  std::string vocab_;
  std::array<int, 256> index_{};
  double alpha_;
  // (|V| + 1) x |V|, row-major; the final row is the start row.
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> row_totals_;
};

/// Scores `text` one byte per token: every TokenStep field is filled from the
/// exact distribution, with cis_next at i rescoring t_{i+1} after deleting t_i.
TokenTrace trace_prompt(const BigramModel& model, std::string_view text, TokenRange sentence,
                        std::string example_id = {});

}  // namespace inlik
