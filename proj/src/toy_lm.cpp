#include "inlik/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "inlik/error.hpp"
#include "inlik/measures.hpp"

namespace inlik {

namespace {

std::string printable(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (u >= 0x20 && u < 0x7f) return std::string("'") + c + "'";
  return "byte " + std::to_string(u);
}

}  // namespace

BigramModel::BigramModel(std::string vocab, double alpha) : vocab_(std::move(vocab)), alpha_(alpha) {
  if (vocab_.empty()) throw Error("empty vocabulary");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw Error("smoothing alpha must be positive");
  index_.fill(-1);
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(vocab_[i])];
    if (slot >= 0) throw Error("duplicate vocabulary symbol " + printable(vocab_[i]));
    slot = static_cast<int>(i);
  }
  counts_.assign((vocab_.size() + 1) * vocab_.size(), 0);
  row_totals_.assign(vocab_.size() + 1, 0);
}

BigramModel BigramModel::train(std::string_view corpus, double alpha) {
  std::array<bool, 256> seen{};
  for (char c : corpus) {
    if (c != '\n' && c != '\r') seen[static_cast<unsigned char>(c)] = true;
  }
  std::string vocab;
  for (std::size_t b = 0; b < seen.size(); ++b) {
    if (seen[b]) vocab += static_cast<char>(b);
  }
  BigramModel model(std::move(vocab), alpha);
  std::size_t start = 0;
  while (start <= corpus.size()) {
    std::size_t end = corpus.find('\n', start);
    if (end == std::string_view::npos) end = corpus.size();
    std::string_view line = corpus.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) model.observe(line);
    start = end + 1;
  }
  return model;
}

void BigramModel::observe(std::string_view sequence) {
  std::size_t prev = start_row();
  for (char c : sequence) {
    const std::size_t cur = index_of(c);
    ++counts_[prev * size() + cur];
    ++row_totals_[prev];
    prev = cur;
  }
}

std::size_t BigramModel::index_of(char symbol) const {
  const int i = index_[static_cast<unsigned char>(symbol)];
  if (i < 0) throw Error("symbol " + printable(symbol) + " is not in the vocabulary");
  return static_cast<std::size_t>(i);
}

std::uint64_t BigramModel::count(std::size_t from, std::size_t to) const {
  return counts_.at(from * size() + to);
}

void BigramModel::set_count(std::size_t from, std::size_t to, std::uint64_t value) {
  auto& slot = counts_.at(from * size() + to);
  row_totals_[from] = row_totals_[from] - slot + value;
  slot = value;
}

std::vector<double> BigramModel::row_distribution(std::size_t from) const {
  if (from > start_row()) throw Error("row index out of range");
  const double denom = static_cast<double>(row_totals_[from]) + alpha_ * static_cast<double>(size());
  std::vector<double> dist(size());
  for (std::size_t v = 0; v < size(); ++v) {
    dist[v] = (static_cast<double>(counts_[from * size() + v]) + alpha_) / denom;
  }
  return dist;
}

std::vector<double> BigramModel::next_distribution(std::string_view prefix) const {
  for (char c : prefix) index_of(c);
  return row_distribution(prefix.empty() ? start_row() : index_of(prefix.back()));
}

nlohmann::json BigramModel::to_json() const {
  nlohmann::json vocab = nlohmann::json::array();
  for (char c : vocab_) vocab.push_back(std::string(1, c));
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t r = 0; r <= size(); ++r) {
    counts.push_back(std::vector<std::uint64_t>(counts_.begin() + static_cast<std::ptrdiff_t>(r * size()),
                                                counts_.begin() + static_cast<std::ptrdiff_t>((r + 1) * size())));
  }
  return {{"vocab", vocab}, {"counts", counts}, {"alpha", alpha_}};
}

BigramModel BigramModel::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("vocab") || !j.contains("counts"))
    throw Error("model JSON needs 'vocab' and 'counts'");
  std::string vocab;
  for (const auto& s : j["vocab"]) {
    if (!s.is_string() || s.get<std::string>().size() != 1)
      throw Error("model vocab entries must be one-byte strings");
    vocab += s.get<std::string>()[0];
  }
  BigramModel model(vocab, j.value("alpha", 1.0));
  const auto& counts = j["counts"];
  if (!counts.is_array() || counts.size() != model.size() + 1)
    throw Error("model counts must have |vocab| + 1 rows (last row = start of sequence)");
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (!counts[r].is_array() || counts[r].size() != model.size())
      throw Error("model counts row " + std::to_string(r) + " must have |vocab| entries");
    for (std::size_t c = 0; c < model.size(); ++c) {
      model.set_count(r, c, counts[r][c].get<std::uint64_t>());
    }
  }
  return model;
}

void BigramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

BigramModel BigramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return from_json(nlohmann::json::parse(in));
}

TokenTrace trace_prompt(const BigramModel& model, std::string_view text, TokenRange sentence,
                        std::string example_id) {
  if (text.empty()) throw Error("cannot trace an empty prompt");
  if (sentence.first > sentence.last || sentence.last >= text.size())
    throw Error("sentence range outside the prompt");

  std::vector<std::size_t> ids(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) ids[i] = model.index_of(text[i]);

  TokenTrace trace;
  trace.example_id = std::move(example_id);
  trace.sentence = sentence;
  trace.tokens.resize(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const std::size_t row = i == 0 ? model.start_row() : ids[i - 1];
    const auto dist = model.row_distribution(row);
    TokenStep& step = trace.tokens[i];
    step.text = std::string(1, text[i]);
    step.span = {i, i + 1};
    step.surprisal = surprisal(dist[ids[i]]);
    step.entropy = entropy(dist);
    step.kl_ref = kl_to_reference(dist, ids[i]);
    step.max_prob = max_probability(dist);
    step.oddball = oddballness(dist, ids[i]);
    if (i + 1 < text.size()) {
      // With t_i deleted, t_{i+1} is predicted from t_{i-1} (or the start row).
      const std::size_t deleted_row = i == 0 ? model.start_row() : ids[i - 1];
      step.cis_next = std::log2(model.row_distribution(deleted_row)[ids[i + 1]]);
    }
  }
  return trace;
}

}  // namespace inlik
