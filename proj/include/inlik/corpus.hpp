#pragma once

// Dataset records, zero-shot prompt assembly, answer parsing and error labels.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace inlik {

/// Half-open byte range [begin, end).
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool overlaps(const CharSpan& other) const { return begin < other.end && other.begin < end; }
  CharSpan shifted(std::size_t offset) const { return {begin + offset, end + offset}; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

enum class TaskKind { idiom, metaphor, metonymy, multiple_choice };

std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);

/// One dataset instance. `expression` indexes into `sentence`.
struct ExampleRecord {
  std::string id;
  std::string sentence;
  std::optional<CharSpan> expression;
  TaskKind task = TaskKind::idiom;
  std::optional<std::string> instruction;
  std::string gold;
  std::vector<std::string> choices;

  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

/// Label alphabet for the record's task ({i,l}, {m,l}, or the choice strings).
std::vector<std::string> label_alphabet(const ExampleRecord& rec);

/// Throws inlik::Error describing the first broken invariant.
void check_record(const ExampleRecord& rec);

enum class DatasetFormat { jsonl, csv };

DatasetFormat format_from_path(const std::filesystem::path& path);

std::vector<ExampleRecord> read_dataset(std::istream& in, DatasetFormat format);
std::vector<ExampleRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format);
std::vector<ExampleRecord> load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const std::vector<ExampleRecord>& records,
                   DatasetFormat format);
void save_dataset(const std::filesystem::path& path, const std::vector<ExampleRecord>& records,
                  DatasetFormat format);

/// Assembled prompt text with the sentence (and expression, when annotated)
/// located in prompt coordinates.
struct Prompt {
  std::string text;
  CharSpan sentence;
  std::optional<CharSpan> expression;
};

Prompt build_prompt(const ExampleRecord& rec);

/// The first label token after the last "output:" marker, normalized.
/// std::nullopt means the answer could not be parsed.
std::optional<std::string> parse_prediction(std::string_view raw_output,
                                            const ExampleRecord& rec);

inline constexpr std::string_view kUnparseable = "unparseable";

/// Raw generation for one example, as produced by a model run.
struct RawPrediction {
  std::string example_id;
  std::string raw_output;
};

std::vector<RawPrediction> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::filesystem::path& path, const std::vector<RawPrediction>& preds);

struct ErrorLabel {
  std::string example_id;
  std::string predicted;  // kUnparseable when parsing failed
  bool error = false;
};

enum class UnparseablePolicy { count_as_error, drop };

struct Labeling {
  std::vector<ErrorLabel> labels;
  double accuracy = 0.0;
  std::size_t dropped = 0;
};

/// Aligns predictions to records by id and scores them against gold.
Labeling label_errors(const std::vector<ExampleRecord>& records,
                      const std::vector<RawPrediction>& predictions,
                      UnparseablePolicy policy = UnparseablePolicy::count_as_error);

std::vector<ErrorLabel> load_error_labels(const std::filesystem::path& path);
void save_error_labels(const std::filesystem::path& path, const std::vector<ErrorLabel>& labels);

}  // namespace inlik
