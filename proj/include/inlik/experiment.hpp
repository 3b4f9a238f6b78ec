#pragma once

// End-to-end runs: acquire traces, label errors, featurize, evaluate every
// (feature set, classifier) pair over the seeds, optionally ablate each
// measure from the full set, and write every artifact to one directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "inlik/corpus.hpp"
#include "inlik/feature_io.hpp"
#include "inlik/learn.hpp"
#include "inlik/parallel.hpp"
#include "inlik/remote.hpp"
#include "inlik/report.hpp"
#include "inlik/synthetic.hpp"
#include "inlik/toy_lm.hpp"

namespace inlik {

/// An error tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class TraceSource { file, remote, toy, synthetic };
std::string_view trace_source_name(TraceSource s);
TraceSource parse_trace_source(std::string_view name);

struct ExperimentConfig {
  TraceSource source = TraceSource::toy;
  std::filesystem::path dataset;
  std::filesystem::path traces;       // file source
  std::filesystem::path labels;       // error labels JSONL, or
  std::filesystem::path predictions;  // raw answers to label
  UnparseablePolicy unparseable = UnparseablePolicy::count_as_error;

  std::filesystem::path toy_model;   // toy source: a saved model, or
  std::filesystem::path toy_corpus;  // a corpus to train one on
  double toy_alpha = 1.0;

  RemoteConfig remote;
  SyntheticSpec synthetic;
  std::uint64_t synthetic_seed = 7;

  std::vector<FeatureSet> feature_sets{FeatureSet::full};
  std::vector<ModelKind> classifiers{ModelKind::logreg};
  bool ablation = false;
  double cws_gamma = 1.0;
  std::vector<std::uint64_t> seeds{kDefaultSeeds.begin(), kDefaultSeeds.end()};
  ProtocolConfig protocol;  // tau lives here
  std::filesystem::path output_dir = "out";

  void validate() const;
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Traces every record's prompt with the toy LM, in record order.
std::vector<TokenTrace> toy_traces(const BigramModel& model, const std::vector<ExampleRecord>& records,
                                   std::size_t workers = default_workers());

/// One row per record, in record order; each record needs a trace with its id.
FeatureTable featurize_records(const std::vector<ExampleRecord>& records,
                               const std::vector<TokenTrace>& traces, FeatureSet set,
                               const CwsConfig& cws = {});

/// Keeps the rows that have a label and returns the labels in row order.
/// Throws when a label names an unknown example or nothing is labeled.
std::vector<int> attach_labels(FeatureTable& table, const std::vector<ErrorLabel>& labels);

/// Drops each feature measure from `full` in turn and reruns the protocol.
std::vector<AblationResult> ablation_grid(const FeatureTable& full, std::span<const int> labels,
                                          ModelKind kind, std::span<const std::uint64_t> seeds,
                                          const ProtocolConfig& config, const EvalReport& full_report);

struct ExperimentResult {
  std::vector<EvalReport> reports;
  std::vector<AblationResult> ablations;
};

/// Runs the configured experiment and writes its outputs. Throws StageError.
ExperimentResult cli_run(const ExperimentConfig& config);

}  // namespace inlik
