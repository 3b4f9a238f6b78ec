#include "inlik/experiment.hpp"

#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "inlik/classifier_io.hpp"
#include "inlik/error.hpp"

namespace inlik {
namespace {

using nlohmann::json;

std::string file_tag(FeatureSet s) {
  std::string name(feature_set_name(s));
  for (auto& c : name) {
    if (c == ':') c = '-';
  }
  return name;
}

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key) || j[key].is_null()) return {};
  std::filesystem::path p = j[key].get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

std::string_view trace_source_name(TraceSource s) {
  switch (s) {
    case TraceSource::file: return "file";
    case TraceSource::remote: return "remote";
    case TraceSource::toy: return "toy";
    case TraceSource::synthetic: return "synthetic";
  }
  return "?";
}

TraceSource parse_trace_source(std::string_view name) {
  for (auto s : {TraceSource::file, TraceSource::remote, TraceSource::toy, TraceSource::synthetic}) {
    if (trace_source_name(s) == name) return s;
  }
  throw Error("unknown trace source '" + std::string(name) + "' (expected file, remote, toy or synthetic)");
}

void ExperimentConfig::validate() const {
  if (source != TraceSource::synthetic) {
    if (dataset.empty()) throw Error("config: dataset path is required");
    if (labels.empty() && predictions.empty())
      throw Error("config: either labels or predictions is required");
  }
  if (source == TraceSource::file && traces.empty()) throw Error("config: file source needs traces");
  if (source == TraceSource::toy && toy_model.empty() && toy_corpus.empty())
    throw Error("config: toy source needs toy.model or toy.corpus");
  if (source == TraceSource::remote && remote.endpoint.empty())
    throw Error("config: remote source needs remote.endpoint");
  if (source == TraceSource::synthetic) synthetic.validate();
  if (feature_sets.empty()) throw Error("config: no feature sets");
  if (classifiers.empty()) throw Error("config: no classifiers");
  if (seeds.empty()) throw Error("config: no seeds");
  if (!(protocol.tau > 0.0 && protocol.tau < 1.0)) throw Error("config: tau must lie in (0, 1)");
  if (!(cws_gamma >= 0.0)) throw Error("config: cws gamma must be >= 0");
  protocol.mlp.validate();
}

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  ExperimentConfig c;
  try {
    if (j.contains("source")) c.source = parse_trace_source(j["source"].get<std::string>());
    c.dataset = resolve(j, "dataset", base);
    c.traces = resolve(j, "traces", base);
    c.labels = resolve(j, "labels", base);
    c.predictions = resolve(j, "predictions", base);
    if (j.contains("unparseable")) {
      const auto p = j["unparseable"].get<std::string>();
      if (p == "error") c.unparseable = UnparseablePolicy::count_as_error;
      else if (p == "drop") c.unparseable = UnparseablePolicy::drop;
      else throw Error("config: unparseable must be 'error' or 'drop'");
    }
    if (j.contains("toy")) {
      const auto& t = j["toy"];
      c.toy_model = resolve(t, "model", base);
      c.toy_corpus = resolve(t, "corpus", base);
      c.toy_alpha = t.value("alpha", c.toy_alpha);
    }
    if (j.contains("remote")) {
      const auto& r = j["remote"];
      auto& rc = c.remote;
      rc.endpoint = r.value("endpoint", rc.endpoint);
      rc.model = r.value("model", rc.model);
      rc.top_k = r.value("top_k", rc.top_k);
      rc.concurrency = r.value("concurrency", rc.concurrency);
      rc.max_retries = r.value("max_retries", rc.max_retries);
      rc.backoff_seconds = r.value("backoff_seconds", rc.backoff_seconds);
      rc.timeout_seconds = r.value("timeout_seconds", rc.timeout_seconds);
      rc.api_key_env = r.value("api_key_env", rc.api_key_env);
      if (auto log = resolve(r, "log", base); !log.empty()) rc.log_path = log;
    }
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      auto& sp = c.synthetic;
      sp.n = s.value("n", sp.n);
      sp.vocab = s.value("vocab", sp.vocab);
      sp.source_sharpness_min = s.value("source_sharpness_min", sp.source_sharpness_min);
      sp.source_sharpness_max = s.value("source_sharpness_max", sp.source_sharpness_max);
      sp.sentence_min = s.value("sentence_min", sp.sentence_min);
      sp.sentence_max = s.value("sentence_max", sp.sentence_max);
      sp.span_length = s.value("span_length", sp.span_length);
      sp.spike_bits = s.value("spike_bits", sp.spike_bits);
      sp.rho = s.value("rho", sp.rho);
      sp.error_rate = s.value("error_rate", sp.error_rate);
      sp.context_spike_rate = s.value("context_spike_rate", sp.context_spike_rate);
      sp.diffuse_rate = s.value("diffuse_rate", sp.diffuse_rate);
      sp.diffuse_length = s.value("diffuse_length", sp.diffuse_length);
      sp.diffuse_mix = s.value("diffuse_mix", sp.diffuse_mix);
      sp.peak_decoy_rate = s.value("peak_decoy_rate", sp.peak_decoy_rate);
      sp.peak_mass = s.value("peak_mass", sp.peak_mass);
      sp.context_peak_rate = s.value("context_peak_rate", sp.context_peak_rate);
      sp.shape_jitter = s.value("shape_jitter", sp.shape_jitter);
      sp.lm_alpha = s.value("lm_alpha", sp.lm_alpha);
      sp.lm_training_sentences = s.value("lm_training_sentences", sp.lm_training_sentences);
      c.synthetic_seed = s.value("seed", c.synthetic_seed);
    }
    if (j.contains("feature_set")) c.feature_sets = {parse_feature_set(j["feature_set"].get<std::string>())};
    if (j.contains("feature_sets")) {
      c.feature_sets.clear();
      for (const auto& s : j["feature_sets"]) c.feature_sets.push_back(parse_feature_set(s.get<std::string>()));
    }
    if (j.contains("classifier")) c.classifiers = {parse_model_kind(j["classifier"].get<std::string>())};
    if (j.contains("classifiers")) {
      c.classifiers.clear();
      for (const auto& s : j["classifiers"]) c.classifiers.push_back(parse_model_kind(s.get<std::string>()));
    }
    c.ablation = j.value("ablation", c.ablation);
    c.cws_gamma = j.value("cws_gamma", c.cws_gamma);
    c.protocol.tau = j.value("tau", c.protocol.tau);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("logreg")) {
      const auto& l = j["logreg"];
      c.protocol.logreg.l2 = l.value("l2", c.protocol.logreg.l2);
      c.protocol.logreg.max_iter = l.value("max_iter", c.protocol.logreg.max_iter);
      c.protocol.logreg.tol = l.value("tol", c.protocol.logreg.tol);
    }
    if (j.contains("mlp")) {
      const auto& m = j["mlp"];
      c.protocol.mlp.hidden = m.value("hidden", c.protocol.mlp.hidden);
      c.protocol.mlp.epochs = m.value("epochs", c.protocol.mlp.epochs);
      c.protocol.mlp.batch_size = m.value("batch_size", c.protocol.mlp.batch_size);
      c.protocol.mlp.learning_rate = m.value("learning_rate", c.protocol.mlp.learning_rate);
    }
    if (j.contains("output_dir")) c.output_dir = resolve(j, "output_dir", base);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::vector<TokenTrace> toy_traces(const BigramModel& model, const std::vector<ExampleRecord>& records,
                                   std::size_t workers) {
  std::vector<TokenTrace> traces(records.size());
  parallel_for(
      records.size(),
      [&](std::size_t i) {
        const Prompt p = build_prompt(records[i]);
        traces[i] = trace_prompt(model, p.text, {p.sentence.begin, p.sentence.end - 1}, records[i].id);
      },
      workers);
  return traces;
}

FeatureTable featurize_records(const std::vector<ExampleRecord>& records,
                               const std::vector<TokenTrace>& traces, FeatureSet set,
                               const CwsConfig& cws) {
  std::unordered_map<std::string, const TokenTrace*> by_id;
  for (const auto& t : traces) {
    if (!by_id.emplace(t.example_id, &t).second) throw Error("duplicate trace for '" + t.example_id + "'");
  }
  std::vector<FeatureVector> vectors(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& rec = records[i];
    auto it = by_id.find(rec.id);
    if (it == by_id.end()) throw Error("no trace for example '" + rec.id + "'");
    std::optional<CharSpan> expression;
    if (set == FeatureSet::full) {
      expression = build_prompt(rec).expression;
      if (!expression) throw Error("example '" + rec.id + "' has no expression span for the full feature set");
    }
    try {
      vectors[i] = featurize(*it->second, expression, set, cws);
    } catch (const std::exception& e) {
      throw Error("example '" + rec.id + "': " + e.what());
    }
  });
  return make_table(vectors, uses_validity_columns(set));
}

std::vector<int> attach_labels(FeatureTable& table, const std::vector<ErrorLabel>& labels) {
  std::unordered_map<std::string, int> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.example_id, l.error ? 1 : 0).second)
      throw Error("duplicate error label for '" + l.example_id + "'");
  }
  std::unordered_set<std::string> ids(table.ids.begin(), table.ids.end());
  for (const auto& l : labels) {
    if (!ids.count(l.example_id)) throw Error("error label for unknown example '" + l.example_id + "'");
  }
  std::vector<int> y;
  std::vector<Eigen::Index> keep;
  std::vector<std::string> kept_ids;
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    auto it = by_id.find(table.ids[r]);
    if (it == by_id.end()) continue;
    y.push_back(it->second);
    keep.push_back(static_cast<Eigen::Index>(r));
    kept_ids.push_back(table.ids[r]);
  }
  if (y.empty()) throw Error("no labeled examples");
  if (keep.size() != table.ids.size()) {
    Eigen::MatrixXd values = table.values(keep, Eigen::all);
    table.values = std::move(values);
    table.ids = std::move(kept_ids);
  }
  return y;
}

std::vector<AblationResult> ablation_grid(const FeatureTable& full, std::span<const int> labels,
                                          ModelKind kind, std::span<const std::uint64_t> seeds,
                                          const ProtocolConfig& config, const EvalReport& full_report) {
  std::vector<AblationResult> out;
  for (Measure m : kFeatureMeasures) {
    const FeatureTable reduced = ablate(full, m);
    EvalReport r = run_protocol(reduced.values, labels, kind, seeds, config,
                                "full-" + std::string(measure_name(m)));
    out.push_back({m, full_report, std::move(r)});
  }
  return out;
}

ExperimentResult cli_run(const ExperimentConfig& config) {
  stage("config", [&] {
    config.validate();
    std::filesystem::create_directories(config.output_dir);
  });
  const auto& dir = config.output_dir;

  std::vector<ExampleRecord> records;
  std::vector<TokenTrace> traces;
  std::vector<ErrorLabel> labels;

  if (config.source == TraceSource::synthetic) {
    stage("synth", [&] {
      auto suite = make_synthetic(config.synthetic, config.synthetic_seed);
      records = std::move(suite.dataset);
      traces = std::move(suite.traces);
      labels = std::move(suite.errors);
      save_dataset(dir / "dataset.jsonl", records, DatasetFormat::jsonl);
      save_predictions(dir / "predictions.jsonl", suite.predictions);
    });
  } else {
    records = stage("load-dataset", [&] { return load_dataset(config.dataset); });
    labels = stage("label", [&] {
      if (!config.labels.empty()) return load_error_labels(config.labels);
      const auto labeling = label_errors(records, load_predictions(config.predictions), config.unparseable);
      return labeling.labels;
    });
    traces = stage("trace", [&] {
      switch (config.source) {
        case TraceSource::file: {
          auto t = load_traces(config.traces);
          for (const auto& tr : t) {
            if (auto v = validate_trace(tr); !v.empty())
              throw Error("trace '" + tr.example_id + "' is invalid: " + v.front().message);
          }
          return t;
        }
        case TraceSource::toy: {
          const BigramModel model = !config.toy_model.empty()
                                        ? BigramModel::load(config.toy_model)
                                        : [&] {
                                            std::ifstream in(config.toy_corpus, std::ios::binary);
                                            if (!in) throw Error("cannot open " + config.toy_corpus.string());
                                            std::string text((std::istreambuf_iterator<char>(in)), {});
                                            return BigramModel::train(text, config.toy_alpha);
                                          }();
          return toy_traces(model, records);
        }
        case TraceSource::remote: {
          std::vector<TokenTrace> t;
          json failures = json::array();
          for (auto& o : fetch_remote_traces(config.remote, remote_requests(records))) {
            if (o.trace) t.push_back(std::move(*o.trace));
            else failures.push_back({{"example_id", o.example_id}, {"error", o.error}});
          }
          if (!failures.empty()) write_json(dir / "trace_errors.json", failures);
          // Examples whose trace failed drop out of the run.
          std::unordered_set<std::string> ok;
          for (const auto& tr : t) ok.insert(tr.example_id);
          std::erase_if(records, [&](const ExampleRecord& r) { return !ok.count(r.id); });
          if (records.empty()) throw Error("no example could be traced");
          return t;
        }
        case TraceSource::synthetic: break;
      }
      throw Error("unreachable trace source");
    });
  }
  if (config.source != TraceSource::file) stage("trace", [&] { save_traces(dir / "traces.jsonl", traces); });
  stage("label", [&] { save_error_labels(dir / "labels.jsonl", labels); });

  // Labels for examples that dropped out (failed remote traces) are ignored.
  {
    std::unordered_set<std::string> present;
    for (const auto& r : records) present.insert(r.id);
    std::erase_if(labels, [&](const ErrorLabel& l) { return !present.count(l.example_id); });
  }

  const CwsConfig cws{config.cws_gamma};
  ExperimentResult result;
  std::map<ModelKind, EvalReport> full_reports;
  std::optional<FeatureTable> full_table;
  std::vector<int> full_labels;

  for (FeatureSet set : config.feature_sets) {
    const std::string tag = file_tag(set);
    FeatureTable table = stage("featurize", [&] { return featurize_records(records, traces, set, cws); });
    std::vector<int> y = stage("featurize", [&] {
      auto labels_for_rows = attach_labels(table, labels);
      save_feature_table(dir / ("features-" + tag + ".csv"), table);
      return labels_for_rows;
    });
    for (ModelKind kind : config.classifiers) {
      const std::string run = tag + "-" + std::string(model_kind_name(kind));
      EvalReport report = stage("eval", [&] {
        return run_protocol(table.values, y, kind, config.seeds, config.protocol,
                            std::string(feature_set_name(set)));
      });
      stage("train", [&] {
        save_artifact(dir / ("model-" + run + ".json"),
                      train_artifact(table, y, kind, config.protocol, config.seeds.front()));
      });
      stage("report", [&] { save_report(dir / ("report-" + run + ".json"), report); });
      if (set == FeatureSet::full) full_reports[kind] = report;
      result.reports.push_back(std::move(report));
    }
    if (set == FeatureSet::full) {
      full_table = std::move(table);
      full_labels = std::move(y);
    }
  }

  if (config.ablation) {
    stage("ablate", [&] {
      if (!full_table) {
        full_table = featurize_records(records, traces, FeatureSet::full, cws);
        full_labels = attach_labels(*full_table, labels);
      }
      json all = json::array();
      for (ModelKind kind : config.classifiers) {
        if (!full_reports.count(kind))
          full_reports[kind] = run_protocol(full_table->values, full_labels, kind, config.seeds,
                                            config.protocol, "full");
        for (auto& a : ablation_grid(*full_table, full_labels, kind, config.seeds, config.protocol,
                                     full_reports[kind])) {
          all.push_back(ablation_to_json(a));
          result.ablations.push_back(std::move(a));
        }
      }
      write_json(dir / "ablation.json", all);
    });
  }
  stage("report", [&] { emit_report(result.reports, result.ablations, dir); });
  return result;
}

}  // namespace inlik
