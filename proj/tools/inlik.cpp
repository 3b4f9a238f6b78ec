// Command-line front end for the pipeline.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "inlik/classifier_io.hpp"
#include "inlik/corpus.hpp"
#include "inlik/error.hpp"
#include "inlik/experiment.hpp"
#include "inlik/feature_io.hpp"
#include "inlik/numfmt.hpp"
#include "inlik/remote.hpp"
#include "inlik/report.hpp"
#include "inlik/synthetic.hpp"
#include "inlik/toy_lm.hpp"
#include "inlik/trace.hpp"

namespace fs = std::filesystem;
using namespace inlik;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void print_metrics(const std::string& title, const Metrics& m) {
  fmt::print("{}\n", title);
  fmt::print("  error   P {}  R {}  F1 {}  (n={})\n", format_points(100 * m.error.precision),
             format_points(100 * m.error.recall), format_points(100 * m.error.f1), m.error.support);
  fmt::print("  correct P {}  R {}  F1 {}  (n={})\n", format_points(100 * m.correct.precision),
             format_points(100 * m.correct.recall), format_points(100 * m.correct.f1), m.correct.support);
  fmt::print("  accuracy {}\n", format_points(100 * m.accuracy));
}

struct LabeledFeatures {
  FeatureTable table;
  std::vector<int> y;
};

LabeledFeatures labeled(const fs::path& features, const fs::path& labels) {
  LabeledFeatures lf{load_feature_table(features), {}};
  lf.y = attach_labels(lf.table, load_error_labels(labels));
  return lf;
}

std::vector<std::uint64_t> default_seeds() { return {kDefaultSeeds.begin(), kDefaultSeeds.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Input-likelihood features for predicting model errors"};
  app.require_subcommand(1);

  // validate
  fs::path v_traces;
  bool v_quiet = false;
  auto* validate = app.add_subcommand("validate", "Check trace files against the trace invariants");
  validate->add_option("traces", v_traces, "Trace JSONL")->required();
  validate->add_flag("--quiet", v_quiet, "Only set the exit code");

  // trace-toy
  fs::path tt_dataset, tt_model, tt_corpus, tt_out, tt_save_model;
  double tt_alpha = 1.0;
  auto* trace_toy = app.add_subcommand("trace-toy", "Score prompts with the bigram toy LM");
  trace_toy->add_option("--dataset", tt_dataset)->required();
  auto* tt_model_opt = trace_toy->add_option("--model", tt_model, "Saved toy model JSON");
  trace_toy->add_option("--corpus", tt_corpus, "Text to train a toy model on")->excludes(tt_model_opt);
  trace_toy->add_option("--alpha", tt_alpha, "Additive smoothing when training");
  trace_toy->add_option("--save-model", tt_save_model);
  trace_toy->add_option("--out", tt_out)->required();

  // trace-remote
  fs::path tr_dataset, tr_out;
  RemoteConfig tr_config;
  std::string tr_log;
  auto* trace_remote = app.add_subcommand("trace-remote", "Score prompts on a completions endpoint");
  trace_remote->add_option("--dataset", tr_dataset)->required();
  trace_remote->add_option("--endpoint", tr_config.endpoint)->required();
  trace_remote->add_option("--model", tr_config.model)->required();
  trace_remote->add_option("--top-k", tr_config.top_k, "Alternatives per position (0: observed only)");
  trace_remote->add_option("--concurrency", tr_config.concurrency);
  trace_remote->add_option("--retries", tr_config.max_retries);
  trace_remote->add_option("--api-key-env", tr_config.api_key_env, "Variable holding the API key");
  trace_remote->add_option("--log", tr_log, "Request/response log (JSONL)");
  trace_remote->add_option("--out", tr_out)->required();

  // label
  fs::path l_dataset, l_predictions, l_out;
  bool l_drop = false;
  auto* label = app.add_subcommand("label", "Turn raw answers into error labels");
  label->add_option("--dataset", l_dataset)->required();
  label->add_option("--predictions", l_predictions)->required();
  label->add_flag("--drop-unparseable", l_drop);
  label->add_option("--out", l_out)->required();

  // featurize
  fs::path f_dataset, f_traces, f_out;
  std::string f_set = "full";
  double f_gamma = 1.0;
  auto* featurize_cmd = app.add_subcommand("featurize", "Build a feature CSV and manifest");
  featurize_cmd->add_option("--dataset", f_dataset)->required();
  featurize_cmd->add_option("--traces", f_traces)->required();
  featurize_cmd->add_option("--set", f_set, "full, sentence or baseline:{logprob,maxprob,odd,combined}");
  featurize_cmd->add_option("--gamma", f_gamma, "CWS weight");
  featurize_cmd->add_option("--out", f_out)->required();

  // train
  fs::path t_features, t_labels, t_out;
  std::string t_kind = "logreg";
  double t_tau = 0.5;
  std::uint64_t t_seed = kDefaultSeeds.front();
  auto* train = app.add_subcommand("train", "Fit a classifier on every row and save it");
  train->add_option("--features", t_features)->required();
  train->add_option("--labels", t_labels)->required();
  train->add_option("--classifier", t_kind);
  train->add_option("--tau", t_tau);
  train->add_option("--seed", t_seed);
  train->add_option("--out", t_out)->required();

  // eval
  fs::path e_features, e_labels, e_model, e_out, e_scores;
  std::string e_kind = "logreg";
  double e_tau = 0.5;
  std::vector<std::uint64_t> e_seeds = default_seeds();
  auto* eval = app.add_subcommand("eval", "Run the split protocol, or score with a saved model");
  eval->add_option("--features", e_features)->required();
  eval->add_option("--labels", e_labels);
  eval->add_option("--model", e_model, "Score with this model instead of running the protocol");
  eval->add_option("--classifier", e_kind);
  eval->add_option("--tau", e_tau);
  eval->add_option("--seeds", e_seeds)->delimiter(',');
  eval->add_option("--out", e_out, "Report JSON");
  eval->add_option("--scores", e_scores, "Per-example probabilities (CSV)");

  // ablate
  fs::path a_features, a_labels, a_out;
  std::string a_kind = "logreg";
  double a_tau = 0.5;
  std::vector<std::uint64_t> a_seeds = default_seeds();
  auto* ablate_cmd = app.add_subcommand("ablate", "Drop each measure from the full set in turn");
  ablate_cmd->add_option("--features", a_features, "Full feature CSV")->required();
  ablate_cmd->add_option("--labels", a_labels)->required();
  ablate_cmd->add_option("--classifier", a_kind);
  ablate_cmd->add_option("--tau", a_tau);
  ablate_cmd->add_option("--seeds", a_seeds)->delimiter(',');
  ablate_cmd->add_option("--out-dir", a_out)->required();

  // synth
  SyntheticSpec s_spec;
  std::uint64_t s_seed = 7;
  fs::path s_out;
  auto* synth = app.add_subcommand("synth", "Generate a planted-signal synthetic suite");
  synth->add_option("--n", s_spec.n);
  synth->add_option("--rho", s_spec.rho);
  synth->add_option("--spike-bits", s_spec.spike_bits);
  synth->add_option("--span-length", s_spec.span_length);
  synth->add_option("--vocab", s_spec.vocab);
  synth->add_option("--error-rate", s_spec.error_rate);
  synth->add_option("--context-spike-rate", s_spec.context_spike_rate);
  synth->add_option("--diffuse-rate", s_spec.diffuse_rate);
  synth->add_option("--peak-decoy-rate", s_spec.peak_decoy_rate);
  synth->add_option("--shape-jitter", s_spec.shape_jitter);
  synth->add_option("--seed", s_seed);
  synth->add_option("--out-dir", s_out)->required();

  // report
  std::vector<fs::path> r_reports;
  fs::path r_ablation, r_out;
  std::string r_stem = "report";
  auto* report = app.add_subcommand("report", "Render comparison tables from report JSON files");
  report->add_option("reports", r_reports, "Report JSON files")->required();
  report->add_option("--ablation", r_ablation, "ablation.json from ablate or run");
  report->add_option("--out-dir", r_out)->required();
  report->add_option("--stem", r_stem);

  // run
  fs::path c_config;
  auto* run = app.add_subcommand("run", "Run a whole experiment from a JSON config");
  run->add_option("config", c_config)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      std::size_t bad = 0;
      const auto traces = load_traces(v_traces);
      for (const auto& t : traces) {
        for (const auto& v : validate_trace(t)) {
          ++bad;
          if (v_quiet) continue;
          if (v.token == Violation::kWholeTrace) fmt::print("{}: {}\n", t.example_id, v.message);
          else fmt::print("{}: token {}: {}\n", t.example_id, v.token, v.message);
        }
      }
      if (!v_quiet) fmt::print("{} traces, {} violations\n", traces.size(), bad);
      return bad ? 1 : 0;
    }
    if (*trace_toy) {
      if (tt_model.empty() && tt_corpus.empty()) throw Error("give --model or --corpus");
      const auto model = tt_model.empty() ? BigramModel::train(read_file(tt_corpus), tt_alpha)
                                          : BigramModel::load(tt_model);
      if (!tt_save_model.empty()) model.save(tt_save_model);
      save_traces(tt_out, toy_traces(model, load_dataset(tt_dataset)));
      return 0;
    }
    if (*trace_remote) {
      if (!tr_log.empty()) tr_config.log_path = tr_log;
      std::vector<TokenTrace> traces;
      std::size_t failed = 0;
      for (auto& o : fetch_remote_traces(tr_config, remote_requests(load_dataset(tr_dataset)))) {
        if (o.trace) {
          traces.push_back(std::move(*o.trace));
        } else {
          ++failed;
          fmt::print(stderr, "{}: {}\n", o.example_id, o.error);
        }
      }
      save_traces(tr_out, traces);
      return failed ? 2 : 0;
    }
    if (*label) {
      const auto labeling = label_errors(load_dataset(l_dataset), load_predictions(l_predictions),
                                         l_drop ? UnparseablePolicy::drop : UnparseablePolicy::count_as_error);
      save_error_labels(l_out, labeling.labels);
      fmt::print("accuracy {} over {} examples ({} dropped)\n", format_number(labeling.accuracy),
                 labeling.labels.size(), labeling.dropped);
      return 0;
    }
    if (*featurize_cmd) {
      const auto set = parse_feature_set(f_set);
      const auto table = featurize_records(load_dataset(f_dataset), load_traces(f_traces), set, CwsConfig{f_gamma});
      save_feature_table(f_out, table);
      return 0;
    }
    if (*train) {
      auto lf = labeled(t_features, t_labels);
      ProtocolConfig config;
      config.tau = t_tau;
      save_artifact(t_out, train_artifact(lf.table, lf.y, parse_model_kind(t_kind), config, t_seed));
      return 0;
    }
    if (*eval) {
      if (!e_model.empty()) {
        auto table = load_feature_table(e_features);
        std::vector<int> y;
        if (!e_labels.empty()) y = attach_labels(table, load_error_labels(e_labels));
        const auto artifact = load_artifact(e_model);
        const Vector p = score(artifact, table);
        if (!e_scores.empty()) {
          std::ofstream out(e_scores, std::ios::binary);
          out << "example_id,probability,predicted\n";
          const auto labels = decide(p, artifact.tau);
          for (std::size_t i = 0; i < table.ids.size(); ++i)
            out << table.ids[i] << ',' << format_number(p[static_cast<Eigen::Index>(i)]) << ',' << labels[i] << '\n';
        }
        if (!y.empty()) print_metrics("saved model", evaluate(decide(p, artifact.tau), y));
        return 0;
      }
      if (e_labels.empty()) throw Error("--labels is required without --model");
      auto lf = labeled(e_features, e_labels);
      ProtocolConfig config;
      config.tau = e_tau;
      const auto rep = run_protocol(lf.table.values, lf.y, parse_model_kind(e_kind), e_seeds, config,
                                    e_features.stem().string());
      print_metrics(fmt::format("{} / {} over {} seeds", rep.name, model_kind_name(rep.kind), rep.runs.size()),
                    rep.mean);
      if (!e_out.empty()) save_report(e_out, rep);
      return 0;
    }
    if (*ablate_cmd) {
      auto lf = labeled(a_features, a_labels);
      ProtocolConfig config;
      config.tau = a_tau;
      const auto kind = parse_model_kind(a_kind);
      const auto full = run_protocol(lf.table.values, lf.y, kind, a_seeds, config, "full");
      const auto grid = ablation_grid(lf.table, lf.y, kind, a_seeds, config, full);
      fs::create_directories(a_out);
      nlohmann::json all = nlohmann::json::array();
      for (const auto& a : grid) all.push_back(ablation_to_json(a));
      std::ofstream(a_out / "ablation.json", std::ios::binary) << all.dump(2) << '\n';
      emit_report({full}, grid, a_out);
      std::cout << render_tables({full}, grid).text;
      return 0;
    }
    if (*synth) {
      const auto suite = make_synthetic(s_spec, s_seed);
      fs::create_directories(s_out);
      save_dataset(s_out / "dataset.jsonl", suite.dataset, DatasetFormat::jsonl);
      save_traces(s_out / "traces.jsonl", suite.traces);
      save_predictions(s_out / "predictions.jsonl", suite.predictions);
      save_error_labels(s_out / "labels.jsonl", suite.errors);
      suite.model.save(s_out / "toy_model.json");
      return 0;
    }
    if (*report) {
      std::vector<EvalReport> reports;
      for (const auto& p : r_reports) reports.push_back(load_report(p));
      std::vector<AblationResult> ablations;
      if (!r_ablation.empty()) {
        for (const auto& a : nlohmann::json::parse(read_file(r_ablation))) ablations.push_back(ablation_from_json(a));
      }
      emit_report(reports, ablations, r_out, r_stem);
      std::cout << render_tables(reports, ablations).text;
      return 0;
    }
    if (*run) {
      const auto result = cli_run(load_config(c_config));
      std::cout << render_tables(result.reports, result.ablations).text;
      return 0;
    }
  } catch (const StageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
