#include "inlik/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "inlik/csv.hpp"
#include "inlik/error.hpp"
#include "inlik/numfmt.hpp"

namespace inlik {
namespace {

using nlohmann::json;

json class_json(const ClassMetrics& c) {
  return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

ClassMetrics class_from_json(const json& j) {
  ClassMetrics c;
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.support = j.at("support").get<std::size_t>();
  return c;
}

template <typename T>
std::size_t position(std::vector<T>& items, const T& item) {
  auto it = std::find(items.begin(), items.end(), item);
  if (it != items.end()) return static_cast<std::size_t>(it - items.begin());
  items.push_back(item);
  return items.size() - 1;
}

// Left column left-aligned, the rest right-aligned.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) line += "  ";
      line += c == 0 ? fmt::format("{:<{}}", r[c], width[c]) : fmt::format("{:>{}}", r[c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string csv_text(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

}  // namespace

double AblationResult::delta() const { return 100.0 * (ablated.mean.error.f1 - full.mean.error.f1); }

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"error", class_json(m.error)},
          {"correct", class_json(m.correct)},
          {"accuracy", m.accuracy},
          {"n", m.n}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.error = class_from_json(j.at("error"));
  m.correct = class_from_json(j.at("correct"));
  m.accuracy = j.at("accuracy").get<double>();
  m.n = j.at("n").get<std::size_t>();
  return m;
}

nlohmann::json report_to_json(const EvalReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) runs.push_back({{"seed", r.seed}, {"metrics", metrics_to_json(r.metrics)}});
  return {{"name", report.name},
          {"classifier", std::string(model_kind_name(report.kind))},
          {"runs", std::move(runs)},
          {"mean", metrics_to_json(report.mean)}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.name = j.at("name").get<std::string>();
    r.kind = parse_model_kind(j.at("classifier").get<std::string>());
    for (const auto& run : j.at("runs"))
      r.runs.push_back({run.at("seed").get<std::uint64_t>(), metrics_from_json(run.at("metrics"))});
    r.mean = metrics_from_json(j.at("mean"));
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
}

nlohmann::json ablation_to_json(const AblationResult& a) {
  return {{"dropped", std::string(measure_name(a.dropped))},
          {"delta_f1_points", a.delta()},
          {"full", report_to_json(a.full)},
          {"ablated", report_to_json(a.ablated)}};
}

AblationResult ablation_from_json(const nlohmann::json& j) {
  try {
    return {parse_measure(j.at("dropped").get<std::string>()), report_from_json(j.at("full")),
            report_from_json(j.at("ablated"))};
  } catch (const json::exception& e) {
    throw Error(std::string("ablation report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << report_to_json(report).dump(2) << '\n';
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

std::string format_points(double value, bool signed_value) {
  std::string s = format_number(value);
  if (signed_value && value >= 0.0 && s.front() != '-') s = "+" + s;
  return s;
}

ReportTables render_tables(const std::vector<EvalReport>& reports,
                           const std::vector<AblationResult>& ablations) {
  if (reports.empty()) throw Error("no reports to render");
  std::vector<std::string> sets;
  std::vector<ModelKind> kinds;
  for (const auto& r : reports) {
    position(sets, r.name);
    position(kinds, r.kind);
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"classifier"};
  header.insert(header.end(), sets.begin(), sets.end());
  rows.push_back(header);
  for (ModelKind k : kinds) {
    std::vector<std::string> row(sets.size() + 1, "");
    row[0] = std::string(model_kind_name(k));
    for (const auto& r : reports) {
      if (r.kind == k) row[1 + position(sets, r.name)] = format_points(100.0 * r.mean.error.f1);
    }
    rows.push_back(std::move(row));
  }

  ReportTables t;
  t.text = "error-class F1 (points, mean over seeds)\n" + align(rows);
  t.csv = csv_text(rows);
  if (ablations.empty()) return t;

  std::vector<Measure> dropped;
  std::vector<ModelKind> ablation_kinds;
  for (const auto& a : ablations) {
    position(dropped, a.dropped);
    position(ablation_kinds, a.ablated.kind);
  }
  std::vector<std::vector<std::string>> delta_rows;
  std::vector<std::string> delta_header{"classifier", "full"};
  for (Measure m : dropped) delta_header.push_back("-" + std::string(measure_name(m)));
  delta_rows.push_back(delta_header);
  for (ModelKind k : ablation_kinds) {
    std::vector<std::string> row(dropped.size() + 2, "");
    row[0] = std::string(model_kind_name(k));
    for (const auto& a : ablations) {
      if (a.ablated.kind != k) continue;
      row[1] = format_points(100.0 * a.full.mean.error.f1);
      row[2 + position(dropped, a.dropped)] = format_points(a.delta(), true);
    }
    delta_rows.push_back(std::move(row));
  }
  t.text += "\nablation delta (ablated - full, F1 points)\n" + align(delta_rows);
  t.csv += "\n" + csv_text(delta_rows);
  return t;
}

void emit_report(const std::vector<EvalReport>& reports, const std::vector<AblationResult>& ablations,
                 const std::filesystem::path& dir, const std::string& stem) {
  const auto t = render_tables(reports, ablations);
  std::filesystem::create_directories(dir);
  for (const auto& [ext, body] : {std::pair{".txt", &t.text}, std::pair{".csv", &t.csv}}) {
    const auto path = dir / (stem + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << *body;
  }
}

}  // namespace inlik
