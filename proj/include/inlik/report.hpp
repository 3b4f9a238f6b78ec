#pragma once

// Report files: per-run JSON and side-by-side comparison tables. Scores are
// error-class F1 in percentage points; ablation deltas are ablated - full.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "inlik/learn.hpp"
#include "inlik/measures.hpp"

namespace inlik {

struct AblationResult {
  Measure dropped = Measure::spr;
  EvalReport full;
  EvalReport ablated;

  /// ablated - full, in F1 points.
  double delta() const;
};

nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
nlohmann::json ablation_to_json(const AblationResult& a);
AblationResult ablation_from_json(const nlohmann::json& j);

void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

/// Percentage points with 10 significant digits; `signed_value` forces a sign.
std::string format_points(double fraction_or_points, bool signed_value = false);

struct ReportTables {
  std::string text;
  std::string csv;
};

/// One row per classifier, one column per feature set (first-seen order). An
/// ablation block follows when `ablations` is non-empty. Throws on no reports.
ReportTables render_tables(const std::vector<EvalReport>& reports,
                           const std::vector<AblationResult>& ablations = {});

/// Writes `<stem>.txt` and `<stem>.csv` under `dir`.
void emit_report(const std::vector<EvalReport>& reports, const std::vector<AblationResult>& ablations,
                 const std::filesystem::path& dir, const std::string& stem = "report");

}  // namespace inlik
