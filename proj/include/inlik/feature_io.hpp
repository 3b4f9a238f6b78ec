#pragma once

// Rectangular feature matrices and their on-disk form: a CSV whose header is
// the manifest (followed by `<name>_valid` 0/1 columns for the structured
// sets) and a JSON sidecar describing every column.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "inlik/features.hpp"

namespace inlik {

struct FeatureTable {
  std::vector<std::string> ids;
  Manifest manifest;
  bool validity_columns = false;
  Eigen::MatrixXd values;  // examples x (manifest.size() [+ manifest.size()])

  std::vector<std::string> column_names() const;
  std::size_t rows() const { return ids.size(); }
};

/// Throws unless every vector shares one manifest.
FeatureTable make_table(const std::vector<FeatureVector>& vectors, bool validity_columns);

/// Validity flags are appended for the structured sets, never for baselines.
bool uses_validity_columns(FeatureSet set);

/// The spec for a published feature name (full, sentence or baseline manifests).
FeatureSpec spec_for_name(std::string_view name);

/// Drops the features (and their validity columns) tagged with `measure`.
FeatureTable ablate(const FeatureTable& table, Measure measure, bool allow_missing = false);

/// Hex SHA-256 over the column names, one per line.
std::string manifest_hash(const std::vector<std::string>& columns);
std::string manifest_hash(const FeatureTable& table);

nlohmann::json manifest_json(const FeatureTable& table);
std::filesystem::path manifest_path_for(const std::filesystem::path& csv_path);

/// Writes the CSV and its `.manifest.json` sidecar.
void save_feature_table(const std::filesystem::path& csv_path, const FeatureTable& table);
FeatureTable load_feature_table(const std::filesystem::path& csv_path);

}  // namespace inlik
