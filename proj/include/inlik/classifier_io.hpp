#pragma once

// Trained classifier artifacts: the standardizer, the fitted model and the
// manifest hash of the feature columns it was trained on.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "inlik/feature_io.hpp"
#include "inlik/learn.hpp"

namespace inlik {

struct ClassifierArtifact {
  ModelKind kind = ModelKind::logreg;
  Standardizer standardizer;
  std::variant<LogRegModel, MlpModel> model;
  std::string manifest_hash;
  double tau = 0.5;
};

/// Fits the standardizer and model on every row of `table`.
ClassifierArtifact train_artifact(const FeatureTable& table, std::span<const int> labels,
                                  ModelKind kind, const ProtocolConfig& config, std::uint64_t seed);

/// Throws when the table's manifest hash differs from the artifact's.
Vector score(const ClassifierArtifact& artifact, const FeatureTable& table);
std::vector<int> classify(const ClassifierArtifact& artifact, const FeatureTable& table);

nlohmann::json artifact_to_json(const ClassifierArtifact& artifact);
ClassifierArtifact artifact_from_json(const nlohmann::json& j);
void save_artifact(const std::filesystem::path& path, const ClassifierArtifact& artifact);
ClassifierArtifact load_artifact(const std::filesystem::path& path);

}  // namespace inlik
