#include "inlik/classifier_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "inlik/error.hpp"

namespace inlik {
namespace {

using nlohmann::json;

json flat(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

Matrix unflat(const json& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(rows * cols))
    throw Error(std::string("model artifact: '") + what + "' has the wrong length");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[k++].get<double>();
  }
  return m;
}

Vector unflat(const json& a, const char* what) {
  if (!a.is_array()) throw Error(std::string("model artifact: '") + what + "' must be an array");
  return unflat(a, static_cast<Eigen::Index>(a.size()), 1, what);
}

}  // namespace

ClassifierArtifact train_artifact(const FeatureTable& table, std::span<const int> labels,
                                  ModelKind kind, const ProtocolConfig& config, std::uint64_t seed) {
  ClassifierArtifact a;
  a.kind = kind;
  a.tau = config.tau;
  a.manifest_hash = manifest_hash(table);
  a.standardizer = Standardizer::fit(table.values);
  const Matrix x = a.standardizer.transform(table.values);
  if (kind == ModelKind::logreg) a.model = fit_logreg(x, labels, config.logreg);
  else a.model = fit_mlp(x, labels, config.mlp, seed);
  return a;
}

Vector score(const ClassifierArtifact& artifact, const FeatureTable& table) {
  const auto hash = manifest_hash(table);
  if (hash != artifact.manifest_hash)
    throw Error("feature manifest hash " + hash + " does not match the model's " +
                artifact.manifest_hash);
  const Matrix x = artifact.standardizer.transform(table.values);
  return std::visit([&](const auto& m) { return predict_proba(m, x); }, artifact.model);
}

std::vector<int> classify(const ClassifierArtifact& artifact, const FeatureTable& table) {
  return decide(score(artifact, table), artifact.tau);
}

nlohmann::json artifact_to_json(const ClassifierArtifact& artifact) {
  json j;
  j["kind"] = std::string(model_kind_name(artifact.kind));
  j["manifest_hash"] = artifact.manifest_hash;
  j["tau"] = artifact.tau;
  j["standardizer"] = {{"mean", flat(artifact.standardizer.mean())},
                       {"scale", flat(artifact.standardizer.scale())}};
  json p;
  if (const auto* lr = std::get_if<LogRegModel>(&artifact.model)) {
    p["weights"] = flat(lr->weights);
    p["bias"] = lr->bias;
    p["iterations"] = lr->iterations;
    p["converged"] = lr->converged;
  } else {
    const auto& m = std::get<MlpModel>(artifact.model);
    p["input_dim"] = m.w1.cols();
    p["hidden"] = m.w1.rows();
    p["w1"] = flat(m.w1);
    p["b1"] = flat(m.b1);
    p["w2"] = flat(m.w2);
    p["b2"] = flat(m.b2);
    p["w3"] = flat(m.w3);
    p["b3"] = m.b3;
    p["epochs_run"] = m.epochs_run;
    p["steps"] = m.steps;
  }
  j["parameters"] = std::move(p);
  return j;
}

ClassifierArtifact artifact_from_json(const nlohmann::json& j) {
  try {
    ClassifierArtifact a;
    a.kind = parse_model_kind(j.at("kind").get<std::string>());
    a.manifest_hash = j.at("manifest_hash").get<std::string>();
    a.tau = j.at("tau").get<double>();
    a.standardizer = Standardizer(unflat(j.at("standardizer").at("mean"), "mean"),
                                  unflat(j.at("standardizer").at("scale"), "scale"));
    const auto& p = j.at("parameters");
    if (a.kind == ModelKind::logreg) {
      LogRegModel m;
      m.weights = unflat(p.at("weights"), "weights");
      m.bias = p.at("bias").get<double>();
      m.iterations = p.value("iterations", 0);
      m.converged = p.value("converged", false);
      if (m.weights.size() != a.standardizer.mean().size())
        throw Error("model artifact: weights and standardizer differ in width");
      a.model = std::move(m);
    } else {
      const auto d = p.at("input_dim").get<Eigen::Index>();
      const auto h = p.at("hidden").get<Eigen::Index>();
      MlpModel m;
      m.w1 = unflat(p.at("w1"), h, d, "w1");
      m.b1 = unflat(p.at("b1"), h, 1, "b1");
      m.w2 = unflat(p.at("w2"), h, h, "w2");
      m.b2 = unflat(p.at("b2"), h, 1, "b2");
      m.w3 = unflat(p.at("w3"), h, 1, "w3");
      m.b3 = p.at("b3").get<double>();
      m.epochs_run = p.value("epochs_run", 0);
      m.steps = p.value("steps", std::size_t{0});
      if (d != a.standardizer.mean().size())
        throw Error("model artifact: network and standardizer differ in width");
      a.model = std::move(m);
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(std::string("model artifact: ") + e.what());
  }
}

void save_artifact(const std::filesystem::path& path, const ClassifierArtifact& artifact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << artifact_to_json(artifact).dump() << '\n';
}

ClassifierArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return artifact_from_json(j);
}

}  // namespace inlik
