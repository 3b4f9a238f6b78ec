#pragma once

// Error classifiers and the evaluation protocol: train-only standardization,
// stratified 80/20 splits, L2 logistic regression, a 512-512 ReLU MLP trained
// with Adam, thresholding, error-class metrics and multi-seed averaging.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace inlik {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Vector mean, Vector scale);

  /// Population statistics per column. Constant columns get scale 0 and
  /// transform to 0.
  static Standardizer fit(const Matrix& x);

  Matrix transform(const Matrix& x) const;

  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector mean_;
  Vector scale_;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, round(n_c * train_fraction) examples go to train. Both index lists
/// are sorted. Throws when only one class is present.
Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed);

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows);
std::vector<int> take(std::span<const int> labels, std::span<const std::size_t> rows);

struct LogRegConfig {
  double l2 = 1.0;  // penalty (l2 / 2)||w||^2 on the summed log-loss; bias unpenalized
  int max_iter = 2500;
  double tol = 1e-6;  // max-norm of the mean-loss gradient
  int history = 10;
};

struct LogRegModel {
  Vector weights;
  double bias = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// L-BFGS on the L2-regularized cross-entropy. Deterministic.
LogRegModel fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegConfig& config = {});

struct MlpConfig {
  Eigen::Index hidden = 512;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// d -> hidden -> hidden -> 1 with ReLU hidden layers and a sigmoid output.
struct MlpModel {
  Matrix w1;  // hidden x d
  Vector b1;
  Matrix w2;  // hidden x hidden
  Vector b2;
  Vector w3;  // hidden
  double b3 = 0.0;

  // Training record.
  int epochs_run = 0;
  std::size_t steps = 0;
  std::size_t largest_batch = 0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

/// Zero-initialized network of the configured shape.
MlpModel make_mlp(Eigen::Index input_dim, const MlpConfig& config);

/// Seeded init and per-epoch shuffling; no early stopping.
MlpModel fit_mlp(const Matrix& x, std::span<const int> labels, const MlpConfig& config,
                 std::uint64_t seed);

Vector predict_proba(const LogRegModel& model, const Matrix& x);
Vector predict_proba(const MlpModel& model, const Matrix& x);

/// label = 1[p >= tau]; tau must lie in (0, 1).
std::vector<int> decide(const Vector& probabilities, double tau = 0.5);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;  // 0 when precision + recall is 0
  std::size_t support = 0;
};

struct Metrics {
  ClassMetrics error;    // positive class e = 1
  ClassMetrics correct;  // e = 0
  double accuracy = 0.0;
  std::size_t n = 0;
};

Metrics evaluate(std::span<const int> predicted, std::span<const int> labels);

enum class ModelKind { logreg, mlp };
std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ProtocolConfig {
  double train_fraction = 0.8;
  double tau = 0.5;
  LogRegConfig logreg;
  MlpConfig mlp;
};

struct SeedRun {
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct EvalReport {
  std::string name;
  ModelKind kind = ModelKind::logreg;
  std::vector<SeedRun> runs;
  Metrics mean;  // field-wise mean over runs
};

inline constexpr std::array<std::uint64_t, 3> kDefaultSeeds = {13, 42, 2024};

/// For each seed: fresh stratified split, standardizer fit on train, model fit,
/// threshold, metrics on the held-out part. Seeds run concurrently.
EvalReport run_protocol(const Matrix& x, std::span<const int> labels, ModelKind kind,
                        std::span<const std::uint64_t> seeds, const ProtocolConfig& config = {},
                        std::string name = {});

Metrics mean_metrics(std::span<const SeedRun> runs);

}  // namespace inlik
