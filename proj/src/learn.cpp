#include "inlik/learn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <numeric>

#include "inlik/error.hpp"
#include "inlik/rng.hpp"

namespace inlik {
namespace {

void check_labels(const Matrix& x, std::span<const int> labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    throw Error("feature rows and labels differ in length");
  if (labels.empty()) throw Error("no training examples");
  if (!x.allFinite()) throw Error("non-finite feature value");
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
  }
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Mean log-loss plus (l2 / 2n)||w||^2 over params = [w; b]; returns the value
// and writes the gradient.
double logreg_objective(const Matrix& x, const Vector& y, double l2, const Vector& params,
                        Vector& grad) {
  const Eigen::Index d = x.cols();
  const double n = static_cast<double>(x.rows());
  const Vector z = (x * params.head(d)).array() + params[d];
  Vector residual(z.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    loss += softplus(z[i]) - y[i] * z[i];
    residual[i] = sigmoid(z[i]) - y[i];
  }
  grad.resize(d + 1);
  grad.head(d) = (x.transpose() * residual + l2 * params.head(d)) / n;
  grad[d] = residual.sum() / n;
  return (loss + 0.5 * l2 * params.head(d).squaredNorm()) / n;
}

struct AdamState {
  Matrix m;
  Matrix v;

  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }

  template <typename Param, typename Grad>
  void step(Param& param, const Grad& grad, const MlpConfig& c, double bc1, double bc2) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
    param.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  }
};

void uniform_fill(Rng& rng, double bound, auto& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  }
}

}  // namespace

Standardizer::Standardizer(Vector mean, Vector scale) : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw Error("standardizer mean/scale length mismatch");
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw Error("cannot fit a standardizer on zero rows");
  const Vector mean = x.colwise().mean();
  Vector scale(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - mean[c]).square().mean();
    const double sd = std::sqrt(var);
    // Columns that are constant up to round-off carry no signal.
    scale[c] = sd > 1e-12 * std::max(1.0, std::abs(mean[c])) ? sd : 0.0;
  }
  return {mean, scale};
}

Matrix Standardizer::transform(const Matrix& x) const {
  if (x.cols() != mean_.size()) throw Error("standardizer fitted on a different column count");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (scale_[c] == 0.0) out.col(c).setZero();
    else out.col(c) = (x.col(c).array() - mean_[c]) / scale_[c];
  }
  return out;
}

Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("train fraction must lie in (0, 1)");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("labels must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw Error("stratified split needs both classes; got a single-class label vector");

  Rng rng(seed);
  Split split;
  for (auto& members : by_class) {
    rng.shuffle(std::span(members));
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(members.size()) * train_fraction));
    split.train.insert(split.train.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                      members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

std::vector<int> take(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

LogRegModel fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegConfig& config) {
  check_labels(x, labels);
  const Eigen::Index d = x.cols();
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = labels[static_cast<std::size_t>(i)];

  Vector params = Vector::Zero(d + 1);
  Vector grad;
  double f = logreg_objective(x, y, config.l2, params, grad);

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) curvature pairs
  LogRegModel model;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= config.tol) {
      model.converged = true;
      break;
    }
    model.iterations = iter + 1;

    // Two-loop recursion for the search direction.
    Vector q = grad;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, yk] = memory[k];
      alpha[k] = s.dot(q) / yk.dot(s);
      q -= alpha[k] * yk;
    }
    if (!memory.empty()) {
      const auto& [s, yk] = memory.back();
      q *= s.dot(yk) / yk.squaredNorm();
    } else {
      q /= std::max(1.0, grad.norm());
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, yk] = memory[k];
      const double beta = yk.dot(q) / yk.dot(s);
      q += (alpha[k] - beta) * s;
    }
    Vector direction = -q;
    double slope = grad.dot(direction);
    if (slope >= 0) {
      memory.clear();
      direction = -grad;
      slope = -grad.squaredNorm();
    }

    // Backtracking line search under the Armijo condition.
    double step = 1.0;
    Vector next_params;
    Vector next_grad;
    double next_f = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next_params = params + step * direction;
      next_f = logreg_objective(x, y, config.l2, next_params, next_grad);
      if (next_f <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Vector s = next_params - params;
    Vector yk = next_grad - grad;
    if (s.dot(yk) > 1e-12) {
      memory.emplace_back(std::move(s), std::move(yk));
      if (static_cast<int>(memory.size()) > config.history) memory.pop_front();
    }
    params = std::move(next_params);
    grad = std::move(next_grad);
    f = next_f;
  }
  if (!model.converged && grad.lpNorm<Eigen::Infinity>() <= config.tol) model.converged = true;
  model.weights = params.head(d);
  model.bias = params[d];
  return model;
}

void MlpConfig::validate() const {
  if (hidden < 1) throw Error("MLP hidden width must be positive");
  if (epochs < 1) throw Error("MLP needs at least one epoch");
  if (batch_size < 1) throw Error("MLP batch size must be positive");
  if (!(learning_rate > 0.0)) throw Error("MLP learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error("Adam betas must lie in [0, 1)");
}

MlpModel make_mlp(Eigen::Index input_dim, const MlpConfig& config) {
  MlpModel m;
  m.w1 = Matrix::Zero(config.hidden, input_dim);
  m.b1 = Vector::Zero(config.hidden);
  m.w2 = Matrix::Zero(config.hidden, config.hidden);
  m.b2 = Vector::Zero(config.hidden);
  m.w3 = Vector::Zero(config.hidden);
  return m;
}

MlpModel fit_mlp(const Matrix& x, std::span<const int> labels, const MlpConfig& config,
                 std::uint64_t seed) {
  config.validate();
  check_labels(x, labels);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index h = config.hidden;

  Rng rng(seed);
  MlpModel m = make_mlp(d, config);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1)));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
  uniform_fill(rng, bound1, m.w1);
  uniform_fill(rng, bound1, m.b1);
  uniform_fill(rng, bound2, m.w2);
  uniform_fill(rng, bound2, m.b2);
  uniform_fill(rng, bound2, m.w3);
  m.b3 = rng.uniform(-bound2, bound2);

  AdamState a_w1, a_b1, a_w2, a_b2, a_w3, a_b3;
  a_w1.init(h, d);
  a_b1.init(h, 1);
  a_w2.init(h, h);
  a_b2.init(h, 1);
  a_w3.init(h, 1);
  a_b3.init(1, 1);
  Matrix b3_param(1, 1);

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t t = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto bsz = static_cast<Eigen::Index>(stop - start);
      Matrix xb(bsz, d);
      Vector yb(bsz);
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const auto src = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]);
        xb.row(r) = x.row(src);
        yb[r] = labels[static_cast<std::size_t>(src)];
      }

      const Matrix z1 = (xb * m.w1.transpose()).rowwise() + m.b1.transpose();
      const Matrix h1 = z1.cwiseMax(0.0);
      const Matrix z2 = (h1 * m.w2.transpose()).rowwise() + m.b2.transpose();
      const Matrix h2 = z2.cwiseMax(0.0);
      const Vector z3 = (h2 * m.w3).array() + m.b3;

      // Mean binary cross-entropy; d(loss)/dz3 = (sigmoid(z3) - y) / batch.
      Vector dz3(bsz);
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const double p = sigmoid(z3[r]);
        loss_sum += softplus(z3[r]) - yb[r] * z3[r];
        hits += (p >= 0.5) == (yb[r] == 1.0);
        dz3[r] = (p - yb[r]) / static_cast<double>(bsz);
      }
      const Vector g_w3 = h2.transpose() * dz3;
      const double g_b3 = dz3.sum();
      const Matrix dz2 = (dz3 * m.w3.transpose()).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
      const Matrix g_w2 = dz2.transpose() * h1;
      const Vector g_b2 = dz2.colwise().sum().transpose();
      const Matrix dz1 = (dz2 * m.w2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
      const Matrix g_w1 = dz1.transpose() * xb;
      const Vector g_b1 = dz1.colwise().sum().transpose();

      ++t;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
      a_w1.step(m.w1, g_w1, config, bc1, bc2);
      a_b1.step(m.b1, g_b1, config, bc1, bc2);
      a_w2.step(m.w2, g_w2, config, bc1, bc2);
      a_b2.step(m.b2, g_b2, config, bc1, bc2);
      a_w3.step(m.w3, g_w3, config, bc1, bc2);
      b3_param(0, 0) = m.b3;
      a_b3.step(b3_param, Matrix::Constant(1, 1, g_b3), config, bc1, bc2);
      m.b3 = b3_param(0, 0);

      m.largest_batch = std::max(m.largest_batch, static_cast<std::size_t>(bsz));
      ++m.steps;
    }
    m.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    m.epoch_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n));
    ++m.epochs_run;
  }
  return m;
}

Vector predict_proba(const LogRegModel& model, const Matrix& x) {
  if (x.cols() != model.weights.size()) throw Error("logistic model expects a different width");
  Vector z = (x * model.weights).array() + model.bias;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

Vector predict_proba(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.w1.cols()) throw Error("MLP expects a different input width");
  const Matrix h1 = ((x * model.w1.transpose()).rowwise() + model.b1.transpose()).cwiseMax(0.0);
  const Matrix h2 = ((h1 * model.w2.transpose()).rowwise() + model.b2.transpose()).cwiseMax(0.0);
  Vector z = (h2 * model.w3).array() + model.b3;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

std::vector<int> decide(const Vector& probabilities, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error("decision threshold must lie in (0, 1)");
  std::vector<int> out(static_cast<std::size_t>(probabilities.size()));
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    out[static_cast<std::size_t>(i)] = probabilities[i] >= tau ? 1 : 0;
  }
  return out;
}

Metrics evaluate(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw Error("predictions and labels differ in length");
  if (labels.empty()) throw Error("cannot evaluate an empty test set");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) ++tp;
    else if (p && !y) ++fp;
    else if (!p && y) ++fn;
    else ++tn;
  }
  auto class_metrics = [](std::size_t tp_, std::size_t fp_, std::size_t fn_) {
    ClassMetrics c;
    c.precision = tp_ + fp_ ? static_cast<double>(tp_) / static_cast<double>(tp_ + fp_) : 0.0;
    c.recall = tp_ + fn_ ? static_cast<double>(tp_) / static_cast<double>(tp_ + fn_) : 0.0;
    c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    c.support = tp_ + fn_;
    return c;
  };
  Metrics m;
  m.error = class_metrics(tp, fp, fn);
  m.correct = class_metrics(tn, fn, fp);
  m.n = labels.size();
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.n);
  return m;
}

std::string_view model_kind_name(ModelKind kind) { return kind == ModelKind::logreg ? "logreg" : "mlp"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "logreg") return ModelKind::logreg;
  if (name == "mlp") return ModelKind::mlp;
  throw Error("unknown classifier '" + std::string(name) + "' (expected logreg or mlp)");
}

Metrics mean_metrics(std::span<const SeedRun> runs) {
  Metrics mean;
  if (runs.empty()) return mean;
  const double k = static_cast<double>(runs.size());
  auto add = [k](ClassMetrics& into, const ClassMetrics& c) {
    into.precision += c.precision / k;
    into.recall += c.recall / k;
    into.f1 += c.f1 / k;
    into.support += c.support;
  };
  for (const auto& r : runs) {
    add(mean.error, r.metrics.error);
    add(mean.correct, r.metrics.correct);
    mean.accuracy += r.metrics.accuracy / k;
    mean.n += r.metrics.n;
  }
  mean.error.support /= runs.size();
  mean.correct.support /= runs.size();
  mean.n /= runs.size();
  return mean;
}

EvalReport run_protocol(const Matrix& x, std::span<const int> labels, ModelKind kind,
                        std::span<const std::uint64_t> seeds, const ProtocolConfig& config,
                        std::string name) {
  if (seeds.empty()) throw Error("run_protocol needs at least one seed");
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    throw Error("feature rows and labels differ in length");
  if (kind == ModelKind::mlp) config.mlp.validate();
  decide(Vector::Constant(1, 0.5), config.tau);  // validates tau up front

  auto one_seed = [&](std::uint64_t seed) {
    const Split split = stratified_split(labels, config.train_fraction, seed);
    if (split.test.empty()) throw Error("empty test split");
    const Matrix x_train_raw = take_rows(x, split.train);
    const Standardizer scaler = Standardizer::fit(x_train_raw);
    const Matrix x_train = scaler.transform(x_train_raw);
    const Matrix x_test = scaler.transform(take_rows(x, split.test));
    const auto y_train = take(labels, split.train);
    const auto y_test = take(labels, split.test);
    Vector p;
    if (kind == ModelKind::logreg) {
      p = predict_proba(fit_logreg(x_train, y_train, config.logreg), x_test);
    } else {
      // Split and init streams differ so they are not correlated.
      p = predict_proba(fit_mlp(x_train, y_train, config.mlp, seed ^ 0x9e3779b97f4a7c15ULL), x_test);
    }
    return SeedRun{seed, evaluate(decide(p, config.tau), y_test)};
  };

  std::vector<std::future<SeedRun>> pending;
  for (auto seed : seeds) pending.push_back(std::async(std::launch::async, one_seed, seed));
  EvalReport report;
  report.name = std::move(name);
  report.kind = kind;
  for (auto& f : pending) report.runs.push_back(f.get());
  report.mean = mean_metrics(report.runs);
  return report;
}

}  // namespace inlik
