#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "inlik/classifier_io.hpp"
#include "inlik/error.hpp"
#include "inlik/learn.hpp"
#include "inlik/rng.hpp"

using namespace inlik;
using doctest::Approx;

namespace {

std::vector<int> labels_with(std::size_t n, std::size_t positives) {
  std::vector<int> y(n, 0);
  for (std::size_t i = 0; i < positives; ++i) y[(i * 7) % n] = 1;
  return y;
}

struct Blob {
  Matrix x;
  std::vector<int> y;
};

Blob blob(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Blob b{Matrix(n, 3), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    b.y[i] = rng.bernoulli(0.4) ? 1 : 0;
    for (int j = 0; j < 3; ++j) b.x(i, j) = rng.normal() + (b.y[i] ? 1.5 : -0.5) * (j == 0);
  }
  return b;
}

std::size_t count_class(const std::vector<std::size_t>& rows, const std::vector<int>& y, int c) {
  return std::count_if(rows.begin(), rows.end(), [&](std::size_t i) { return y[i] == c; });
}

}  // namespace

TEST_CASE("stratified split sizes") {
  auto y = labels_with(130, 30);
  Split s = stratified_split(y, 0.8, 1);
  CHECK(count_class(s.train, y, 1) == 24);
  CHECK(count_class(s.test, y, 1) == 6);
  CHECK(count_class(s.train, y, 0) == 80);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));

  y = labels_with(50, 7);
  s = stratified_split(y, 0.8, 2);
  const auto k = count_class(s.train, y, 1);
  CHECK((k == 5 || k == 6));
  CHECK(s.train.size() + s.test.size() == 50);

  CHECK_THROWS(stratified_split(std::vector<int>(10, 1), 0.8, 1));
  CHECK(stratified_split(y, 0.8, 9).train == stratified_split(y, 0.8, 9).train);
  CHECK(stratified_split(y, 0.8, 9).train != stratified_split(y, 0.8, 10).train);
}

TEST_CASE("standardizer uses train statistics only") {
  Matrix train(4, 2);
  train << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer st = Standardizer::fit(train);
  CHECK(st.mean()(0) == Approx(2.5));
  CHECK(st.scale()(0) == Approx(std::sqrt(1.25)));
  CHECK(st.scale()(1) == 0.0);
  Matrix test(1, 2);
  test << 10, 7;
  const Matrix z = st.transform(test);
  CHECK(z(0, 0) == Approx((10 - 2.5) / std::sqrt(1.25)));
  CHECK(z(0, 1) == 0.0);
}

TEST_CASE("logistic regression") {
  const Blob b = blob(400, 4);
  const LogRegModel m = fit_logreg(b.x, b.y);
  CHECK(m.converged);
  CHECK(m.weights(0) > 0.5);
  const Metrics met = evaluate(decide(predict_proba(m, b.x)), b.y);
  CHECK(met.accuracy > 0.75);

  // A stronger penalty shrinks the weights.
  LogRegConfig strong;
  strong.l2 = 500.0;
  CHECK(fit_logreg(b.x, b.y, strong).weights.norm() < m.weights.norm());
}

TEST_CASE("threshold") {
  Vector p(4);
  p << 0.2, 0.5, 0.7, 0.49999;
  CHECK(decide(p) == std::vector<int>{0, 1, 1, 0});
  CHECK(decide(p, 0.1) == std::vector<int>{1, 1, 1, 1});
  CHECK_THROWS(decide(p, 0.0));
  CHECK_THROWS(decide(p, 1.0));
}

TEST_CASE("metrics") {
  const std::vector<int> y{1, 1, 0, 0, 1};
  const Metrics m = evaluate(std::vector<int>{1, 0, 0, 1, 1}, y);
  CHECK(m.error.precision == Approx(2.0 / 3.0));
  CHECK(m.error.recall == Approx(2.0 / 3.0));
  CHECK(m.error.support == 3);
  CHECK(m.correct.f1 == Approx(0.5));
  CHECK(m.accuracy == Approx(0.6));

  const Metrics none = evaluate(std::vector<int>(5, 0), y);
  CHECK(none.error.f1 == 0.0);
  CHECK(none.error.precision == 0.0);

  std::vector<SeedRun> runs(3);
  runs[0].metrics.error.f1 = 0.80;
  runs[1].metrics.error.f1 = 0.85;
  runs[2].metrics.error.f1 = 0.90;
  CHECK(mean_metrics(runs).error.f1 == Approx(0.85));
}

TEST_CASE("mlp") {
  MlpConfig bad;
  bad.epochs = 0;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());

  const Blob b = blob(70, 8);
  MlpConfig cfg;
  cfg.hidden = 16;
  const MlpModel m = fit_mlp(b.x, b.y, cfg, 3);
  CHECK(m.epochs_run == 20);
  CHECK(m.epoch_loss.size() == 20);
  CHECK(m.steps == 20 * 3);  // 32 + 32 + 6
  CHECK(m.largest_batch == 32);
  CHECK(m.w1.rows() == 16);
  CHECK(m.w1.cols() == 3);
  CHECK(m.epoch_loss.back() < m.epoch_loss.front());

  CHECK(predict_proba(m, b.x) == predict_proba(fit_mlp(b.x, b.y, cfg, 3), b.x));
  CHECK(predict_proba(m, b.x) != predict_proba(fit_mlp(b.x, b.y, cfg, 4), b.x));

  const MlpModel zero = make_mlp(3, cfg);
  for (double p : predict_proba(zero, b.x)) CHECK(p == 0.5);
}

TEST_CASE("protocol runs every seed on its own split") {
  const Blob b = blob(300, 11);
  const EvalReport r = run_protocol(b.x, b.y, ModelKind::logreg, kDefaultSeeds, {}, "blob");
  REQUIRE(r.runs.size() == 3);
  CHECK(r.runs[0].seed == 13);
  CHECK(r.runs[2].seed == 2024);
  CHECK(r.mean.error.f1 == Approx((r.runs[0].metrics.error.f1 + r.runs[1].metrics.error.f1 +
                                   r.runs[2].metrics.error.f1) / 3.0));
  CHECK(r.runs[0].metrics.n == 60);
  CHECK(parse_model_kind("mlp") == ModelKind::mlp);
  CHECK_THROWS(parse_model_kind("svm"));
}

TEST_CASE("classifier artifacts refuse a different manifest") {
  const Blob b = blob(120, 5);
  FeatureTable table;
  for (std::size_t i = 0; i < 120; ++i) table.ids.push_back("r" + std::to_string(i));
  for (const char* n : {"baseline.mean_log_prob", "baseline.mean_max_token_prob", "baseline.max_oddballness"})
    table.manifest.push_back(spec_for_name(n));
  table.values = b.x;

  for (ModelKind kind : {ModelKind::logreg, ModelKind::mlp}) {
    ProtocolConfig cfg;
    cfg.mlp.hidden = 8;
    cfg.tau = 0.4;
    const ClassifierArtifact a = train_artifact(table, b.y, kind, cfg, 1);
    CHECK(a.manifest_hash == manifest_hash(table));
    CHECK(a.tau == 0.4);

    testing::TempDir dir("artifact");
    save_artifact(dir / "m.json", a);
    const ClassifierArtifact back = load_artifact(dir / "m.json");
    CHECK(back.kind == kind);
    CHECK(score(back, table) == score(a, table));
    CHECK(classify(back, table) == decide(score(a, table), 0.4));

    FeatureTable other = table;
    std::swap(other.manifest[0], other.manifest[1]);
    CHECK_THROWS_AS(score(a, other), Error);
  }
}
