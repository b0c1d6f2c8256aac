#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "activelex/classifier.hpp"
#include "activelex/error.hpp"
#include "activelex/rng.hpp"

using namespace activelex;

namespace {

const std::vector<std::string> kTwo{"a", "b"};
const std::vector<std::string> kThree{"a", "b", "c"};

SparseVector sv(std::size_t dim, std::vector<std::pair<std::uint32_t, double>> pairs) {
  return SparseVector::from_pairs(dim, std::move(pairs));
}

ModelState random_model(Rng& rng, std::size_t classes, std::size_t dim, double l2) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  auto m = ModelState::zeros(names, dim, l2);
  for (auto& p : m.params) p = rng.uniform() * 2 - 1;
  return m;
}

std::vector<LabeledVector> random_batch(Rng& rng, std::size_t n, std::size_t classes, std::size_t dim) {
  std::vector<LabeledVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<std::uint32_t, double>> pairs;
    for (std::uint32_t j = 0; j < dim; ++j)
      if (rng.below(2)) pairs.emplace_back(j, static_cast<double>(1 + rng.below(3)));
    out.push_back({SparseVector::from_pairs(dim, pairs), rng.below(classes)});
  }
  return out;
}

// Clustered data: each class owns a block of features, plus shared noise.
std::vector<LabeledVector> clustered(Rng& rng, std::size_t n, std::size_t classes, std::size_t dim, double noise) {
  std::vector<LabeledVector> out;
  const std::size_t block = dim / (classes + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % classes;
    std::vector<std::pair<std::uint32_t, double>> pairs;
    for (int t = 0; t < 4; ++t) {
      const bool shared = rng.uniform() < noise;
      const std::size_t base = shared ? classes * block : y * block;
      pairs.emplace_back(static_cast<std::uint32_t>(base + rng.below(block)), 1.0);
    }
    out.push_back({SparseVector::from_pairs(dim, pairs), y});
  }
  return out;
}

}  // namespace

TEST_CASE("predict_proba on hand-computed models") {
  auto m = ModelState::zeros(kThree, 4, 1e-2);
  for (double p : predict_proba(m, SparseVector(4))) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto two = ModelState::zeros(kTwo, 3, 1e-2);
  two.bias()[0] = std::log(2.0);
  const auto p = predict_proba(two, sv(3, {{1, 5.0}}));
  CHECK(std::fabs(p[0] - 2.0 / 3) < 1e-15);
  CHECK(std::fabs(p[1] - 1.0 / 3) < 1e-15);

  const auto half = predict_proba(ModelState::zeros(kTwo, 3, 1e-2), SparseVector(3));
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  CHECK_THROWS_AS(predict_proba(two, SparseVector(4)), DimensionMismatch);
}

TEST_CASE("probabilities stay on the simplex for extreme logits") {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    auto m = random_model(rng, 2 + rng.below(4), 6, 1e-2);
    for (auto& p : m.params) p *= std::pow(10.0, static_cast<double>(rng.below(5)));
    const auto x = random_batch(rng, 1, 2, 6)[0].x;
    const auto p = predict_proba(m, x);
    double s = 0;
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
}

TEST_CASE("loss of the zero model is ln C") {
  const std::vector<LabeledVector> batch{{sv(3, {{0, 1.0}}), 1}};
  CHECK(loss_and_gradient(ModelState::zeros(kTwo, 3, 0.5), batch).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(loss_and_gradient(ModelState::zeros(kTwo, 3, 0.5), {}), InvalidArgument);
}

TEST_CASE("loss tends to zero on a perfectly predicted batch without regularization") {
  auto m = ModelState::zeros(kTwo, 2, 0.0);
  m.weights(0)[0] = 50;
  m.weights(1)[1] = 50;
  const std::vector<LabeledVector> batch{{sv(2, {{0, 1.0}}), 0}, {sv(2, {{1, 1.0}}), 1}};
  CHECK(loss_and_gradient(m, batch).loss < 1e-20);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 2 + rng.below(3), dim = 1 + rng.below(10), n = 1 + rng.below(8);
    auto m = random_model(rng, classes, dim, rng.uniform());
    const auto batch = random_batch(rng, n, classes, dim);
    const auto g = loss_and_gradient(m, batch).gradient;
    REQUIRE(g.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      const double h = 1e-5, keep = m.params[i];
      m.params[i] = keep + h;
      const double up = loss_and_gradient(m, batch).loss;
      m.params[i] = keep - h;
      const double down = loss_and_gradient(m, batch).loss;
      m.params[i] = keep;
      const double fd = (up - down) / (2 * h);
      CHECK(std::fabs(fd - g[i]) <= std::max(1e-8, 1e-5 * std::fabs(fd)));
    }
  }
}

TEST_CASE("separable pair is fit") {
  const std::vector<LabeledVector> data{{sv(2, {{0, 1.0}}), 0}, {sv(2, {{1, 1.0}}), 1}};
  TrainConfig cfg;
  cfg.l2_strength = 1e-4;
  TrainReport report;
  const auto m = train(data, kTwo, 2, cfg, nullptr, &report);
  CHECK(report.converged);
  CHECK(report.gradient_norm <= cfg.gradient_tolerance);
  CHECK(predict(m, data[0].x) == 0);
  CHECK(predict(m, data[1].x) == 1);
}

TEST_CASE("training errors") {
  const std::vector<LabeledVector> one_class{{sv(2, {{0, 1.0}}), 0}, {sv(2, {{1, 1.0}}), 0}};
  try {
    train(one_class, kTwo, 2, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fewer than 2 classes observed") != std::string::npos);
  }
  CHECK_THROWS(train({}, kTwo, 2, {}));
  const std::vector<LabeledVector> ok{{sv(2, {{0, 1.0}}), 0}, {sv(2, {{1, 1.0}}), 1}};
  const auto wrong_dim = ModelState::zeros(kTwo, 3, 1e-2);
  CHECK_THROWS(train(ok, kTwo, 2, {}, &wrong_dim));
  const auto wrong_classes = ModelState::zeros(kThree, 2, 1e-2);
  CHECK_THROWS(train(ok, kTwo, 2, {}, &wrong_classes));
}

TEST_CASE("warm start from a converged model is a fixed point") {
  Rng rng(4);
  const auto data = clustered(rng, 60, 3, 40, 0.3);
  const auto m = train(data, kThree, 40, {});
  TrainReport report;
  const auto again = train(data, kThree, 40, {}, &m, &report);
  CHECK(report.iterations <= 1);
  CHECK(report.converged);
  CHECK(again.params.size() == m.params.size());
}

TEST_CASE("loss is non-increasing across iterations") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = clustered(rng, 30 + rng.below(50), 3, 30, 0.4);
    TrainConfig cfg;
    cfg.l2_strength = std::pow(10.0, -static_cast<double>(rng.below(4)));
    TrainReport report;
    train(data, kThree, 30, cfg, nullptr, &report);
    REQUIRE(report.loss_trace.size() >= 1);
    for (std::size_t i = 1; i < report.loss_trace.size(); ++i) CHECK(report.loss_trace[i] <= report.loss_trace[i - 1]);
  }
}

TEST_CASE("cold and warm starts reach the same objective") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto first = clustered(rng, 40, 3, 50, 0.3);
    auto all = first;
    const auto more = clustered(rng, 40, 3, 50, 0.3);
    all.insert(all.end(), more.begin(), more.end());
    TrainConfig cfg;
    cfg.gradient_tolerance = 1e-8;
    const auto start = train(first, kThree, 50, cfg);
    const auto warm = train(all, kThree, 50, cfg, &start);
    cfg.warm_start = false;
    const auto cold = train(all, kThree, 50, cfg, &start);
    CHECK(std::fabs(loss_and_gradient(warm, all).loss - loss_and_gradient(cold, all).loss) <= 1e-6);
  }
}

TEST_CASE("training is invariant to batch order") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto data = clustered(rng, 50, 3, 30, 0.5);
    const auto reference = train(data, kThree, 30, {});
    for (std::size_t i = data.size() - 1; i > 0; --i) std::swap(data[i], data[rng.below(i + 1)]);
    CHECK(train(data, kThree, 30, {}).params == reference.params);
  }
}

TEST_CASE("select_l2") {
  Rng rng(30);
  const auto data = clustered(rng, 200, 3, 60, 0.1);
  const std::vector<double> single{0.05};
  CHECK(select_l2(data, kThree, 60, single, 3, 1).best == 0.05);

  const std::vector<double> grid{1e-4, 1e4};
  const auto sel = select_l2(data, kThree, 60, grid, 3, 1);
  CHECK(sel.best == 1e-4);
  CHECK(sel.stratified);
  REQUIRE(sel.mean_scores.size() == 2);
  CHECK(sel.mean_scores[0] > sel.mean_scores[1]);

  // All points identical: every λ scores the same, the largest wins.
  std::vector<LabeledVector> flat;
  for (int i = 0; i < 12; ++i) flat.push_back({SparseVector(4), static_cast<std::size_t>(i % 2)});
  const std::vector<double> tie_grid{1e-3, 1e-1, 10.0};
  const auto tie = select_l2(flat, kTwo, 4, tie_grid, 3, 5);
  CHECK(tie.mean_scores[0] == tie.mean_scores[2]);
  CHECK(tie.best == 10.0);

  // A class with fewer members than folds forces plain folds.
  auto sparse_class = clustered(rng, 30, 2, 20, 0.2);
  sparse_class.push_back({sv(20, {{19, 1.0}}), 2});
  CHECK_FALSE(select_l2(sparse_class, kThree, 20, grid, 3, 1).stratified);
}

TEST_CASE("model persistence round trip") {
  Rng rng(1);
  const FeatureSpace space(32, {"negative", "positive"});
  auto m = random_model(rng, 3, space.dimension(), 0.1);
  m.weights(1)[3] = 0.0;
  const auto doc = model_to_json(m, space);
  const auto back = model_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.model == m);
  CHECK(back.space == space);

  auto bad = doc;
  bad["hash_function"] = "murmur3";
  CHECK_THROWS(model_from_json(bad));
  auto bad_dim = doc;
  bad_dim["dimension"] = 99;
  CHECK_THROWS(model_from_json(bad_dim));
}
