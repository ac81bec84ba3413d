#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/gradcheck.hpp"
#include "thermo/optim.hpp"

using namespace thermo;

TEST_CASE("adam: zero gradient is a fixed point that still advances the step") {
  std::vector<Tensor<double>> params{Tensor<double>({2, 2}, {1, 2, 3, 4})};
  std::vector<Tensor<double>> grads{Tensor<double>({2, 2})};
  auto st = AdamState<double>::for_params(params);
  auto [next, st2] = adam_step(params, grads, st);
  REQUIRE(next[0] == params[0]);
  REQUIRE(st2.step_count == 1);
}

TEST_CASE("adam: first-step magnitude is about lr * sign(g)") {
  std::vector<Tensor<double>> params{Tensor<double>({1}, {1.0})};
  std::vector<Tensor<double>> grads{Tensor<double>({1}, {2.0})};
  auto st = AdamState<double>::for_params(params, 0.001);
  auto [next, st2] = adam_step(params, grads, st);
  REQUIRE(next[0][0] == Catch::Approx(0.999).margin(1e-8));
}

TEST_CASE("adam: 200 steps descend x^2 from x=1") {
  // independent scalar reference loop, written from the update equations
  double x = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }
  REQUIRE(std::abs(x) < 0.1);

  // the library walks the same trajectory
  std::vector<Tensor<double>> params{Tensor<double>({1}, {1.0})};
  auto st = AdamState<double>::for_params(params, 0.01);
  for (int t = 1; t <= 200; ++t) {
    std::vector<Tensor<double>> grads{Tensor<double>({1}, {2.0 * params[0][0]})};
    std::tie(params, st) = adam_step(params, grads, st);
  }
  REQUIRE(params[0][0] == Catch::Approx(x).margin(1e-12));
  REQUIRE(st.step_count == 200);
}

TEST_CASE("adam: appending a zero-gradient parameter changes nothing else") {
  SplitMix64 rng(77);
  std::vector<Tensor<double>> params{Tensor<double>({3}), Tensor<double>({2, 2})};
  for (auto& p : params) p.fill_uniform(rng, -1.0, 1.0);
  std::vector<Tensor<double>> grads{Tensor<double>({3}), Tensor<double>({2, 2})};
  for (auto& g : grads) g.fill_uniform(rng, -1.0, 1.0);

  auto st = AdamState<double>::for_params(params);
  auto [a, st_a] = adam_step(params, grads, st);

  auto params_ext = params;
  params_ext.push_back(Tensor<double>({5}, {1, 2, 3, 4, 5}));
  auto grads_ext = grads;
  grads_ext.push_back(Tensor<double>({5}));
  auto [b, st_b] = adam_step(params_ext, grads_ext, AdamState<double>::for_params(params_ext));

  REQUIRE(a[0] == b[0]);
  REQUIRE(a[1] == b[1]);
  REQUIRE(b[2] == params_ext[2]);
}

TEST_CASE("adam: rejects misaligned shapes and non-finite gradients") {
  std::vector<Tensor<double>> params{Tensor<double>({2})};
  auto st = AdamState<double>::for_params(params);
  SECTION("shape mismatch") {
    std::vector<Tensor<double>> grads{Tensor<double>({3})};
    REQUIRE_THROWS_AS(adam_step(params, grads, st), ShapeError);
  }
  SECTION("list length mismatch") {
    std::vector<Tensor<double>> grads;
    REQUIRE_THROWS_AS(adam_step(params, grads, st), ShapeError);
  }
  SECTION("non-finite gradient names the tensor index") {
    std::vector<Tensor<double>> grads{Tensor<double>({2}, {1.0, std::nan("")})};
    REQUIRE_THROWS_WITH(adam_step(params, grads, st),
                        Catch::Matchers::ContainsSubstring("tensor 0") &&
                            Catch::Matchers::ContainsSubstring("element 1"));
  }
}

TEST_CASE("bce: maximum-entropy point and confident limit") {
  SECTION("p = 0.5 costs ln 2 per element") {
    Tensor<double> p({2, 1}, {0.5, 0.5});
    const auto r = bce_loss(p, {0, 1});
    REQUIRE(r.loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SECTION("correct and confident is near zero") {
    Tensor<double> p({1, 1}, {1.0});  // clamps to 1 - 1e-7
    const auto r = bce_loss(p, {1});
    REQUIRE(r.loss == Catch::Approx(1e-7).margin(1e-9));
  }
  SECTION("loss is never negative") {
    SplitMix64 rng(5);
    for (int t = 0; t < 50; ++t) {
      Tensor<double> p({4, 1});
      p.fill_uniform(rng, 0.0, 1.0);
      std::vector<int> y;
      for (int i = 0; i < 4; ++i) y.push_back(static_cast<int>(rng.next() % 2));
      REQUIRE(bce_loss(p, y).loss >= 0.0);
    }
  }
  SECTION("labels outside {0,1} are rejected") {
    Tensor<double> p({1, 1}, {0.5});
    REQUIRE_THROWS_AS(bce_loss(p, {2}), DataError);
  }
}

TEST_CASE("gradcheck: bce") {
  for (int seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(800 + seed);
    const std::size_t n = 1 + rng.next() % 6;
    Tensor<double> p({n, 1});
    p.fill_uniform(rng, 0.05, 0.95);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.next() % 2));

    const auto grad = bce_loss(p, y).grad;
    const auto loss = [&] { return static_cast<double>(bce_loss(p, y).loss); };
    REQUIRE(oracle::check_grad(p, grad, loss).max_rel <= 1e-4);
  }
}

TEST_CASE("metrics from the Table-consistent counts") {
  const auto r = metrics_from_counts(415, 300, 0, 5);
  REQUIRE(r.accuracy == Catch::Approx(0.9931).margin(1e-4));
  REQUIRE(r.precision == 1.0);
  REQUIRE(r.recall == Catch::Approx(0.9881).margin(1e-4));
  REQUIRE(r.total() == 720);
}

TEST_CASE("compute_metrics on a perfect classifier") {
  Tensor<double> p({4, 1}, {0.9, 0.8, 0.1, 0.2});
  const auto r = compute_metrics(p, {1, 1, 0, 0}, 0.5);
  REQUIRE(r.accuracy == 1.0);
  REQUIRE(r.precision == 1.0);
  REQUIRE(r.recall == 1.0);
}

TEST_CASE("compute_metrics on the all-positive predictor") {
  const std::size_t neg = 300, pos = 420;
  Tensor<double> p({neg + pos, 1});
  std::vector<int> y;
  for (std::size_t i = 0; i < neg + pos; ++i) {
    p[i] = 0.99;
    y.push_back(i < neg ? 0 : 1);
  }
  const auto r = compute_metrics(p, y, 0.5);
  REQUIRE(r.recall == 1.0);
  REQUIRE(r.precision == Catch::Approx(420.0 / 720.0).epsilon(1e-12));
  REQUIRE(r.tp + r.tn + r.fp + r.fn == neg + pos);
}

TEST_CASE("compute_metrics properties") {
  SECTION("empty input is rejected") {
    REQUIRE_THROWS_AS(compute_metrics(Tensor<double>(), {}), DataError);
  }
  SECTION("polarity swap exchanges tp<->tn and fp<->fn") {
    SplitMix64 rng(91);
    Tensor<double> p({50, 1});
    std::vector<int> y;
    for (std::size_t i = 0; i < 50; ++i) {
      double v = rng.next_uniform(0.0, 1.0);
      if (std::abs(v - 0.5) < 0.01) v = 0.6;  // keep away from the threshold edge
      p[i] = v;
      y.push_back(static_cast<int>(rng.next() % 2));
    }
    const auto a = compute_metrics(p, y, 0.5);
    Tensor<double> p_flip({50, 1});
    std::vector<int> y_flip;
    for (std::size_t i = 0; i < 50; ++i) {
      p_flip[i] = 1.0 - p[i];
      y_flip.push_back(1 - y[i]);
    }
    const auto b = compute_metrics(p_flip, y_flip, 0.5);
    REQUIRE(a.tp == b.tn);
    REQUIRE(a.tn == b.tp);
    REQUIRE(a.fp == b.fn);
    REQUIRE(a.fn == b.fp);
  }
}
