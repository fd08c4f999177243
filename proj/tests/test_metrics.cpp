#include <doctest.h>

#include <cmath>

#include "mmfx/metrics.hpp"
#include "mmfx/errors.hpp"
#include "mmfx/rng.hpp"

using namespace mmfx;

TEST_CASE("confusion_and_rates: perfect, degenerate and hand-counted cases") {
  SUBCASE("perfect scores") {
    std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
    std::vector<int> l = {1, 1, 0, 0};
    auto r = confusion_and_rates(s, l);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
  }

  SUBCASE("all-negative predictions flag precision") {
    std::vector<double> s = {0.1, 0.2, 0.3};
    std::vector<int> l = {1, 0, 1};
    auto r = confusion_and_rates(s, l);
    CHECK(r.precision == 0.0);
    CHECK_FALSE(r.precision_defined);
    CHECK(r.recall == 0.0);
    CHECK(r.recall_defined);
    CHECK_FALSE(r.f1_defined);
  }

  SUBCASE("tp=3 fp=1 fn=2 tn=4") {
    // scores/labels engineered to those counts at threshold 0.5
    std::vector<double> s = {0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    std::vector<int> l = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
    auto r = confusion_and_rates(s, l);
    CHECK(r.tp == 3);
    CHECK(r.fp == 1);
    CHECK(r.fn == 2);
    CHECK(r.tn == 4);
    CHECK(r.precision == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.recall == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(r.f1 == doctest::Approx(0.9 / 1.35).epsilon(1e-12));
  }

  SUBCASE("bad labels rejected") {
    CHECK_THROWS_AS(confusion_and_rates({0.5}, {2}), InputError);
  }
}

TEST_CASE("auc_roc: hand cases") {
  CHECK(auc_roc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}).auc == 1.0);
  CHECK(auc_roc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}).auc == 0.5);
  CHECK(auc_roc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}).auc == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(auc_roc({0.5, 0.6}, {1, 1}), NumericError);
}

TEST_CASE("auc_roc: rank and trapezoid agree, monotone-transform invariant") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 20 + static_cast<int>(rng.uniform_int(50));
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<int> l(static_cast<size_t>(n));
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      // ties on purpose: quantized scores
      s[static_cast<size_t>(i)] = std::round(rng.uniform01() * 10.0) / 10.0;
      l[static_cast<size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
      has0 |= l[static_cast<size_t>(i)] == 0;
      has1 |= l[static_cast<size_t>(i)] == 1;
    }
    if (!has0 || !has1) continue;
    const double auc = auc_roc(s, l).auc;  // throws internally if the two routes disagree
    std::vector<double> transformed(s.size());
    for (size_t i = 0; i < s.size(); ++i) transformed[i] = std::exp(3.0 * s[i] + 1.0);
    CHECK(auc_roc(transformed, l).auc == doctest::Approx(auc).epsilon(1e-15));
  }
}

TEST_CASE("roc points sweep from (0,0) to (1,1)") {
  auto res = auc_roc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  REQUIRE(res.points.size() >= 2);
  CHECK(res.points.front().fpr == 0.0);
  CHECK(res.points.front().tpr == 0.0);
  CHECK(res.points.back().fpr == 1.0);
  CHECK(res.points.back().tpr == 1.0);
}

TEST_CASE("mcnemar: identical predictions, symmetry, exact binomial tail") {
  std::vector<int> labels = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  std::vector<int> same = {1, 0, 1, 0, 1, 1, 0, 0, 1, 0};
  auto r = mcnemar(same, same, labels);
  CHECK(r.b == 0);
  CHECK(r.c == 0);
  CHECK(r.p_value == 1.0);

  // b = 9, c = 1: p = 2 * P(X <= 1), X ~ Bin(10, 1/2) = 22/1024
  std::vector<int> la(10, 1);
  std::vector<int> a(10, 1), b(10, 1);
  for (int i = 0; i < 9; ++i) b[static_cast<size_t>(i)] = 0;  // A right, B wrong on 9
  a[9] = 0;                                                   // A wrong, B right on 1
  auto r2 = mcnemar(a, b, la);
  CHECK(r2.b == 9);
  CHECK(r2.c == 1);
  CHECK(std::abs(r2.p_value - 0.021484375) < 1e-6);

  auto r3 = mcnemar(b, a, la);
  CHECK(r3.p_value == doctest::Approx(r2.p_value).epsilon(1e-15));

  SUBCASE("b == c is symmetric, p = 1") {
    std::vector<int> labels4 = {1, 1, 0, 0};
    std::vector<int> pa = {1, 0, 0, 1};  // right, wrong, right, wrong
    std::vector<int> pb = {0, 1, 1, 0};  // wrong, right, wrong, right
    auto r4 = mcnemar(pa, pb, labels4);
    CHECK(r4.b == r4.c);
    CHECK(r4.p_value == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap_ci: constant metric, determinism") {
  std::vector<double> s(50, 0.9);
  std::vector<int> l(50, 1);
  MetricFn acc = [](const std::vector<double>& sc, const std::vector<int>& lb) {
    return confusion_and_rates(sc, lb).accuracy;
  };
  auto ci = bootstrap_ci(acc, s, l, 200, 0.05, 7);
  CHECK(ci.lo == 1.0);
  CHECK(ci.hi == 1.0);
  CHECK(ci.point == 1.0);

  Rng rng(55);
  std::vector<double> s2;
  std::vector<int> l2;
  for (int i = 0; i < 60; ++i) {
    const int lab = rng.bernoulli(0.5) ? 1 : 0;
    l2.push_back(lab);
    s2.push_back(rng.bernoulli(0.8) ? lab : 1 - lab);
  }
  auto c1 = bootstrap_ci(acc, s2, l2, 300, 0.05, 99);
  auto c2 = bootstrap_ci(acc, s2, l2, 300, 0.05, 99);
  CHECK(c1.lo == c2.lo);
  CHECK(c1.hi == c2.hi);
  CHECK(c1.lo <= c1.hi);
}

TEST_CASE("bootstrap_ci: quick coverage smoke for Bernoulli(0.7) accuracy") {
  // the full 500-simulation coverage check runs in the acceptance suite
  MetricFn acc = [](const std::vector<double>& sc, const std::vector<int>& lb) {
    return confusion_and_rates(sc, lb).accuracy;
  };
  int covered = 0;
  const int sims = 60;
  for (int sim = 0; sim < sims; ++sim) {
    Rng rng(1000 + static_cast<uint64_t>(sim));
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) {
      l.push_back(1);
      s.push_back(rng.bernoulli(0.7) ? 1.0 : 0.0);
    }
    auto ci = bootstrap_ci(acc, s, l, 300, 0.05, 2000 + static_cast<uint64_t>(sim));
    if (ci.lo <= 0.7 && 0.7 <= ci.hi) ++covered;
  }
  CHECK(covered >= sims * 0.85);
}

TEST_CASE("evaluate_scores report fields are consistent") {
  std::vector<double> s = {0.95, 0.9, 0.7, 0.65, 0.3, 0.2, 0.15, 0.1, 0.6, 0.4};
  std::vector<int> l = {1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
  EvalReport rep = evaluate_scores(s, l, 0.5, 50, 5);
  CHECK(rep.n == 10);
  CHECK(rep.rates.tp + rep.rates.tn + rep.rates.fp + rep.rates.fn == 10);
  CHECK(rep.auc >= 0.0);
  CHECK(rep.auc <= 1.0);
  REQUIRE(rep.auc_ci.has_value());
  CHECK(rep.auc_ci->lo <= rep.auc_ci->hi);
  nlohmann::json j = rep.to_json();
  CHECK(j.at("n").get<long>() == 10);
  CHECK(j.contains("auc_roc_ci95"));
  CHECK(j.at("youden_threshold").get<double>() > 0.0);
}
