#include "support.hpp"

#include "moe/datagen.hpp"
#include "moe/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace moe;

namespace {

// Kolmogorov-Smirnov statistic of a sample against Uniform[lo, hi].
double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = (v[i] - lo) / (hi - lo);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  return a.x == b.x && a.y == b.y && a.kind == b.kind && a.num_classes == b.num_classes;
}

}  // namespace

TEST_CASE("three-class labels at reference points") {
  CHECK(three_class_label(0.0, 0.0) == 2);
  CHECK(three_class_label(3.0, 3.0) == 3);
  CHECK(three_class_label(-3.0, 3.0) == 3);
  CHECK(three_class_label(4.9, -4.9) == 1);
  CHECK(three_class_label(2.0, 0.0) == 2);
  CHECK(three_class_label(2.0, 2.0) == 3);
  CHECK(three_class_label(-4.0, 4.0) == 3);
  CHECK(three_class_label(3.0, -3.0) == 1);
  CHECK(three_class_label(0.0, 3.0) == 1);
}

TEST_CASE("three-class generator: proportions, uniform marginals, determinism") {
  const Index n = 100000;
  const Dataset data = gen_three_class(n, 7);
  CHECK(data.kind == ResponseKind::Categorical);
  CHECK(data.num_classes == 3);
  CHECK(data.p() == 2);
  CHECK_NOTHROW(data.validate());
  const double expected[3] = {1.0 - 4.0 * std::numbers::pi / 100.0 - 0.08, 4.0 * std::numbers::pi / 100.0, 0.08};
  for (int k = 1; k <= 3; ++k) {
    const double share = (data.y.array() == k).cast<double>().mean();
    CHECK(std::abs(share - expected[k - 1]) <= 0.01);
  }
  for (Index i = 0; i < 1000; ++i) CHECK(data.y(i) == three_class_label(data.x(i, 0), data.x(i, 1)));
  for (int j = 0; j < 2; ++j) {
    std::vector<double> col(data.x.col(j).data(), data.x.col(j).data() + n);
    CHECK(*std::min_element(col.begin(), col.end()) >= -5.0);
    CHECK(*std::max_element(col.begin(), col.end()) <= 5.0);
    CHECK(ks_uniform(col, -5.0, 5.0) < 1.63 / std::sqrt(static_cast<double>(n)));
  }
  CHECK(same_dataset(gen_three_class(500, 3), gen_three_class(500, 3)));
  CHECK_FALSE(same_dataset(gen_three_class(500, 3), gen_three_class(500, 4)));
  CHECK_THROWS_AS(gen_three_class(0, 1), InvalidArgument);
}

TEST_CASE("gen_moe_sample: degenerate noise and moments") {
  MoeParams theta = MoeParams::zeros(Family::Gaussian, 2, 1);
  theta.gating(0, 1) = 2.0;
  theta.experts[0].coef.col(0) << 1.0, 2.0;
  theta.experts[1].coef.col(0) << -1.0, 0.5;
  theta.experts[0].variance = theta.experts[1].variance = 1e-12;
  const LabeledSample s = gen_moe_sample(theta, uniform_box(1, -1.0, 1.0), 500, 3);
  for (Index i = 0; i < s.data.n(); ++i) {
    const auto& e = theta.experts[s.z_true[i]];
    CHECK(std::abs(s.data.y(i) - (e.coef(0, 0) + e.coef(1, 0) * s.data.x(i, 0))) < 1e-4);
  }

  MoeParams unit = MoeParams::zeros(Family::Gaussian, 1, 0);
  const Dataset d = gen_moe_sample(unit, uniform_box(0, 0.0, 1.0), 100000, 5).data;
  const double mean = d.y.mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs((d.y.array() - mean).square().mean() - 1.0) < 0.03);

  const LabeledSample a = gen_moe_sample(theta, uniform_box(1, -1.0, 1.0), 200, 9);
  const LabeledSample b = gen_moe_sample(theta, uniform_box(1, -1.0, 1.0), 200, 9);
  CHECK(same_dataset(a.data, b.data));
  CHECK(a.z_true == b.z_true);
}

TEST_CASE("gen_moe_sample: component frequencies follow the gates") {
  Rng rng(23);
  const MoeParams theta = test::random_params(Family::Poisson, 3, 2, rng, {}, 3, 1.5);
  const VectorXd x0 = test::random_point(2, rng);
  const Index n = 20000;
  const LabeledSample s = gen_moe_sample(theta, [&](Rng&) { return x0; }, n, 77);
  const VectorXd gates = gate_probs(x0, theta.gating);
  for (int z = 0; z < 3; ++z) {
    const double freq = static_cast<double>(std::count(s.z_true.begin(), s.z_true.end(), z)) / n;
    const double se = std::sqrt(gates(z) * (1.0 - gates(z)) / n);
    CHECK(std::abs(freq - gates(z)) < 3.0 * se);
  }
}

TEST_CASE("gen_moe_sample: per-component least squares recovers the experts") {
  MoeParams theta = MoeParams::zeros(Family::Gaussian, 2, 2);
  theta.gating.row(0) << 0.3, 1.0, -1.0;
  theta.experts[0].coef.col(0) << 1.0, 2.0, -1.0;
  theta.experts[1].coef.col(0) << -2.0, 0.5, 1.5;
  theta.experts[0].variance = 0.5;
  theta.experts[1].variance = 2.0;
  const LabeledSample s = gen_moe_sample(theta, uniform_box(2, -2.0, 2.0), 10000, 31);
  for (int z = 0; z < 2; ++z) {
    std::vector<Index> rows;
    for (Index i = 0; i < s.data.n(); ++i)
      if (s.z_true[i] == z) rows.push_back(i);
    MatrixXd x(rows.size(), 2);
    VectorXd y(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      x.row(k) = s.data.x.row(rows[k]);
      y(k) = s.data.y(rows[k]);
    }
    const test::OlsFit fit = test::ols(x, y);
    MatrixXd a(x.rows(), 3);
    a.col(0).setOnes();
    a.rightCols(2) = x;
    const VectorXd se = ((a.transpose() * a).inverse().diagonal() * fit.variance).cwiseSqrt();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.beta(j) - theta.experts[z].coef(j, 0)) < 3.0 * se(j));
  }
}

TEST_CASE("gen_moe_sample draws every response kind") {
  Rng rng(1);
  for (Family f : {Family::Logistic, Family::Poisson, Family::Multinomial}) {
    const MoeParams theta = test::random_params(f, 2, 1, rng);
    const Dataset d = test::sample_dataset(theta, 300, 4);
    CHECK(d.kind == response_kind(f));
    CHECK_NOTHROW(d.validate());
    CHECK_NOTHROW(check_compatible(d, theta));
  }
}

TEST_CASE("switch signal: exact quadratics without noise") {
  SignalSpec spec;
  spec.n = 101;
  spec.breakpoints = {0.3, 0.7};
  spec.regimes = {{1.0, 2.0, 0.0, 0.0}, {0.0, -1.0, 3.0, 0.0}, {5.0, 0.0, -2.0, 0.0}};
  const LabeledSample s = gen_switch_signal(spec);
  REQUIRE(s.data.n() == 101);
  for (Index i = 0; i < s.data.n(); ++i) {
    const double t = s.data.x(i, 0);
    CHECK(t == doctest::Approx(static_cast<double>(i) / 100.0).epsilon(1e-15));
    CHECK(s.z_true[i] == spec.regime_at(t));
    CHECK(s.data.y(i) == spec.regimes[s.z_true[i]].mean(t));
  }
  CHECK(spec.regime_at(0.3) == 1);
  CHECK(spec.regime_at(0.2999) == 0);
  CHECK(spec.regime_at(1.0) == 2);
}

TEST_CASE("switch signal: determinism, noise level, presets, validation") {
  const SignalSpec base = SignalSpec::four_regimes(12);
  CHECK_NOTHROW(base.validate());
  CHECK_NOTHROW(SignalSpec::default_spec(1).validate());
  CHECK(SignalSpec::default_spec(1).regimes.size() == 8);
  CHECK(base.n == 550);
  const LabeledSample a = gen_switch_signal(base);
  const LabeledSample b = gen_switch_signal(base);
  CHECK(same_dataset(a.data, b.data));

  SignalSpec big = base;
  big.n = 4000;
  const LabeledSample s = gen_switch_signal(big);
  for (std::size_t r = 0; r < big.regimes.size(); ++r) {
    double ss = 0.0;
    int count = 0;
    for (Index i = 0; i < s.data.n(); ++i) {
      if (s.z_true[i] != static_cast<int>(r)) continue;
      const double e = s.data.y(i) - big.regimes[r].mean(s.data.x(i, 0));
      ss += e * e;
      ++count;
    }
    REQUIRE(count >= 100);
    CHECK(std::abs(std::sqrt(ss / count) - big.regimes[r].noise_sd) <= 0.1 * big.regimes[r].noise_sd);
  }

  SignalSpec bad = base;
  bad.breakpoints = {0.5, 0.4, 0.8};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = base;
  bad.regimes.pop_back();
  CHECK_THROWS_AS(gen_switch_signal(bad), InvalidArgument);
  bad = base;
  bad.regimes[0].noise_sd = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("Rng transforms") {
  Rng a(5), b(5);
  for (int k = 0; k < 100; ++k) CHECK(a.next() == b.next());

  Rng r(8);
  const int draws = 200000;
  double sum = 0.0, sq = 0.0, pois = 0.0;
  int counts[3] = {0, 0, 0};
  VectorXd probs(3);
  probs << 0.2, 0.5, 0.3;
  for (int k = 0; k < draws; ++k) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const double z = r.normal();
    sum += z;
    sq += z * z;
    CHECK(r.below(7) < 7);
    ++counts[r.categorical(probs)];
    pois += static_cast<double>(r.poisson(3.5));
  }
  CHECK(std::abs(sum / draws) < 0.01);
  CHECK(std::abs(sq / draws - 1.0) < 0.015);
  CHECK(std::abs(pois / draws - 3.5) < 0.02);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / static_cast<double>(draws) - probs(k)) < 0.005);
  CHECK(r.poisson(0.0) == 0);
  CHECK_THROWS_AS(r.below(0), InvalidArgument);
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) == mix_seed(1, 0));
}
