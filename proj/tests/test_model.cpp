#include "support.hpp"

#include "moe/error.hpp"
#include "moe/model.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace moe;
using moe::test::random_params;
using moe::test::random_point;
using moe::test::random_response;

namespace {

ExpertParams gaussian_expert(VectorXd coef, double variance) {
  ExpertParams e;
  e.coef = coef;
  e.variance = variance;
  return e;
}

// Two Gaussian experts with intercepts 0 and 2, unit variance, equal gates.
MoeParams symmetric_pair() {
  MoeParams theta = MoeParams::zeros(Family::Gaussian, 2, 1);
  theta.experts[1].coef(0, 0) = 2.0;
  return theta;
}

// Components permuted so that component perm[k] of the result is component
// k of `theta`, with gating rows re-expressed against the new last component.
MoeParams permute_components(const MoeParams& theta, const std::vector<int>& perm) {
  MoeParams out = theta;
  for (int k = 0; k < theta.g(); ++k) {
    out.gating.row(perm[k]) = theta.gating.row(k);
    out.experts[perm[k]] = theta.experts[k];
  }
  const Eigen::RowVectorXd ref = out.gating.row(theta.g() - 1);
  for (int z = 0; z < theta.g(); ++z) out.gating.row(z) -= ref;
  out.gating.row(theta.g() - 1).setZero();
  return out;
}

}  // namespace

TEST_CASE("gate_probs hand values") {
  MatrixXd gating = MatrixXd::Zero(2, 2);
  VectorXd x(1);
  x << 0.7;
  CHECK(gate_probs(x, gating)(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gate_probs(x, gating)(1) == doctest::Approx(0.5).epsilon(1e-15));

  gating(0, 0) = std::log(3.0);
  for (double xv : {-3.0, 0.0, 12.5}) {
    x(0) = xv;
    const VectorXd gp = gate_probs(x, gating);
    CHECK(std::abs(gp(0) - 0.75) < 1e-15);
    CHECK(std::abs(gp(1) - 0.25) < 1e-15);
  }

  const VectorXd gp3 = gate_probs(VectorXd::Constant(2, 1.3), MatrixXd::Zero(3, 3));
  for (int z = 0; z < 3; ++z) CHECK(std::abs(gp3(z) - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("gate_probs stays finite for scores of magnitude 1e4") {
  MatrixXd gating = MatrixXd::Zero(3, 2);
  gating(0, 1) = 1e4;
  gating(1, 1) = -1e4;
  for (double xv : {-1.0, 1.0}) {
    VectorXd x(1);
    x << xv;
    const VectorXd gp = gate_probs(x, gating);
    CHECK(gp.allFinite());
    CHECK(std::abs(gp.sum() - 1.0) < 1e-12);
    CHECK(gp.maxCoeff() == doctest::Approx(1.0));
    const VectorXd lg = gate_log_probs(x, gating);
    CHECK(lg.allFinite());
    CHECK(lg.maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("gate_probs rejects mismatched or non-finite input") {
  const MatrixXd gating = MatrixXd::Zero(2, 3);
  CHECK_THROWS_AS(gate_probs(VectorXd::Zero(1), gating), InvalidArgument);
  VectorXd x(2);
  x << 0.0, std::nan("");
  CHECK_THROWS_AS(gate_probs(x, gating), InvalidArgument);
}

TEST_CASE("expert_log_density hand values") {
  const VectorXd x = VectorXd::Constant(2, 0.4);
  const ExpertDesign raw;
  ExpertParams e;
  e.coef = VectorXd::Zero(3);
  e.variance = 1.0;
  CHECK(expert_log_density(Family::Gaussian, 0.0, x, e, raw) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(expert_log_density(Family::Logistic, 1.0, x, e, raw) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(expert_log_density(Family::Poisson, 2.0, x, e, raw) ==
        doctest::Approx(-1.0 - std::log(2.0)).epsilon(1e-14));
  ExpertParams m;
  m.coef = MatrixXd::Zero(3, 3);
  for (double y : {1.0, 2.0, 3.0})
    CHECK(expert_log_density(Family::Multinomial, y, x, m, raw) ==
          doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("expert_log_density rejects bad variance and bad responses") {
  const VectorXd x = VectorXd::Zero(1);
  ExpertParams e;
  e.coef = VectorXd::Zero(2);
  e.variance = 0.0;
  CHECK_THROWS_AS(expert_log_density(Family::Gaussian, 0.0, x, e, {}), InvalidArgument);
  e.variance = 1.0;
  CHECK_THROWS(expert_log_density(Family::Logistic, 0.5, x, e, {}));
  CHECK_THROWS(expert_log_density(Family::Poisson, -1.0, x, e, {}));
}

TEST_CASE("moe_log_density collapses and matches the symmetric hand case") {
  Rng rng(11);
  for (Family f : {Family::Gaussian, Family::Logistic, Family::Poisson, Family::Multinomial}) {
    const MoeParams one = random_params(f, 1, 2, rng);
    for (int rep = 0; rep < 10; ++rep) {
      const VectorXd x = random_point(2, rng);
      const double y = random_response(one, rng);
      CHECK(std::abs(moe_log_density(y, x, one) -
                     expert_log_density(f, y, x, one.experts[0], one.design)) < 1e-14);
    }
    MoeParams same = random_params(f, 3, 2, rng);
    same.experts[1] = same.experts[0];
    same.experts[2] = same.experts[0];
    const VectorXd x = random_point(2, rng);
    const double y = random_response(same, rng);
    CHECK(std::abs(moe_log_density(y, x, same) -
                   expert_log_density(f, y, x, same.experts[0], same.design)) < 1e-12);
  }

  VectorXd x(1);
  x << 0.3;
  CHECK(moe_log_density(1.0, x, symmetric_pair()) == doctest::Approx(-1.4189385).epsilon(1e-7));
}

TEST_CASE("log_quasi_likelihood is the per-row sum") {
  Rng rng(5);
  const MoeParams theta = random_params(Family::Gaussian, 3, 2, rng);
  const Dataset data = test::sample_dataset(theta, 10, 99);
  double oracle = 0.0;
  for (Index i = 0; i < data.n(); ++i)
    oracle += moe_log_density(data.y(i), data.x.row(i).transpose(), theta);
  CHECK(std::abs(log_quasi_likelihood(data, theta) - oracle) < 1e-12);

  Dataset single;
  single.x = data.x.topRows(1);
  single.y = data.y.head(1);
  CHECK(log_quasi_likelihood(single, theta) ==
        doctest::Approx(moe_log_density(data.y(0), data.x.row(0).transpose(), theta)).epsilon(1e-15));

  Dataset copies;
  copies.x = data.x.row(0).replicate(7, 1);
  copies.y = VectorXd::Constant(7, data.y(0));
  CHECK(log_quasi_likelihood(copies, theta) ==
        doctest::Approx(7.0 * log_quasi_likelihood(single, theta)).epsilon(1e-14));
}

TEST_CASE("responsibilities: hand case, g = 1 and identical experts") {
  Dataset data;
  data.x = MatrixXd::Constant(1, 1, -0.2);
  data.y = VectorXd::Zero(1);
  const MatrixXd tau = responsibilities(data, symmetric_pair());
  CHECK(tau(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(tau(0, 1) == doctest::Approx(std::exp(-2.0) / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(tau(0, 0) == doctest::Approx(0.8807971).epsilon(1e-7));

  Rng rng(21);
  const MoeParams one = random_params(Family::Gaussian, 1, 2, rng);
  const Dataset d1 = test::sample_dataset(one, 25, 3);
  CHECK(responsibilities(d1, one).isApproxToConstant(1.0, 0.0));

  MoeParams same = MoeParams::zeros(Family::Gaussian, 2, 2);
  same.gating(0, 0) = std::log(0.3 / 0.7);
  same.experts[0] = same.experts[1] = gaussian_expert(VectorXd::Constant(3, 0.5), 1.7);
  const MatrixXd t2 = responsibilities(test::sample_dataset(same, 40, 8), same);
  CHECK((t2.col(0).array() - 0.3).abs().maxCoeff() < 1e-12);
  CHECK((t2.col(1).array() - 0.7).abs().maxCoeff() < 1e-12);
}

TEST_CASE("simplex invariants over random parameters") {
  Rng rng(2024);
  for (Family f : {Family::Gaussian, Family::Logistic, Family::Poisson, Family::Multinomial}) {
    for (int rep = 0; rep < 25; ++rep) {
      const int g = 1 + static_cast<int>(rng.below(5));
      const MoeParams theta = random_params(f, g, 2, rng, {}, 3, 4.0);
      for (int k = 0; k < 5; ++k) {
        const VectorXd gp = gate_probs(random_point(2, rng, -5.0, 5.0), theta.gating);
        CHECK((gp.array() > 0.0).all());
        CHECK(std::abs(gp.sum() - 1.0) < 1e-12);
      }
      const Dataset data = test::sample_dataset(theta, 30, rng.next());
      const MatrixXd tau = responsibilities(data, theta);
      CHECK((tau.array() >= 0.0).all());
      CHECK((tau.array() <= 1.0).all());
      CHECK(((tau.rowwise().sum().array() - 1.0).abs() < 1e-12).all());
    }
  }
}

TEST_CASE("saturated gate gives exact zero responsibilities") {
  MoeParams theta = MoeParams::zeros(Family::Gaussian, 2, 1);
  theta.gating(0, 0) = 800.0;
  Dataset data;
  data.x = MatrixXd::Zero(3, 1);
  data.y = VectorXd::Zero(3);
  const MatrixXd tau = responsibilities(data, theta);
  CHECK((tau.col(1).array() == 0.0).all());
  CHECK((tau.col(0).array() == 1.0).all());
}

TEST_CASE("permuting components leaves the mixture density unchanged") {
  Rng rng(77);
  for (Family f : {Family::Gaussian, Family::Logistic, Family::Poisson, Family::Multinomial}) {
    for (int rep = 0; rep < 10; ++rep) {
      const MoeParams theta = random_params(f, 3, 2, rng);
      for (const auto& perm : {std::vector<int>{2, 1, 0}, std::vector<int>{1, 0, 2},
                               std::vector<int>{1, 2, 0}}) {
        const MoeParams swapped = permute_components(theta, perm);
        swapped.validate();
        const VectorXd x = random_point(2, rng);
        const double y = random_response(theta, rng);
        CHECK(std::abs(moe_log_density(y, x, theta) - moe_log_density(y, x, swapped)) < 1e-10);
      }
    }
  }
}

TEST_CASE("expert densities normalize") {
  Rng rng(9);
  const VectorXd x = random_point(2, rng);
  for (int rep = 0; rep < 5; ++rep) {
    const MoeParams theta = random_params(Family::Gaussian, 1, 2, rng);
    const auto& e = theta.experts[0];
    const double mu = theta.design.augmented_row(x).dot(e.coef.col(0));
    const double sd = std::sqrt(e.variance);
    const int intervals = 4000;
    const double a = mu - 10 * sd, h = 20 * sd / intervals;
    double s = 0.0;
    for (int k = 0; k <= intervals; ++k) {
      const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      s += w * std::exp(expert_log_density(Family::Gaussian, a + k * h, x, e, theta.design));
    }
    CHECK(std::abs(s * h / 3.0 - 1.0) < 1e-8);
  }
  for (int rep = 0; rep < 5; ++rep) {
    const MoeParams lg = random_params(Family::Logistic, 1, 2, rng, {}, 3, 3.0);
    const double total = std::exp(expert_log_density(Family::Logistic, 0.0, x, lg.experts[0], {})) +
                         std::exp(expert_log_density(Family::Logistic, 1.0, x, lg.experts[0], {}));
    CHECK(std::abs(total - 1.0) < 1e-15);

    const MoeParams mn = random_params(Family::Multinomial, 1, 2, rng, {}, 4, 3.0);
    double mt = 0.0;
    for (int y = 1; y <= 4; ++y) mt += std::exp(expert_log_density(Family::Multinomial, y, x, mn.experts[0], {}));
    CHECK(std::abs(mt - 1.0) < 1e-14);

    const MoeParams po = random_params(Family::Poisson, 1, 2, rng, {}, 3, 1.5);
    const double mean = std::exp(ExpertDesign{}.augmented_row(x).dot(po.experts[0].coef.col(0)));
    const int top = static_cast<int>(std::ceil(mean + 40.0 * std::sqrt(mean)));
    double pt = 0.0;
    for (int y = 0; y <= top; ++y) pt += std::exp(expert_log_density(Family::Poisson, y, x, po.experts[0], {}));
    CHECK(std::abs(pt - 1.0) < 1e-10);
  }
}

TEST_CASE("expert design transforms") {
  const auto poly = ExpertDesign::polynomial(2);
  VectorXd x(1);
  x << 0.5;
  const VectorXd row = poly.augmented_row(x);
  REQUIRE(row.size() == 3);
  CHECK(row(0) == 1.0);
  CHECK(row(1) == 0.5);
  CHECK(row(2) == 0.25);
  CHECK(poly.width(1) == 2);
  CHECK(ExpertDesign::raw().width(4) == 4);
  CHECK(ExpertDesign::parse(poly.to_string()) == poly);
  CHECK(ExpertDesign::parse("raw") == ExpertDesign::raw());
  CHECK_THROWS_AS(ExpertDesign::parse("poly:0"), InvalidArgument);
  CHECK_THROWS_AS(ExpertDesign::parse("spline"), InvalidArgument);
}

TEST_CASE("pack and unpack are inverse and names line up") {
  Rng rng(31);
  for (Family f : {Family::Gaussian, Family::Logistic, Family::Poisson, Family::Multinomial}) {
    const MoeParams theta = random_params(f, 3, 2, rng);
    const VectorXd v = pack(theta);
    CHECK(v.size() == parameter_count(theta));
    CHECK(static_cast<Index>(parameter_names(theta).size()) == v.size());
    const MoeParams back = unpack(theta, v);
    CHECK(back.gating == theta.gating);
    for (int z = 0; z < 3; ++z) {
      CHECK(back.experts[z].coef == theta.experts[z].coef);
      CHECK(back.experts[z].variance == theta.experts[z].variance);
    }
    CHECK_THROWS_AS(unpack(theta, VectorXd::Zero(v.size() + 1)), InvalidArgument);
  }
  const MoeParams gauss = MoeParams::zeros(Family::Gaussian, 2, 1);
  const auto names = parameter_names(gauss);
  CHECK(names.front() == "gate1.b0");
  CHECK(names.back() == "expert2.variance");
}

TEST_CASE("validation rejects broken parameters and datasets") {
  MoeParams theta = MoeParams::zeros(Family::Gaussian, 2, 1);
  theta.gating(1, 0) = 0.1;
  CHECK_THROWS_AS(theta.validate(), InvalidArgument);

  MoeParams mn = MoeParams::zeros(Family::Multinomial, 2, 1, {}, 3);
  mn.experts[0].coef(0, 2) = 1.0;
  CHECK_THROWS_AS(mn.validate(), InvalidArgument);

  Dataset d;
  d.x = MatrixXd::Zero(2, 1);
  d.y = VectorXd::Zero(2);
  d.kind = ResponseKind::Categorical;
  d.num_classes = 3;
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
  d.y << 1, 3;
  CHECK_NOTHROW(d.validate());
  CHECK_THROWS_AS(check_compatible(d, MoeParams::zeros(Family::Gaussian, 1, 1)), InvalidArgument);
  CHECK_THROWS_AS(check_compatible(d, MoeParams::zeros(Family::Multinomial, 1, 2, {}, 3)), InvalidArgument);
  CHECK_THROWS_AS(parse_family("gamma"), InvalidArgument);
  CHECK(parse_family("poisson") == Family::Poisson);
}
