#pragma once

// Helpers shared by the test binaries: random parameter draws, small
// closed-form oracles and finite differences.

#include "moe/datagen.hpp"
#include "moe/model.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace moe::test {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Random parameters of the given shape; GLM coefficients kept moderate.
inline MoeParams random_params(Family family, int g, int p, Rng& rng, ExpertDesign design = {},
                               int num_classes = 3, double scale = 1.0) {
  MoeParams theta = MoeParams::zeros(family, g, p, design, family == Family::Multinomial ? num_classes : 0);
  for (int z = 0; z + 1 < g; ++z)
    for (Index j = 0; j <= p; ++j) theta.gating(z, j) = scale * rng.uniform(-1.0, 1.0);
  for (auto& e : theta.experts) {
    const Index used = family == Family::Multinomial ? e.coef.cols() - 1 : e.coef.cols();
    for (Index l = 0; l < used; ++l)
      for (Index j = 0; j < e.coef.rows(); ++j) e.coef(j, l) = scale * rng.uniform(-1.0, 1.0);
    if (family == Family::Gaussian) e.variance = rng.uniform(0.3, 2.0);
  }
  return theta;
}

/// A response of the right kind drawn uniformly from a plausible range.
inline double random_response(const MoeParams& theta, Rng& rng) {
  switch (theta.family) {
    case Family::Gaussian: return rng.uniform(-2.0, 2.0);
    case Family::Logistic: return static_cast<double>(rng.below(2));
    case Family::Poisson: return static_cast<double>(rng.below(6));
    case Family::Multinomial: return static_cast<double>(1 + rng.below(theta.num_classes));
  }
  return 0.0;
}

inline VectorXd random_point(int p, Rng& rng, double lo = -1.5, double hi = 1.5) {
  VectorXd x(p);
  for (int j = 0; j < p; ++j) x(j) = rng.uniform(lo, hi);
  return x;
}

/// Uniform covariates plus a sample from `theta`.
inline Dataset sample_dataset(const MoeParams& theta, Index n, std::uint64_t seed, double lo = -2.0,
                              double hi = 2.0) {
  return gen_moe_sample(theta, uniform_box(theta.p, lo, hi), n, seed).data;
}

struct OlsFit {
  VectorXd beta;
  double variance = 0.0;  // residual sum of squares / n
};

/// Ordinary least squares with intercept via column-pivoted QR.
inline OlsFit ols(const MatrixXd& x, const VectorXd& y) {
  MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  OlsFit out;
  out.beta = a.colPivHouseholderQr().solve(y);
  out.variance = (y - a * out.beta).squaredNorm() / static_cast<double>(y.size());
  return out;
}

/// Central-difference gradient of f at v with per-coordinate step h (1 + |v_j|).
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& v,
                            double h) {
  VectorXd grad(v.size());
  for (Index j = 0; j < v.size(); ++j) {
    const double step = h * (1.0 + std::abs(v(j)));
    VectorXd lo = v, hi = v;
    lo(j) -= step;
    hi(j) += step;
    grad(j) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return grad;
}

/// Fraction of positions where `a` and `perm(b)` agree, maximized over all
/// permutations of the labels 0..g-1 in `b`.
inline double best_permutation_agreement(const std::vector<int>& a, const std::vector<int>& b, int g) {
  std::vector<int> perm(g);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] == perm[b[i]]) ++hits;
    best = std::max(best, static_cast<double>(hits) / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("moe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace moe::test
