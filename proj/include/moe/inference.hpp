#pragma once

// Scores and the sandwich covariance bread^{-1} meat bread^{-1} / n of the
// maximum quasi-likelihood estimator. Every vector and matrix here follows the
// free-parameter layout of `pack`.

#include "moe/model.hpp"
#include "moe/tasks.hpp"

namespace moe {

/// Gradient of log MoE(y | x; theta) in the free parameters.
VectorXd score_vector(double y, const VectorXd& x, const MoeParams& theta);

/// One score row per observation (n x dim).
MatrixXd score_matrix(const Dataset& data, const MoeParams& theta);

struct SandwichCovariance {
  /// Average per-row Hessian of the log density.
  MatrixXd bread;
  /// Average outer product of per-row scores.
  MatrixXd meat;
  /// bread^{-1} meat bread^{-1} / n, symmetrized.
  MatrixXd cov;
  /// Ratio of extreme singular values of the bread.
  double condition = 0.0;

  VectorXd standard_errors() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Bread by central differences of the analytic score summed over rows (step
/// 1e-5 (1 + |theta_j|)), meat from analytic scores. Throws
/// SingularInformationError when the bread cannot be inverted; in that case
/// the fitted root may not be isolated (components not identifiable).
SandwichCovariance sandwich_covariance(const Dataset& data, const MoeParams& theta);

/// Delta-method interval m(x) +- z sqrt(grad' cov grad) for the mean function
/// of a Gaussian model, gradient by central differences in theta.
Interval mean_ci(const VectorXd& x, const MoeParams& theta, const MatrixXd& cov, double level);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace moe
