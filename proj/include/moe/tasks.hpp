#pragma once

// Plug-in MAP classification and clustering, and regression functionals of a
// fitted model. All argmax rules break ties toward the smallest index.

#include "moe/model.hpp"

#include <optional>

namespace moe {

struct Prediction {
  /// Class label in 1..K for classification, component in 1..g for clustering.
  int label = 0;
  /// Simplex point the label was taken from.
  VectorXd posterior;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct RegressionPrediction {
  double mean = 0.0;
  double variance = 0.0;
  std::optional<Interval> ci;
};

/// 1-based index of the largest entry; first one wins ties.
int argmax_label(const VectorXd& v);

/// Class posterior sum_z gate_z(x) expert_z(y|x) over y = 1..K and its argmax.
Prediction classify_map(const VectorXd& x, const MoeParams& theta);

/// Responsibilities of (x, y) and their argmax.
Prediction cluster_posterior(double y, const VectorXd& x, const MoeParams& theta);

/// Gate probabilities at x and their argmax.
Prediction cluster_gate(const VectorXd& x, const MoeParams& theta);

/// E(Y | x) = sum_z gate_z(x) mu_z(x) for Gaussian experts.
double predict_mean(const VectorXd& x, const MoeParams& theta);

/// var(Y | x) = sum_z gate_z(x) (mu_z(x)^2 + sigma_z^2) - E(Y | x)^2, clamped
/// at zero against rounding.
double predict_variance(const VectorXd& x, const MoeParams& theta);

RegressionPrediction predict_regression(const VectorXd& x, const MoeParams& theta);

}  // namespace moe
