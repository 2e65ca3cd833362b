#include "moe/tasks.hpp"

#include "moe/error.hpp"

#include <cmath>
#include <iostream>

namespace moe {

namespace {

void require_gaussian(const MoeParams& theta, const char* what) {
  if (theta.family != Family::Gaussian)
    throw InvalidArgument(std::string(what) + " needs Gaussian experts");
}

// Component means mu_z(x).
VectorXd component_means(const VectorXd& x, const MoeParams& theta) {
  const VectorXd row = theta.design.augmented_row(x);
  VectorXd mu(theta.g());
  for (int z = 0; z < theta.g(); ++z) mu(z) = row.dot(theta.experts[z].coef.col(0));
  return mu;
}

}  // namespace

int argmax_label(const VectorXd& v) {
  Index best = 0;
  for (Index k = 1; k < v.size(); ++k)
    if (v(k) > v(best)) best = k;
  return static_cast<int>(best) + 1;
}

Prediction classify_map(const VectorXd& x, const MoeParams& theta) {
  if (theta.family != Family::Multinomial)
    throw InvalidArgument("classification needs multinomial experts");
  const VectorXd log_gates = gate_log_probs(x, theta.gating);
  const int k = theta.num_classes;
  VectorXd log_post(k);
  VectorXd terms(theta.g());
  for (int y = 1; y <= k; ++y) {
    for (int z = 0; z < theta.g(); ++z)
      terms(z) = log_gates(z) + expert_log_density(theta.family, y, x, theta.experts[z], theta.design);
    log_post(y - 1) = log_sum_exp(terms);
  }
  Prediction out;
  out.posterior = (log_post.array() - log_post.maxCoeff()).exp();
  out.posterior /= out.posterior.sum();
  out.label = argmax_label(log_post);
  return out;
}

Prediction cluster_posterior(double y, const VectorXd& x, const MoeParams& theta) {
  const VectorXd log_gates = gate_log_probs(x, theta.gating);
  VectorXd joint(theta.g());
  for (int z = 0; z < theta.g(); ++z)
    joint(z) = log_gates(z) + expert_log_density(theta.family, y, x, theta.experts[z], theta.design);
  Prediction out;
  out.posterior = (joint.array() - joint.maxCoeff()).exp();
  out.posterior /= out.posterior.sum();
  out.label = argmax_label(out.posterior);
  return out;
}

Prediction cluster_gate(const VectorXd& x, const MoeParams& theta) {
  Prediction out;
  out.posterior = gate_probs(x, theta.gating);
  out.label = argmax_label(out.posterior);
  return out;
}

double predict_mean(const VectorXd& x, const MoeParams& theta) {
  require_gaussian(theta, "mean prediction");
  return gate_probs(x, theta.gating).dot(component_means(x, theta));
}

double predict_variance(const VectorXd& x, const MoeParams& theta) {
  require_gaussian(theta, "variance prediction");
  const VectorXd gates = gate_probs(x, theta.gating);
  const VectorXd mu = component_means(x, theta);
  double second = 0.0;
  for (int z = 0; z < theta.g(); ++z)
    second += gates(z) * (mu(z) * mu(z) + theta.experts[z].variance);
  const double mean = gates.dot(mu);
  double v = second - mean * mean;
  if (v < 0.0) {
    if (v < -1e-12 * std::max(1.0, second))
      std::cerr << "warning: variance function evaluated to " << v << ", clamped to 0\n";
    v = 0.0;
  }
  return v;
}

RegressionPrediction predict_regression(const VectorXd& x, const MoeParams& theta) {
  return {predict_mean(x, theta), predict_variance(x, theta), std::nullopt};
}

}  // namespace moe
