#pragma once

// Blockwise minorization-maximization estimator of the log-quasi-likelihood.
//
// One cycle visits the gating blocks 0..g-2 and then the expert block. Each
// block update maximizes (or, for GLM experts, increases) a minorizer
// anchored at the current iterate, so the log-quasi-likelihood never
// decreases:
//  - gating block z: quadratic lower bound with fixed curvature H/4 where
//    H = sum_i x~_i x~_i^T, giving alpha_z += 4 H^{-1} sum_i (tau_iz - gate_iz) x~_i;
//  - Gaussian experts: weighted least squares and weighted residual variance;
//  - logistic / Poisson / multinomial experts: weighted Newton (IRLS) steps
//    with step halving on the weighted objective and a final guard on Q_n.

#include "moe/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace moe {

struct FitResult;

struct FitConfig {
  int max_cycles = 1000;
  /// Stop once |Q_r - Q_{r-1}| <= rel_tol * |Q_{r-1}|.
  double rel_tol = 1e-8;
  /// Gaussian variance floor = factor * sample variance of y.
  double variance_floor_factor = 1e-10;
  int n_starts = 10;
  std::uint64_t seed = 0;
  int irls_max_inner = 25;
  /// Worker threads for multi-start runs. Results do not depend on it.
  int threads = 1;
  /// Called with every completed single fit (serialized across threads).
  std::function<void(const FitResult&)> observer;

  void validate() const;
};

struct FitResult {
  MoeParams theta_hat;
  /// Q_n at the initial point followed by Q_n after every cycle.
  std::vector<double> q_trace;
  int cycles_used = 0;
  bool converged = false;
  /// A Gaussian variance sits on the floor.
  bool degenerate = false;
  /// A GLM coefficient sits on the +-30 cap (separation).
  bool separated = false;
  std::uint64_t seed_used = 0;

  double log_ql() const { return q_trace.back(); }
};

/// Largest absolute GLM coefficient allowed.
inline constexpr double kCoefficientCap = 30.0;

double variance_floor(const Dataset& data, double factor);

/// One gating update for block z (0-based, z < g-1). Returns the new
/// (intercept, slopes) row.
VectorXd gating_block_update(const Dataset& data, const MoeParams& theta, int z);

/// Value of the block-z quadratic minorizer anchored at `anchor`, evaluated at
/// `block`. Equals Q_n(anchor) at block == anchor.gating.row(z).
double gating_minorizer(const Dataset& data, const MoeParams& anchor, int z,
                        const VectorXd& block);

struct ExpertUpdate {
  std::vector<ExpertParams> experts;
  bool degenerate = false;
  bool separated = false;
};

/// Closed-form weighted least squares update of every Gaussian expert.
ExpertUpdate gaussian_expert_block_update(const Dataset& data, const MoeParams& theta,
                                          double variance_floor);

/// IRLS update of every logistic / Poisson / multinomial expert. Keeps the
/// previous experts if the proposal would lower Q_n.
ExpertUpdate glm_expert_block_update(const Dataset& data, const MoeParams& theta,
                                     int irls_max_inner);

/// Weighted fit of a single expert from scratch (hard or soft weights).
ExpertParams fit_weighted_expert(const Dataset& data, const VectorXd& weights,
                                 const MoeParams& shape, double variance_floor,
                                 int irls_max_inner, bool* separated = nullptr);

/// Blockwise-MM iterations from `init`. Deterministic in its inputs.
FitResult fit(const Dataset& data, const MoeParams& init, const FitConfig& config);

/// Random hard partition of the rows into g non-empty groups followed by a
/// per-group expert fit; gating starts uniform.
///
/// The partition assigns each row to the nearest of g rows in standardized
/// (covariate, response) space, drawn by D^2 (k-means++) seeding; draws leaving a group with too
/// few rows for its expert fit are retried, and after 20 retries a balanced
/// random deal is used instead. g = 1 ignores the seed.
MoeParams initialize(const Dataset& data, int g, Family family, const ExpertDesign& design,
                     std::uint64_t seed, const FitConfig& config = {});

/// Seed of start k (0-based) for a multi-start run.
std::uint64_t start_seed(std::uint64_t seed, int start);

/// Runs `config.n_starts` seeded fits and keeps the one with the largest final
/// Q_n; non-degenerate fits are preferred over degenerate ones and ties go to
/// the lowest start index. Throws FitError only if every start failed.
FitResult multi_start_fit(const Dataset& data, int g, Family family,
                          const ExpertDesign& design, const FitConfig& config);

}  // namespace moe
