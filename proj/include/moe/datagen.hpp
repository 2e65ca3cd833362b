#pragma once

// Seeded synthetic data generators.
//
// All randomness comes from `Rng`: std::mt19937_64 (bit-exact by the C++
// standard) with uniform, normal, categorical and Poisson transforms written
// out here so that fixtures do not depend on a standard library's
// distribution implementations.

#include "moe/model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace moe {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, one cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Index drawn with the given (normalized) probabilities.
  int categorical(const VectorXd& probs);
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter);

/// Dataset plus the latent component (0-based) of every row.
struct LabeledSample {
  Dataset data;
  std::vector<int> z_true;
};

/// Class of a point in the three-class problem: 2 inside the radius-2 ball,
/// 3 inside [-4,-2]x[2,4] or [2,4]x[2,4], 1 elsewhere.
int three_class_label(double x1, double x2);

/// x ~ Uniform[-5,5]^2, categorical response with K = 3.
Dataset gen_three_class(Index n, std::uint64_t seed);

using CovariateSampler = std::function<VectorXd(Rng&)>;

/// Independent Uniform[lo, hi] coordinates.
CovariateSampler uniform_box(int p, double lo, double hi);

/// Draws y from a single expert at x.
double sample_expert(Family family, const VectorXd& x, const ExpertParams& expert,
                     const ExpertDesign& design, Rng& rng);

/// Hierarchical sampling: x from the sampler, Z from the gates, y from Z's expert.
LabeledSample gen_moe_sample(const MoeParams& theta, const CovariateSampler& sampler,
                             Index n, std::uint64_t seed);

struct Regime {
  double b0 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double noise_sd = 0.0;

  double mean(double t) const { return b0 + t * (b1 + t * b2); }
};

/// Piecewise-quadratic signal on equally spaced times in [0, 1].
struct SignalSpec {
  Index n = 550;
  /// Strictly increasing, inside (0, 1); regimes.size() == breakpoints.size() + 1.
  std::vector<double> breakpoints;
  std::vector<Regime> regimes;
  std::uint64_t seed = 0;

  void validate() const;
  /// Regime (0-based) covering time t; breakpoints belong to the later regime.
  int regime_at(double t) const;

  /// Eight mixed flat and curved regimes with heteroscedastic noise,
  /// loosely shaped like a switch-operation power trace.
  static SignalSpec default_spec(std::uint64_t seed);
  /// Four well-separated regimes with moderate noise.
  static SignalSpec four_regimes(std::uint64_t seed);
};

/// x_i = i/(n-1), y_i = regime quadratic + N(0, sd^2); z_true is the regime.
LabeledSample gen_switch_signal(const SignalSpec& spec);

}  // namespace moe
