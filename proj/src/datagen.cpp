#include "moe/datagen.hpp"

#include "moe/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace moe {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the radius argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below needs n > 0");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

int Rng::categorical(const VectorXd& probs) {
  const double u = uniform() * probs.sum();
  double acc = 0.0;
  for (Index k = 0; k < probs.size(); ++k) {
    acc += probs(k);
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding in the cumulative sum: fall back to the last positive entry.
  for (Index k = probs.size() - 1; k >= 0; --k)
    if (probs(k) > 0.0) return static_cast<int>(k);
  return 0;
}

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidArgument("Poisson mean must be >= 0");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Sequential inversion.
    double p = std::exp(-mean);
    double cdf = p;
    const double u = uniform();
    std::int64_t k = 0;
    while (u > cdf && p > 0.0) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  // Transformed rejection with squeeze (Hormann 1993).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + static_cast<double>(k) * loglam - std::lgamma(static_cast<double>(k) + 1.0))
      return k;
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

int three_class_label(double x1, double x2) {
  if (x1 * x1 + x2 * x2 <= 4.0) return 2;
  const bool upper = x2 >= 2.0 && x2 <= 4.0;
  const bool left = x1 >= -4.0 && x1 <= -2.0;
  const bool right = x1 >= 2.0 && x1 <= 4.0;
  if (upper && (left || right)) return 3;
  return 1;
}

Dataset gen_three_class(Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  Rng rng(seed);
  Dataset data;
  data.x.resize(n, 2);
  data.y.resize(n);
  data.kind = ResponseKind::Categorical;
  data.num_classes = 3;
  for (Index i = 0; i < n; ++i) {
    data.x(i, 0) = rng.uniform(-5.0, 5.0);
    data.x(i, 1) = rng.uniform(-5.0, 5.0);
    data.y(i) = three_class_label(data.x(i, 0), data.x(i, 1));
  }
  return data;
}

CovariateSampler uniform_box(int p, double lo, double hi) {
  return [p, lo, hi](Rng& rng) {
    VectorXd x(p);
    for (int j = 0; j < p; ++j) x(j) = rng.uniform(lo, hi);
    return x;
  };
}

double sample_expert(Family family, const VectorXd& x, const ExpertParams& expert,
                     const ExpertDesign& design, Rng& rng) {
  const VectorXd row = design.augmented_row(x);
  switch (family) {
    case Family::Gaussian:
      return row.dot(expert.coef.col(0)) + std::sqrt(expert.variance) * rng.normal();
    case Family::Logistic: {
      const double eta = row.dot(expert.coef.col(0));
      return rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    case Family::Poisson:
      return static_cast<double>(rng.poisson(std::exp(row.dot(expert.coef.col(0)))));
    case Family::Multinomial: {
      const VectorXd eta = expert.coef.transpose() * row;
      const VectorXd probs = (eta.array() - eta.maxCoeff()).exp();
      return rng.categorical(probs) + 1.0;
    }
  }
  return 0.0;
}

LabeledSample gen_moe_sample(const MoeParams& theta, const CovariateSampler& sampler,
                             Index n, std::uint64_t seed) {
  theta.validate();
  if (n < 1) throw InvalidArgument("n must be at least 1");
  Rng rng(seed);
  LabeledSample out;
  out.data.x.resize(n, theta.p);
  out.data.y.resize(n);
  out.data.kind = response_kind(theta.family);
  out.data.num_classes = theta.num_classes;
  out.z_true.resize(n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd x = sampler(rng);
    if (x.size() != theta.p) throw InvalidArgument("covariate sampler returned the wrong width");
    const int z = rng.categorical(gate_probs(x, theta.gating));
    out.data.x.row(i) = x.transpose();
    out.data.y(i) = sample_expert(theta.family, x, theta.experts[z], theta.design, rng);
    out.z_true[i] = z;
  }
  return out;
}

// ---------------------------------------------------------------------------

void SignalSpec::validate() const {
  if (n < 2) throw InvalidArgument("signal needs at least two points");
  if (regimes.size() != breakpoints.size() + 1)
    throw InvalidArgument("signal needs exactly one more regime than breakpoints");
  double last = 0.0;
  for (double b : breakpoints) {
    if (!(b > last && b < 1.0))
      throw InvalidArgument("breakpoints must be strictly increasing inside (0, 1)");
    last = b;
  }
  for (const auto& r : regimes) {
    if (!(r.noise_sd >= 0.0) || !std::isfinite(r.noise_sd))
      throw InvalidArgument("noise sd must be non-negative");
    if (!std::isfinite(r.b0) || !std::isfinite(r.b1) || !std::isfinite(r.b2))
      throw InvalidArgument("regime coefficients must be finite");
  }
}

int SignalSpec::regime_at(double t) const {
  int r = 0;
  while (r < static_cast<int>(breakpoints.size()) && t >= breakpoints[r]) ++r;
  return r;
}

SignalSpec SignalSpec::default_spec(std::uint64_t seed) {
  SignalSpec spec;
  spec.seed = seed;
  spec.breakpoints = {0.08, 0.17, 0.3, 0.42, 0.55, 0.68, 0.84};
  spec.regimes = {
      {250.0, 0.0, 0.0, 6.0},
      {-100.0, 11000.0, -40000.0, 15.0},
      {900.0, -1000.0, 0.0, 12.0},
      {450.0, 0.0, 0.0, 8.0},
      {-1100.0, 5600.0, -4400.0, 20.0},
      {300.0, 0.0, 0.0, 6.0},
      {120.0, 500.0, -400.0, 10.0},
      {100.0, 60.0, 0.0, 4.0},
  };
  return spec;
}

SignalSpec SignalSpec::four_regimes(std::uint64_t seed) {
  SignalSpec spec;
  spec.seed = seed;
  spec.breakpoints = {0.2, 0.45, 0.7};
  spec.regimes = {
      {250.0, 0.0, 0.0, 10.0},
      {900.0, -600.0, 0.0, 15.0},
      {1061.25, -2300.0, 2000.0, 12.0},
      {150.0, 100.0, 0.0, 10.0},
  };
  return spec;
}

LabeledSample gen_switch_signal(const SignalSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  LabeledSample out;
  out.data.x.resize(spec.n, 1);
  out.data.y.resize(spec.n);
  out.data.kind = ResponseKind::Real;
  out.z_true.resize(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(spec.n - 1);
    const int r = spec.regime_at(t);
    const Regime& regime = spec.regimes[r];
    out.data.x(i, 0) = t;
    out.data.y(i) = regime.mean(t) + regime.noise_sd * rng.normal();
    out.z_true[i] = r;
  }
  return out;
}

}  // namespace moe
