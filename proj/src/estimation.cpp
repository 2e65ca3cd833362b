#include "moe/estimation.hpp"

#include "moe/datagen.hpp"
#include "moe/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace moe {

namespace {

constexpr double kStarvedFraction = 1e-12;
constexpr double kSingularRcond = 1e-14;
// Largest change of any single coefficient in one inner Newton step.
constexpr double kMaxNewtonStep = 10.0;
// Inner Newton iterations stop once the (predicted) gain falls below this
// fraction of the weighted objective.
constexpr double kNegligibleGain = 1e-12;

// Design matrices shared by every block update of one fit.
struct Workspace {
  Workspace(const Dataset& d, const MoeParams& theta)
      : data(d),
        gate_design(gating_design(d.x)),
        expert_design(theta.design.augmented_matrix(d.x)) {}

  const Dataset& data;
  MatrixXd gate_design;
  MatrixXd expert_design;
};

Eigen::LLT<MatrixXd> factor_gating_curvature(const MatrixXd& gate_design) {
  const MatrixXd h = gate_design.transpose() * gate_design;
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond)
    throw RankDeficientError(
        "gating curvature matrix sum_i x~_i x~_i^T is singular: covariates are constant or "
        "collinear; remove duplicated columns");
  return llt;
}

// alpha_z + 4 H^{-1} sum_i (tau_iz - gate_iz) x~_i
VectorXd gating_step(const MatrixXd& gate_design, const Eigen::LLT<MatrixXd>& curvature,
                     const VectorXd& tau_z, const VectorXd& gate_z, const MatrixXd& gating,
                     int z) {
  const VectorXd grad = gate_design.transpose() * (tau_z - gate_z);
  return gating.row(z).transpose() + 4.0 * curvature.solve(grad);
}

// Gate and responsibility columns during one sweep over the gating blocks.
// The expert log densities stay fixed for the whole sweep, so after a block
// update only that block's column of shifted exponentials is refreshed.
class GatingSweep {
 public:
  GatingSweep(const MatrixXd& gate_design, const MatrixXd& log_experts, const MatrixXd& gating)
      : design_(gate_design), log_experts_(log_experts) {
    scores_ = design_ * gating.transpose();
    refresh();
  }

  VectorXd gate(int z) const { return gate_exp_.col(z).cwiseQuotient(gate_sum_); }
  VectorXd tau(int z) const { return joint_exp_.col(z).cwiseQuotient(joint_sum_); }

  void set_row(int z, const VectorXd& alpha) {
    scores_.col(z) = design_ * alpha;
    const VectorXd ga = scores_.col(z) - gate_shift_;
    const VectorXd ja = scores_.col(z) + log_experts_.col(z) - joint_shift_;
    if (ga.maxCoeff() > kExpHeadroom || ja.maxCoeff() > kExpHeadroom) {
      refresh();
      return;
    }
    gate_exp_.col(z) = ga.array().exp();
    joint_exp_.col(z) = ja.array().exp();
    gate_sum_ = gate_exp_.rowwise().sum();
    joint_sum_ = joint_exp_.rowwise().sum();
    if (gate_sum_.minCoeff() < kTinySum || joint_sum_.minCoeff() < kTinySum) refresh();
  }

 private:
  static constexpr double kExpHeadroom = 600.0;
  static constexpr double kTinySum = 1e-250;

  void refresh() {
    gate_shift_ = scores_.rowwise().maxCoeff();
    const MatrixXd joint = scores_ + log_experts_;
    joint_shift_ = joint.rowwise().maxCoeff();
    for (Index i = 0; i < joint_shift_.size(); ++i)
      if (!std::isfinite(joint_shift_(i)) || !std::isfinite(gate_shift_(i)))
        throw NumericalError("mixture density is not finite at row " + std::to_string(i + 1));
    gate_exp_ = (scores_.colwise() - gate_shift_).array().exp();
    joint_exp_ = (joint.colwise() - joint_shift_).array().exp();
    gate_sum_ = gate_exp_.rowwise().sum();
    joint_sum_ = joint_exp_.rowwise().sum();
  }

  const MatrixXd& design_;
  const MatrixXd& log_experts_;
  MatrixXd scores_, gate_exp_, joint_exp_;
  VectorXd gate_shift_, joint_shift_, gate_sum_, joint_sum_;
};

void check_not_starved(const VectorXd& w, Index n, int z) {
  if (w.sum() < static_cast<double>(n) * kStarvedFraction)
    throw EmptyComponentError("component " + std::to_string(z + 1) +
                              " has no responsibility left (starved)");
}

ExpertParams weighted_gaussian(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                               double floor, int z, bool& degenerate) {
  check_not_starved(w, y.size(), z);
  const MatrixXd xw = x.array().colwise() * w.array();
  const MatrixXd gram = xw.transpose() * x;
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond)
    throw RankDeficientError("weighted Gram matrix of component " + std::to_string(z + 1) +
                             " is singular");
  ExpertParams e;
  e.coef = llt.solve(xw.transpose() * y);
  const VectorXd r = y - x * e.coef.col(0);
  e.variance = w.dot(r.cwiseAbs2()) / w.sum();
  if (!(e.variance > floor)) {
    e.variance = floor;
    degenerate = true;
  }
  return e;
}

// Weighted log-likelihood of one GLM expert and, optionally, its gradient and
// negated Hessian in the free coefficients (classes 0..L-1 stacked).
struct GlmProblem {
  Family family;
  const MatrixXd& x;
  const VectorXd& y;
  const VectorXd& w;
  Index free_classes;  // 1, or K-1 for multinomial

  Index dim() const { return x.cols() * free_classes; }

  MatrixXd coef_from(const VectorXd& v, Index total_cols) const {
    MatrixXd coef = MatrixXd::Zero(x.cols(), total_cols);
    for (Index l = 0; l < free_classes; ++l) coef.col(l) = v.segment(l * x.cols(), x.cols());
    return coef;
  }

  // Constant terms such as log(y!) are dropped; only differences matter.
  double objective(const MatrixXd& coef) const {
    const Index n = y.size();
    if (family == Family::Multinomial) {
      const MatrixXd eta = x * coef;
      const VectorXd lse = row_log_sum_exp(eta);
      double total = 0.0;
      for (Index i = 0; i < n; ++i)
        if (w(i) != 0.0) total += w(i) * (eta(i, static_cast<Index>(y(i)) - 1) - lse(i));
      return total;
    }
    const Eigen::ArrayXd eta = (x * coef.col(0)).array();
    Eigen::ArrayXd ll;
    if (family == Family::Logistic)
      ll = y.array() * eta - (eta.max(0.0) + (-eta.abs()).exp().log1p());
    else
      ll = y.array() * eta - eta.exp();
    return (w.array() * ll).sum();
  }

  void derivatives(const MatrixXd& coef, VectorXd& grad, MatrixXd& neg_hess) const {
    const Index n = y.size();
    const Index d = x.cols();
    grad.setZero(dim());
    neg_hess.setZero(dim(), dim());
    if (family == Family::Multinomial) {
      MatrixXd prob = x * coef;
      prob.colwise() -= row_log_sum_exp(prob);
      prob = prob.array().exp();
      for (Index l = 0; l < free_classes; ++l) {
        VectorXd resid(n);
        for (Index i = 0; i < n; ++i)
          resid(i) = w(i) * ((static_cast<Index>(y(i)) == l + 1 ? 1.0 : 0.0) - prob(i, l));
        grad.segment(l * d, d) = x.transpose() * resid;
        for (Index m = l; m < free_classes; ++m) {
          VectorXd cw(n);
          for (Index i = 0; i < n; ++i)
            cw(i) = w(i) * prob(i, l) * ((l == m ? 1.0 : 0.0) - prob(i, m));
          const MatrixXd block = x.transpose() * (x.array().colwise() * cw.array()).matrix();
          neg_hess.block(l * d, m * d, d, d) = block;
          if (m != l) neg_hess.block(m * d, l * d, d, d) = block.transpose();
        }
      }
      return;
    }
    const VectorXd eta = x * coef.col(0);
    VectorXd resid(n), cw(n);
    for (Index i = 0; i < n; ++i) {
      double mean = 0.0, var = 0.0;
      if (family == Family::Logistic) {
        mean = 1.0 / (1.0 + std::exp(-eta(i)));
        var = mean * (1.0 - mean);
      } else {
        mean = std::exp(eta(i));
        var = mean;
      }
      resid(i) = w(i) * (y(i) - mean);
      cw(i) = w(i) * var;
    }
    grad = x.transpose() * resid;
    neg_hess = x.transpose() * (x.array().colwise() * cw.array()).matrix();
  }
};

VectorXd free_vector(const MatrixXd& coef, Index free_classes) {
  VectorXd v(coef.rows() * free_classes);
  for (Index l = 0; l < free_classes; ++l) v.segment(l * coef.rows(), coef.rows()) = coef.col(l);
  return v;
}

// Damped Newton ascent on the weighted objective, with coefficients projected
// onto the +-cap box and step halving until the objective does not decrease.
MatrixXd weighted_glm(Family family, const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                      const MatrixXd& start, int max_inner, int z, bool& separated) {
  check_not_starved(w, y.size(), z);
  const Index total_cols = start.cols();
  const GlmProblem problem{family, x, y, w,
                           family == Family::Multinomial ? total_cols - 1 : 1};
  VectorXd current = free_vector(start, problem.free_classes);
  double f = problem.objective(start);
  VectorXd grad;
  MatrixXd neg_hess;
  for (int it = 0; it < max_inner; ++it) {
    problem.derivatives(problem.coef_from(current, total_cols), grad, neg_hess);
    // Active-set Newton on the box: coordinates sitting on the cap that the
    // step would push outward are pinned and the system re-solved on the rest.
    std::vector<bool> pinned(current.size());
    for (Index j = 0; j < current.size(); ++j)
      pinned[j] = (current(j) >= kCoefficientCap && grad(j) > 0.0) ||
                  (current(j) <= -kCoefficientCap && grad(j) < 0.0);
    VectorXd step = VectorXd::Zero(current.size());
    double predicted = 0.0;
    for (Index round = 0; round <= current.size(); ++round) {
      std::vector<Index> free_idx;
      for (Index j = 0; j < current.size(); ++j)
        if (!pinned[j]) free_idx.push_back(j);
      step.setZero();
      predicted = 0.0;
      if (free_idx.empty()) break;
      const auto nf = static_cast<Index>(free_idx.size());
      MatrixXd h(nf, nf);
      VectorXd gf(nf);
      for (Index a = 0; a < nf; ++a) {
        gf(a) = grad(free_idx[a]);
        for (Index b = 0; b < nf; ++b) h(a, b) = neg_hess(free_idx[a], free_idx[b]);
      }
      h.diagonal().array() += 1e-10 * std::max(1.0, h.diagonal().maxCoeff());
      Eigen::LDLT<MatrixXd> ldlt(h);
      VectorXd sf = ldlt.solve(gf);
      if (ldlt.info() != Eigen::Success || !sf.allFinite()) sf = gf / (1.0 + gf.norm());
      predicted = 0.5 * gf.dot(sf);
      for (Index a = 0; a < nf; ++a) step(free_idx[a]) = sf(a);
      bool repin = false;
      for (Index j = 0; j < current.size(); ++j)
        if (!pinned[j] && std::abs(current(j)) >= kCoefficientCap && step(j) * current(j) > 0.0) {
          pinned[j] = true;
          repin = true;
        }
      if (!repin) break;
    }
    if (predicted <= kNegligibleGain * (1.0 + std::abs(f))) break;
    const double longest = step.lpNorm<Eigen::Infinity>();
    if (longest > kMaxNewtonStep) step *= kMaxNewtonStep / longest;
    // Shorten the whole step so it stays inside the box.
    double room = 1.0;
    for (Index j = 0; j < current.size(); ++j)
      if (step(j) != 0.0) {
        const double limit = ((step(j) > 0.0 ? kCoefficientCap : -kCoefficientCap) - current(j)) / step(j);
        room = std::min(room, std::max(0.0, limit));
      }
    if (room <= 0.0) break;
    const VectorXd target = current + room * step;
    const VectorXd direction = target - current;
    double t = 1.0;
    bool accepted = false;
    double f_new = f;
    VectorXd candidate;
    for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
      candidate = (current + t * direction).cwiseMax(-kCoefficientCap).cwiseMin(kCoefficientCap);
      f_new = problem.objective(problem.coef_from(candidate, total_cols));
      if (std::isfinite(f_new) && f_new >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double gain = f_new - f;
    current = candidate;
    for (Index j = 0; j < current.size(); ++j)
      if (std::abs(current(j)) > kCoefficientCap * (1.0 - 1e-12))
        current(j) = std::copysign(kCoefficientCap, current(j));
    f = f_new;
    if (gain <= kNegligibleGain * (1.0 + std::abs(f)) || (t * direction).lpNorm<Eigen::Infinity>() < 1e-10)
      break;
  }
  if (current.cwiseAbs().maxCoeff() >= kCoefficientCap) separated = true;
  return problem.coef_from(current, total_cols);
}

double sum_rows(const VectorXd& v) {
  double total = 0.0;
  for (Index i = 0; i < v.size(); ++i) total += v(i);
  return total;
}

ExpertUpdate gaussian_update(const Workspace& ws, const MatrixXd& tau, double floor) {
  ExpertUpdate out;
  out.experts.reserve(tau.cols());
  for (Index z = 0; z < tau.cols(); ++z)
    out.experts.push_back(weighted_gaussian(ws.expert_design, ws.data.y, tau.col(z), floor,
                                            static_cast<int>(z), out.degenerate));
  return out;
}

// Proposes IRLS-updated experts; reverts to `theta.experts` if Q_n would drop.
// On return `log_experts` holds the matrix for the experts actually kept.
ExpertUpdate glm_update(const Workspace& ws, const MoeParams& theta, const MatrixXd& tau,
                        const MatrixXd& log_gates, double q_before, int max_inner,
                        MatrixXd& log_experts) {
  ExpertUpdate out;
  out.experts = theta.experts;
  for (int z = 0; z < theta.g(); ++z)
    out.experts[z].coef = weighted_glm(theta.family, ws.expert_design, ws.data.y, tau.col(z),
                                       theta.experts[z].coef, max_inner, z, out.separated);
  MoeParams proposal = theta;
  proposal.experts = out.experts;
  MatrixXd proposed_log_experts = log_expert_matrix(ws.data, ws.expert_design, proposal);
  VectorXd rows;
  normalize_rows(log_gates + proposed_log_experts, &rows);
  if (sum_rows(rows) < q_before) {
    out.experts = theta.experts;
    out.separated = false;
    for (const auto& e : out.experts)
      if (e.coef.cwiseAbs().maxCoeff() >= kCoefficientCap) out.separated = true;
    return out;
  }
  log_experts = std::move(proposed_log_experts);
  return out;
}

std::string block_name(int z, int g) {
  return z + 1 < g ? "gating block " + std::to_string(z + 1) : std::string("expert block");
}

void check_initializable(Index n, int g, Index width) {
  if (g < 1) throw InvalidArgument("g must be at least 1");
  if (n < static_cast<Index>(g) * (width + 1))
    throw InvalidArgument("n = " + std::to_string(n) + " is too small to initialize g = " +
                          std::to_string(g) + " components");
}

std::mutex& observer_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void FitConfig::validate() const {
  if (max_cycles < 1) throw InvalidArgument("max_cycles must be at least 1");
  if (!(rel_tol > 0.0)) throw InvalidArgument("rel_tol must be positive");
  if (!(variance_floor_factor >= 0.0)) throw InvalidArgument("variance floor factor must be >= 0");
  if (n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  if (irls_max_inner < 1) throw InvalidArgument("irls_max_inner must be at least 1");
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

double variance_floor(const Dataset& data, double factor) {
  const double mean = data.y.mean();
  const double var = (data.y.array() - mean).square().sum() / static_cast<double>(data.n());
  const double floor = factor * var;
  return floor > 0.0 ? floor : std::numeric_limits<double>::min();
}

VectorXd gating_block_update(const Dataset& data, const MoeParams& theta, int z) {
  check_compatible(data, theta);
  if (z < 0 || z + 1 >= theta.g())
    throw InvalidArgument("gating block index must be in [0, g-2]");
  const Workspace ws(data, theta);
  const auto curvature = factor_gating_curvature(ws.gate_design);
  const MatrixXd lg = log_gate_matrix(ws.gate_design, theta.gating);
  const MatrixXd tau = normalize_rows(lg + log_expert_matrix(data, ws.expert_design, theta), nullptr);
  return gating_step(ws.gate_design, curvature, tau.col(z), lg.col(z).array().exp().matrix(),
                     theta.gating, z);
}

double gating_minorizer(const Dataset& data, const MoeParams& anchor, int z,
                        const VectorXd& block) {
  check_compatible(data, anchor);
  if (z < 0 || z + 1 >= anchor.g())
    throw InvalidArgument("gating block index must be in [0, g-2]");
  const Workspace ws(data, anchor);
  const MatrixXd lg = log_gate_matrix(ws.gate_design, anchor.gating);
  VectorXd rows;
  const MatrixXd tau =
      normalize_rows(lg + log_expert_matrix(data, ws.expert_design, anchor), &rows);
  const VectorXd diff = tau.col(z) - lg.col(z).array().exp().matrix();
  const VectorXd grad = ws.gate_design.transpose() * diff;
  const MatrixXd h = ws.gate_design.transpose() * ws.gate_design;
  const VectorXd delta = block - anchor.gating.row(z).transpose();
  return sum_rows(rows) + grad.dot(delta) - 0.125 * delta.dot(h * delta);
}

ExpertUpdate gaussian_expert_block_update(const Dataset& data, const MoeParams& theta,
                                          double floor) {
  check_compatible(data, theta);
  if (theta.family != Family::Gaussian)
    throw InvalidArgument("Gaussian expert update needs Gaussian experts");
  const Workspace ws(data, theta);
  const MatrixXd lg = log_gate_matrix(ws.gate_design, theta.gating);
  const MatrixXd tau = normalize_rows(lg + log_expert_matrix(data, ws.expert_design, theta), nullptr);
  return gaussian_update(ws, tau, floor);
}

ExpertUpdate glm_expert_block_update(const Dataset& data, const MoeParams& theta,
                                     int irls_max_inner) {
  check_compatible(data, theta);
  if (theta.family == Family::Gaussian)
    throw InvalidArgument("GLM expert update needs logistic, Poisson or multinomial experts");
  const Workspace ws(data, theta);
  const MatrixXd lg = log_gate_matrix(ws.gate_design, theta.gating);
  MatrixXd le = log_expert_matrix(data, ws.expert_design, theta);
  VectorXd rows;
  const MatrixXd tau = normalize_rows(lg + le, &rows);
  return glm_update(ws, theta, tau, lg, sum_rows(rows), irls_max_inner, le);
}

ExpertParams fit_weighted_expert(const Dataset& data, const VectorXd& weights,
                                 const MoeParams& shape, double floor, int irls_max_inner,
                                 bool* separated) {
  const MatrixXd x = shape.design.augmented_matrix(data.x);
  bool flag = false;
  ExpertParams e;
  if (shape.family == Family::Gaussian) {
    e = weighted_gaussian(x, data.y, weights, floor, 0, flag);
  } else {
    const Index cols = shape.family == Family::Multinomial ? shape.num_classes : 1;
    e.coef = weighted_glm(shape.family, x, data.y, weights, MatrixXd::Zero(x.cols(), cols),
                          irls_max_inner, 0, flag);
    if (separated) *separated = flag;
  }
  return e;
}

FitResult fit(const Dataset& data, const MoeParams& init, const FitConfig& config) {
  config.validate();
  data.validate();
  init.validate();
  check_compatible(data, init);

  const int g = init.g();
  const Workspace ws(data, init);
  std::optional<Eigen::LLT<MatrixXd>> curvature;
  if (g > 1) curvature = factor_gating_curvature(ws.gate_design);
  const double floor = variance_floor(data, config.variance_floor_factor);

  FitResult result;
  MoeParams theta = init;
  MatrixXd le = log_expert_matrix(data, ws.expert_design, theta);
  MatrixXd lg = log_gate_matrix(ws.gate_design, theta.gating);
  VectorXd rows;
  MatrixXd tau = normalize_rows(lg + le, &rows);
  double q = sum_rows(rows);
  result.q_trace.push_back(q);

  int cycle = 1;
  int block = 0;
  try {
    for (; cycle <= config.max_cycles; ++cycle) {
      if (g > 1) {
        GatingSweep sweep(ws.gate_design, le, theta.gating);
        for (block = 0; block + 1 < g; ++block) {
          theta.gating.row(block) = gating_step(ws.gate_design, *curvature, sweep.tau(block),
                                                sweep.gate(block), theta.gating, block)
                                        .transpose();
          sweep.set_row(block, theta.gating.row(block).transpose());
#ifndef NDEBUG
          VectorXd check;
          normalize_rows(log_gate_matrix(ws.gate_design, theta.gating) + le, &check);
          assert(sum_rows(check) >= q - 1e-8 * std::abs(q));
#endif
        }
      }
      block = g - 1;
      lg = log_gate_matrix(ws.gate_design, theta.gating);
      tau = normalize_rows(lg + le, &rows);
      if (theta.family == Family::Gaussian) {
        theta.experts = gaussian_update(ws, tau, floor).experts;
        le = log_expert_matrix(data, ws.expert_design, theta);
      } else {
        theta.experts = glm_update(ws, theta, tau, lg, sum_rows(rows), config.irls_max_inner, le)
                            .experts;
      }
      tau = normalize_rows(lg + le, &rows);
      const double q_new = sum_rows(rows);
      result.q_trace.push_back(q_new);
      const bool done = std::abs(q_new - q) <= config.rel_tol * std::abs(q);
      q = q_new;
      result.cycles_used = cycle;
      if (done) {
        result.converged = true;
        break;
      }
    }
  } catch (const NumericalError& e) {
    throw FitError("cycle " + std::to_string(cycle) + ", " + block_name(block, g) + ": " +
                   e.what());
  }

  for (const auto& e : theta.experts) {
    if (theta.family == Family::Gaussian && e.variance <= floor) result.degenerate = true;
    if (theta.family != Family::Gaussian && e.coef.cwiseAbs().maxCoeff() >= kCoefficientCap)
      result.separated = true;
  }
  result.theta_hat = std::move(theta);
  if (config.observer) {
    std::lock_guard lock(observer_mutex());
    config.observer(result);
  }
  return result;
}

MoeParams initialize(const Dataset& data, int g, Family family, const ExpertDesign& design,
                     std::uint64_t seed, const FitConfig& config) {
  data.validate();
  MoeParams theta =
      MoeParams::zeros(family, g, static_cast<int>(data.p()), design, data.num_classes);
  check_compatible(data, theta);
  const Index n = data.n();
  const Index width = design.width(static_cast<int>(data.p()));
  check_initializable(n, g, width);
  const double floor = variance_floor(data, config.variance_floor_factor);

  auto fit_groups = [&](const std::vector<int>& label) {
    std::vector<ExpertParams> experts;
    for (int z = 0; z < g; ++z) {
      VectorXd w(n);
      for (Index i = 0; i < n; ++i) w(i) = label[i] == z ? 1.0 : 0.0;
      experts.push_back(fit_weighted_expert(data, w, theta, floor, config.irls_max_inner));
    }
    return experts;
  };

  if (g == 1) {
    theta.experts = fit_groups(std::vector<int>(n, 0));
    return theta;
  }

  // Standardized (x, y) features for the nearest-seed partition.
  MatrixXd features(n, data.p() + 1);
  features.leftCols(data.p()) = data.x;
  features.col(data.p()) = data.y;
  for (Index j = 0; j < features.cols(); ++j) {
    const double mean = features.col(j).mean();
    const double sd = std::sqrt((features.col(j).array() - mean).square().mean());
    features.col(j).array() -= mean;
    if (sd > 0.0) features.col(j) /= sd;
  }

  Rng rng(seed);
  const Index min_size = std::min<Index>(2 * (width + 1), n / g);
  std::vector<int> label(n);
  for (int attempt = 0; attempt < 20; ++attempt) {
    // D^2 seeding: each further center is drawn with probability proportional
    // to its squared distance from the nearest center chosen so far.
    std::vector<Index> centers{static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)))};
    VectorXd nearest = (features.rowwise() - features.row(centers[0])).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < g) {
      const double total = nearest.sum();
      Index c = 0;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        while (c + 1 < n && (u -= nearest(c)) >= 0.0) ++c;
        while (nearest(c) == 0.0 && c > 0) --c;
      } else {
        c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      centers.push_back(c);
      nearest = nearest.cwiseMin((features.rowwise() - features.row(c)).rowwise().squaredNorm());
    }
    std::vector<Index> size(g, 0);
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int z = 0; z < g; ++z) {
        const double d = (features.row(i) - features.row(centers[z])).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = z;
        }
      }
      label[i] = best;
      ++size[best];
    }
    if (*std::min_element(size.begin(), size.end()) < min_size) continue;
    try {
      theta.experts = fit_groups(label);
      return theta;
    } catch (const NumericalError&) {
      continue;
    }
  }

  // Balanced random deal.
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  for (Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
  for (Index k = 0; k < n; ++k) label[order[k]] = static_cast<int>(k % g);
  theta.experts = fit_groups(label);
  return theta;
}

std::uint64_t start_seed(std::uint64_t seed, int start) {
  return mix_seed(seed, static_cast<std::uint64_t>(start));
}

FitResult multi_start_fit(const Dataset& data, int g, Family family, const ExpertDesign& design,
                          const FitConfig& config) {
  config.validate();
  data.validate();
  check_initializable(data.n(), g, design.width(static_cast<int>(data.p())));
  const int starts = config.n_starts;
  std::vector<std::optional<FitResult>> results(starts);
  std::vector<std::string> diagnostics(starts);

  auto run = [&](int k) {
    const std::uint64_t seed = start_seed(config.seed, k);
    try {
      FitResult r = fit(data, initialize(data, g, family, design, seed, config), config);
      r.seed_used = seed;
      results[k] = std::move(r);
    } catch (const Error& e) {
      diagnostics[k] = e.what();
    }
  };

  const int workers = std::min(config.threads, starts);
  if (workers <= 1) {
    for (int k = 0; k < starts; ++k) run(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int k = next++; k < starts; k = next++) run(k);
      });
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int k = 0; k < starts; ++k) {
    if (!results[k]) continue;
    if (best < 0) {
      best = k;
      continue;
    }
    const FitResult& a = *results[k];
    const FitResult& b = *results[best];
    if (a.degenerate != b.degenerate) {
      if (!a.degenerate) best = k;
    } else if (a.log_ql() > b.log_ql()) {
      best = k;
    }
  }
  if (best < 0) {
    std::string msg = "all " + std::to_string(starts) + " starts failed for g = " +
                      std::to_string(g) + ":";
    for (int k = 0; k < starts; ++k)
      msg += "\n  start " + std::to_string(k + 1) + ": " + diagnostics[k];
    throw FitError(msg);
  }
  return std::move(*results[best]);
}

}  // namespace moe
