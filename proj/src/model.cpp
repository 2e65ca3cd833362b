#include "moe/model.hpp"

#include "moe/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace moe {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

int num_linear_predictors(const MoeParams& theta) {
  return theta.family == Family::Multinomial ? theta.num_classes : 1;
}

// Log density of one response given the expert's augmented design row.
template <typename Row>
double expert_log_density_row(Family family, double y, const Row& row,
                              const ExpertParams& e) {
  switch (family) {
    case Family::Gaussian: {
      const double r = y - row.dot(e.coef.col(0));
      return -0.5 * (kLogTwoPi + std::log(e.variance)) - 0.5 * r * r / e.variance;
    }
    case Family::Logistic: {
      const double eta = row.dot(e.coef.col(0));
      return y > 0.5 ? -softplus(-eta) : -softplus(eta);
    }
    case Family::Poisson: {
      const double eta = row.dot(e.coef.col(0));
      return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
    }
    case Family::Multinomial: {
      const Index k = e.coef.cols();
      double top = -std::numeric_limits<double>::infinity();
      double eta_y = 0.0;
      // Two passes keep this allocation-free.
      for (Index l = 0; l < k; ++l) {
        const double eta = row.dot(e.coef.col(l));
        top = std::max(top, eta);
        if (l + 1 == static_cast<Index>(y)) eta_y = eta;
      }
      double s = 0.0;
      for (Index l = 0; l < k; ++l) s += std::exp(row.dot(e.coef.col(l)) - top);
      return eta_y - top - std::log(s);
    }
  }
  return 0.0;
}

void check_response(Family family, double y, int num_classes) {
  switch (response_kind(family)) {
    case ResponseKind::Real:
      if (!std::isfinite(y)) throw InvalidArgument("response is not finite");
      break;
    case ResponseKind::Binary:
      if (y != 0.0 && y != 1.0) throw InvalidArgument("binary response must be 0 or 1");
      break;
    case ResponseKind::Count:
      if (!is_integer(y) || y < 0.0)
        throw InvalidArgument("count response must be a non-negative integer");
      break;
    case ResponseKind::Categorical:
      if (!is_integer(y) || y < 1.0 || y > num_classes)
        throw InvalidArgument("category response must be an integer in 1..K");
      break;
  }
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::Logistic: return "logistic";
    case Family::Poisson: return "poisson";
    case Family::Multinomial: return "multinomial";
  }
  return "";
}

std::string_view to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::Real: return "real";
    case ResponseKind::Binary: return "binary";
    case ResponseKind::Count: return "count";
    case ResponseKind::Categorical: return "categorical";
  }
  return "";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::Gaussian, Family::Logistic, Family::Poisson, Family::Multinomial}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidArgument("unknown expert family '" + std::string(name) + "'");
}

ResponseKind response_kind(Family family) {
  switch (family) {
    case Family::Gaussian: return ResponseKind::Real;
    case Family::Logistic: return ResponseKind::Binary;
    case Family::Poisson: return ResponseKind::Count;
    case Family::Multinomial: return ResponseKind::Categorical;
  }
  return ResponseKind::Real;
}

// ---------------------------------------------------------------------------
// ExpertDesign

int ExpertDesign::width(int p) const { return kind == Kind::Raw ? p : degree; }

VectorXd ExpertDesign::augmented_row(const VectorXd& x) const {
  if (kind == Kind::Raw) {
    VectorXd row(x.size() + 1);
    row(0) = 1.0;
    row.tail(x.size()) = x;
    return row;
  }
  if (x.size() < 1) throw InvalidArgument("polynomial design needs at least one covariate");
  VectorXd row(degree + 1);
  row(0) = 1.0;
  for (int k = 1; k <= degree; ++k) row(k) = row(k - 1) * x(0);
  return row;
}

MatrixXd ExpertDesign::augmented_matrix(const MatrixXd& x) const {
  const Index n = x.rows();
  if (kind == Kind::Raw) {
    MatrixXd out(n, x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
  }
  if (x.cols() < 1) throw InvalidArgument("polynomial design needs at least one covariate");
  MatrixXd out(n, degree + 1);
  out.col(0).setOnes();
  for (int k = 1; k <= degree; ++k) out.col(k) = out.col(k - 1).cwiseProduct(x.col(0));
  return out;
}

std::string ExpertDesign::to_string() const {
  return kind == Kind::Raw ? std::string("raw") : "poly:" + std::to_string(degree);
}

ExpertDesign ExpertDesign::parse(std::string_view text) {
  if (text == "raw") return raw();
  for (std::string_view prefix : {"poly:", "polynomial:"}) {
    if (text.starts_with(prefix)) {
      text.remove_prefix(prefix.size());
      int degree = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), degree);
      if (ec != std::errc() || ptr != text.data() + text.size() || degree < 1)
        throw InvalidArgument("polynomial degree must be a positive integer");
      return polynomial(degree);
    }
  }
  throw InvalidArgument("unknown expert design '" + std::string(text) +
                        "' (expected raw or poly:<degree>)");
}

// ---------------------------------------------------------------------------
// Dataset / MoeParams

void Dataset::validate() const {
  if (n() < 1) throw InvalidArgument("dataset is empty");
  if (x.rows() != n()) throw InvalidArgument("covariate and response row counts differ");
  if (!x.allFinite()) throw InvalidArgument("covariates contain non-finite values");
  if (kind == ResponseKind::Categorical && num_classes < 2)
    throw InvalidArgument("categorical response needs K >= 2");
  Family family = Family::Gaussian;
  switch (kind) {
    case ResponseKind::Real: family = Family::Gaussian; break;
    case ResponseKind::Binary: family = Family::Logistic; break;
    case ResponseKind::Count: family = Family::Poisson; break;
    case ResponseKind::Categorical: family = Family::Multinomial; break;
  }
  for (Index i = 0; i < n(); ++i) {
    try {
      check_response(family, y(i), num_classes);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

MoeParams MoeParams::zeros(Family family, int g, int p, ExpertDesign design, int num_classes) {
  if (g < 1) throw InvalidArgument("g must be at least 1");
  if (p < 0) throw InvalidArgument("p must be non-negative");
  MoeParams theta;
  theta.family = family;
  theta.design = design;
  theta.p = p;
  theta.num_classes = family == Family::Multinomial ? num_classes : 0;
  theta.gating = MatrixXd::Zero(g, p + 1);
  const int d = design.width(p);
  const int cols = family == Family::Multinomial ? num_classes : 1;
  theta.experts.assign(g, ExpertParams{MatrixXd::Zero(d + 1, cols),
                                       family == Family::Gaussian ? 1.0 : 0.0});
  theta.validate();
  return theta;
}

void MoeParams::validate() const {
  const int k = g();
  if (k < 1) throw InvalidArgument("model needs at least one component");
  if (p < 0) throw InvalidArgument("p must be non-negative");
  if (design.kind == ExpertDesign::Kind::Polynomial && (p < 1 || design.degree < 1))
    throw InvalidArgument("polynomial design needs p >= 1 and degree >= 1");
  if (family == Family::Multinomial && num_classes < 2)
    throw InvalidArgument("multinomial experts need K >= 2");
  if (gating.rows() != k || gating.cols() != p + 1)
    throw InvalidArgument("gating block has the wrong shape");
  if (!gating.allFinite()) throw InvalidArgument("gating coefficients are not finite");
  if (!gating.row(k - 1).isZero(0.0))
    throw InvalidArgument("reference gating row must be exactly zero");
  const Index rows = design_width() + 1;
  const Index cols = num_linear_predictors(*this);
  for (const auto& e : experts) {
    if (e.coef.rows() != rows || e.coef.cols() != cols)
      throw InvalidArgument("expert block has the wrong shape");
    if (!e.coef.allFinite()) throw InvalidArgument("expert coefficients are not finite");
    if (family == Family::Multinomial && !e.coef.col(cols - 1).isZero(0.0))
      throw InvalidArgument("reference class coefficients must be exactly zero");
    if (family == Family::Gaussian && !(e.variance > 0.0 && std::isfinite(e.variance)))
      throw InvalidArgument("Gaussian expert variance must be positive");
  }
}

void check_compatible(const Dataset& data, const MoeParams& theta) {
  if (data.p() != theta.p)
    throw InvalidArgument("dataset has " + std::to_string(data.p()) +
                          " covariates, model expects " + std::to_string(theta.p));
  if (data.kind != response_kind(theta.family))
    throw InvalidArgument("response kind '" + std::string(to_string(data.kind)) +
                          "' does not match expert family '" +
                          std::string(to_string(theta.family)) + "'");
  if (theta.family == Family::Multinomial && data.num_classes != theta.num_classes)
    throw InvalidArgument("dataset has K=" + std::to_string(data.num_classes) +
                          ", model expects K=" + std::to_string(theta.num_classes));
}

// ---------------------------------------------------------------------------
// Evaluations

double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

namespace {

VectorXd gate_scores(const VectorXd& x, const MatrixXd& gating) {
  if (gating.cols() != x.size() + 1)
    throw InvalidArgument("gating expects " + std::to_string(gating.cols() - 1) +
                          " covariates, got " + std::to_string(x.size()));
  if (!x.allFinite() || !gating.allFinite())
    throw InvalidArgument("gate inputs must be finite");
  return gating.col(0) + gating.rightCols(x.size()) * x;
}

}  // namespace

VectorXd gate_log_probs(const VectorXd& x, const MatrixXd& gating) {
  const VectorXd scores = gate_scores(x, gating);
  return scores.array() - log_sum_exp(scores);
}

VectorXd gate_probs(const VectorXd& x, const MatrixXd& gating) {
  const VectorXd scores = gate_scores(x, gating);
  VectorXd w = (scores.array() - scores.maxCoeff()).exp();
  return w / w.sum();
}

double expert_log_density(Family family, double y, const VectorXd& x,
                          const ExpertParams& expert, const ExpertDesign& design) {
  if (!x.allFinite()) throw InvalidArgument("covariates must be finite");
  const VectorXd row = design.augmented_row(x);
  if (expert.coef.rows() != row.size())
    throw InvalidArgument("expert coefficients do not match the design width");
  if (family == Family::Gaussian && !(expert.variance > 0.0))
    throw InvalidArgument("Gaussian expert variance must be positive");
  const int k = family == Family::Multinomial ? static_cast<int>(expert.coef.cols()) : 0;
  check_response(family, y, k);
  return expert_log_density_row(family, y, row, expert);
}

double moe_log_density(double y, const VectorXd& x, const MoeParams& theta) {
  const VectorXd log_gates = gate_log_probs(x, theta.gating);
  VectorXd terms(theta.g());
  for (int z = 0; z < theta.g(); ++z)
    terms(z) = log_gates(z) +
               expert_log_density(theta.family, y, x, theta.experts[z], theta.design);
  return log_sum_exp(terms);
}

MatrixXd gating_design(const MatrixXd& x) { return ExpertDesign::raw().augmented_matrix(x); }

VectorXd row_log_sum_exp(const MatrixXd& m) {
  VectorXd top = m.col(0);
  for (Index j = 1; j < m.cols(); ++j) top = top.cwiseMax(m.col(j));
  VectorXd sum = VectorXd::Zero(m.rows());
  for (Index j = 0; j < m.cols(); ++j) sum.array() += (m.col(j) - top).array().exp();
  VectorXd out = top.array() + sum.array().log();
  for (Index i = 0; i < m.rows(); ++i)
    if (!std::isfinite(top(i))) out(i) = top(i);
  return out;
}

MatrixXd log_gate_matrix(const MatrixXd& design, const MatrixXd& gating) {
  MatrixXd scores = design * gating.transpose();
  scores.colwise() -= row_log_sum_exp(scores);
  return scores;
}

MatrixXd log_expert_matrix(const Dataset& data, const MatrixXd& design,
                           const MoeParams& theta) {
  const Index n = data.n();
  MatrixXd out(n, theta.g());
  for (int z = 0; z < theta.g(); ++z) {
    const ExpertParams& e = theta.experts[z];
    switch (theta.family) {
      case Family::Gaussian: {
        const VectorXd r = data.y - design * e.coef.col(0);
        out.col(z) = (-0.5 * (kLogTwoPi + std::log(e.variance))) -
                     0.5 * r.array().square() / e.variance;
        break;
      }
      case Family::Multinomial: {
        const MatrixXd eta = design * e.coef;
        const VectorXd lse = row_log_sum_exp(eta);
        for (Index i = 0; i < n; ++i) out(i, z) = eta(i, static_cast<Index>(data.y(i)) - 1) - lse(i);
        break;
      }
      default:
        for (Index i = 0; i < n; ++i)
          out(i, z) = expert_log_density_row(theta.family, data.y(i), design.row(i), e);
    }
  }
  return out;
}

MatrixXd normalize_rows(const MatrixXd& log_joint, VectorXd* row_log_density) {
  const VectorXd lse = row_log_sum_exp(log_joint);
  for (Index i = 0; i < lse.size(); ++i)
    if (!std::isfinite(lse(i)))
      throw NumericalError("mixture density is not finite at row " + std::to_string(i + 1));
  MatrixXd tau = log_joint;
  tau.colwise() -= lse;
  tau = tau.array().exp();
  if (row_log_density) *row_log_density = lse;
  return tau;
}

double log_quasi_likelihood(const Dataset& data, const MoeParams& theta) {
  check_compatible(data, theta);
  const MatrixXd lg = log_gate_matrix(gating_design(data.x), theta.gating);
  const MatrixXd le = log_expert_matrix(data, theta.design.augmented_matrix(data.x), theta);
  VectorXd rows;
  normalize_rows(lg + le, &rows);
  double total = 0.0;
  for (Index i = 0; i < rows.size(); ++i) total += rows(i);
  return total;
}

MatrixXd responsibilities(const Dataset& data, const MoeParams& theta) {
  check_compatible(data, theta);
  const MatrixXd lg = log_gate_matrix(gating_design(data.x), theta.gating);
  const MatrixXd le = log_expert_matrix(data, theta.design.augmented_matrix(data.x), theta);
  return normalize_rows(lg + le, nullptr);
}

// ---------------------------------------------------------------------------
// Parameter layout

Index parameter_count(const MoeParams& theta) {
  const Index gate = static_cast<Index>(theta.g() - 1) * (theta.p + 1);
  const Index rows = theta.design_width() + 1;
  Index per_expert = 0;
  switch (theta.family) {
    case Family::Gaussian: per_expert = rows + 1; break;
    case Family::Logistic:
    case Family::Poisson: per_expert = rows; break;
    case Family::Multinomial: per_expert = rows * (theta.num_classes - 1); break;
  }
  return gate + theta.g() * per_expert;
}

VectorXd pack(const MoeParams& theta) {
  VectorXd out(parameter_count(theta));
  Index k = 0;
  for (int z = 0; z + 1 < theta.g(); ++z)
    for (Index j = 0; j < theta.gating.cols(); ++j) out(k++) = theta.gating(z, j);
  for (const auto& e : theta.experts) {
    const Index classes = theta.family == Family::Multinomial ? e.coef.cols() - 1 : 1;
    for (Index l = 0; l < classes; ++l)
      for (Index j = 0; j < e.coef.rows(); ++j) out(k++) = e.coef(j, l);
    if (theta.family == Family::Gaussian) out(k++) = e.variance;
  }
  return out;
}

MoeParams unpack(const MoeParams& shape, const VectorXd& values) {
  if (values.size() != parameter_count(shape))
    throw InvalidArgument("parameter vector has the wrong length");
  MoeParams theta = shape;
  Index k = 0;
  for (int z = 0; z + 1 < theta.g(); ++z)
    for (Index j = 0; j < theta.gating.cols(); ++j) theta.gating(z, j) = values(k++);
  for (auto& e : theta.experts) {
    const Index classes = theta.family == Family::Multinomial ? e.coef.cols() - 1 : 1;
    for (Index l = 0; l < classes; ++l)
      for (Index j = 0; j < e.coef.rows(); ++j) e.coef(j, l) = values(k++);
    if (theta.family == Family::Gaussian) e.variance = values(k++);
  }
  return theta;
}

std::vector<std::string> parameter_names(const MoeParams& theta) {
  std::vector<std::string> names;
  names.reserve(parameter_count(theta));
  for (int z = 0; z + 1 < theta.g(); ++z)
    for (Index j = 0; j < theta.gating.cols(); ++j)
      names.push_back("gate" + std::to_string(z + 1) + ".b" + std::to_string(j));
  for (int z = 0; z < theta.g(); ++z) {
    const auto& e = theta.experts[z];
    const std::string prefix = "expert" + std::to_string(z + 1);
    if (theta.family == Family::Multinomial) {
      for (Index l = 0; l + 1 < e.coef.cols(); ++l)
        for (Index j = 0; j < e.coef.rows(); ++j)
          names.push_back(prefix + ".class" + std::to_string(l + 1) + ".b" + std::to_string(j));
    } else {
      for (Index j = 0; j < e.coef.rows(); ++j) names.push_back(prefix + ".b" + std::to_string(j));
    }
    if (theta.family == Family::Gaussian) names.push_back(prefix + ".variance");
  }
  return names;
}

}  // namespace moe
