#pragma once

// Soft-max gated mixture-of-experts model family: gates, expert densities,
// the mixture density, the log-quasi-likelihood and responsibilities.
//
// Conventions used throughout the library:
//  - components are indexed 0..g-1; the last component is the gating
//    reference and carries an all-zero gating row;
//  - categorical responses are stored as doubles holding 1..K and the last
//    class of a multinomial expert carries an all-zero coefficient column;
//  - everything is evaluated in log space.

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace moe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { Gaussian, Logistic, Poisson, Multinomial };

enum class ResponseKind { Real, Binary, Count, Categorical };

std::string_view to_string(Family family);
std::string_view to_string(ResponseKind kind);
Family parse_family(std::string_view name);
ResponseKind response_kind(Family family);

/// Transform of the raw covariates used by the experts. Gating always sees
/// the raw covariates.
struct ExpertDesign {
  enum class Kind { Raw, Polynomial };

  Kind kind = Kind::Raw;
  /// Polynomial degree in the first covariate (Kind::Polynomial only).
  int degree = 1;

  static ExpertDesign raw() { return {}; }
  static ExpertDesign polynomial(int degree) { return {Kind::Polynomial, degree}; }

  /// Number of design columns, excluding the intercept.
  int width(int p) const;
  /// Intercept-augmented design row (1, design(x)).
  VectorXd augmented_row(const VectorXd& x) const;
  /// Intercept-augmented design matrix, one row per row of `x`.
  MatrixXd augmented_matrix(const MatrixXd& x) const;

  std::string to_string() const;
  static ExpertDesign parse(std::string_view text);

  friend bool operator==(const ExpertDesign&, const ExpertDesign&) = default;
};

/// n observations of p covariates with a typed response.
struct Dataset {
  MatrixXd x;  // n x p
  VectorXd y;  // n
  ResponseKind kind = ResponseKind::Real;
  int num_classes = 0;  // K, categorical only

  Index n() const { return y.size(); }
  Index p() const { return x.cols(); }

  /// Throws InvalidArgument unless the invariants hold.
  void validate() const;
};

struct ExpertParams {
  /// (d+1) x L coefficient matrix, intercept in row 0. L = 1 except for
  /// multinomial experts where L = K and column K-1 is identically zero.
  MatrixXd coef;
  /// Gaussian experts only.
  double variance = 0.0;
};

struct MoeParams {
  Family family = Family::Gaussian;
  ExpertDesign design;
  int p = 0;
  int num_classes = 0;  // K for multinomial experts
  /// g x (p+1) gating coefficients (intercept first); last row is zero.
  MatrixXd gating;
  std::vector<ExpertParams> experts;

  int g() const { return static_cast<int>(experts.size()); }
  int design_width() const { return design.width(p); }

  /// All-zero parameters with unit Gaussian variances.
  static MoeParams zeros(Family family, int g, int p, ExpertDesign design = {},
                         int num_classes = 0);

  void validate() const;
};

// ---------------------------------------------------------------------------
// Evaluations

double log_sum_exp(const Eigen::Ref<const VectorXd>& v);

/// Soft-max gate probabilities for a raw covariate point.
VectorXd gate_probs(const VectorXd& x, const MatrixXd& gating);
VectorXd gate_log_probs(const VectorXd& x, const MatrixXd& gating);

double expert_log_density(Family family, double y, const VectorXd& x,
                          const ExpertParams& expert, const ExpertDesign& design);

double moe_log_density(double y, const VectorXd& x, const MoeParams& theta);

/// Sum of per-row log mixture densities, in row order.
double log_quasi_likelihood(const Dataset& data, const MoeParams& theta);

/// n x g row-stochastic matrix of posterior component probabilities.
MatrixXd responsibilities(const Dataset& data, const MoeParams& theta);

// Bulk helpers shared with estimation and inference.

/// log sum_j exp(m(i, j)) for every row, max-shifted and evaluated column by
/// column. Rows whose maximum is not finite come back as that maximum.
VectorXd row_log_sum_exp(const MatrixXd& m);

/// Intercept-augmented gating design (1, x) for every row.
MatrixXd gating_design(const MatrixXd& x);
/// n x g log gate probabilities given the augmented gating design.
MatrixXd log_gate_matrix(const MatrixXd& gating_design, const MatrixXd& gating);
/// n x g log expert densities given the augmented expert design.
MatrixXd log_expert_matrix(const Dataset& data, const MatrixXd& expert_design,
                           const MoeParams& theta);
/// Row-wise soft-max of `log_gates + log_experts`; also returns the per-row
/// log mixture density in `row_log_density` when non-null.
MatrixXd normalize_rows(const MatrixXd& log_joint, VectorXd* row_log_density);

void check_compatible(const Dataset& data, const MoeParams& theta);

// ---------------------------------------------------------------------------
// Free-parameter layout: gating rows 0..g-2 (intercept, slopes), then each
// expert in turn; Gaussian experts are (coefficients, variance), multinomial
// experts are classes 0..K-2 each (intercept, slopes).

Index parameter_count(const MoeParams& theta);
VectorXd pack(const MoeParams& theta);
MoeParams unpack(const MoeParams& shape, const VectorXd& values);
std::vector<std::string> parameter_names(const MoeParams& theta);

}  // namespace moe
