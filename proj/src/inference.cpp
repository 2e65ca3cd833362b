#include "moe/inference.hpp"

#include "moe/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>

namespace moe {

namespace {

Dataset single_row(double y, const VectorXd& x, const MoeParams& theta) {
  Dataset d;
  d.x = x.transpose();
  d.y = VectorXd::Constant(1, y);
  d.kind = response_kind(theta.family);
  d.num_classes = theta.num_classes;
  return d;
}

VectorXd summed_score(const Dataset& data, const MoeParams& theta) {
  const MatrixXd s = score_matrix(data, theta);
  VectorXd total = VectorXd::Zero(s.cols());
  for (Index i = 0; i < s.rows(); ++i) total += s.row(i).transpose();
  return total;
}

}  // namespace

MatrixXd score_matrix(const Dataset& data, const MoeParams& theta) {
  check_compatible(data, theta);
  const Index n = data.n();
  const int g = theta.g();
  const MatrixXd gate_x = gating_design(data.x);
  const MatrixXd expert_x = theta.design.augmented_matrix(data.x);
  const MatrixXd lg = log_gate_matrix(gate_x, theta.gating);
  const MatrixXd tau = normalize_rows(lg + log_expert_matrix(data, expert_x, theta), nullptr);
  const MatrixXd gates = lg.array().exp();

  MatrixXd out(n, parameter_count(theta));
  const Index pg = gate_x.cols();
  const Index de = expert_x.cols();
  Index col = 0;
  for (int z = 0; z + 1 < g; ++z, col += pg)
    out.middleCols(col, pg) = gate_x.array().colwise() * (tau.col(z) - gates.col(z)).array();

  for (int z = 0; z < g; ++z) {
    const ExpertParams& e = theta.experts[z];
    switch (theta.family) {
      case Family::Gaussian: {
        const VectorXd r = data.y - expert_x * e.coef.col(0);
        out.middleCols(col, de) =
            expert_x.array().colwise() * (tau.col(z).array() * r.array() / e.variance);
        col += de;
        out.col(col++) = tau.col(z).array() *
                         (-0.5 / e.variance + 0.5 * r.array().square() / (e.variance * e.variance));
        break;
      }
      case Family::Logistic:
      case Family::Poisson: {
        const VectorXd eta = expert_x * e.coef.col(0);
        VectorXd mean(n);
        for (Index i = 0; i < n; ++i)
          mean(i) = theta.family == Family::Logistic ? 1.0 / (1.0 + std::exp(-eta(i)))
                                                     : std::exp(eta(i));
        out.middleCols(col, de) =
            expert_x.array().colwise() * (tau.col(z).array() * (data.y - mean).array());
        col += de;
        break;
      }
      case Family::Multinomial: {
        const MatrixXd eta = expert_x * e.coef;
        MatrixXd prob(n, eta.cols());
        for (Index i = 0; i < n; ++i) {
          prob.row(i) = (eta.row(i).array() - eta.row(i).maxCoeff()).exp();
          prob.row(i) /= prob.row(i).sum();
        }
        for (Index l = 0; l + 1 < eta.cols(); ++l) {
          VectorXd resid(n);
          for (Index i = 0; i < n; ++i)
            resid(i) = tau(i, z) * ((static_cast<Index>(data.y(i)) == l + 1 ? 1.0 : 0.0) - prob(i, l));
          out.middleCols(col, de) = expert_x.array().colwise() * resid.array();
          col += de;
        }
        break;
      }
    }
  }
  return out;
}

VectorXd score_vector(double y, const VectorXd& x, const MoeParams& theta) {
  theta.validate();
  const Dataset d = single_row(y, x, theta);
  d.validate();
  return score_matrix(d, theta).row(0).transpose();
}

SandwichCovariance sandwich_covariance(const Dataset& data, const MoeParams& theta) {
  data.validate();
  theta.validate();
  check_compatible(data, theta);
  const auto n = static_cast<double>(data.n());
  const MatrixXd scores = score_matrix(data, theta);
  const Index dim = scores.cols();

  SandwichCovariance out;
  out.meat = scores.transpose() * scores / n;

  const VectorXd center = pack(theta);
  const std::vector<std::string> names = parameter_names(theta);
  out.bread.resize(dim, dim);
  for (Index j = 0; j < dim; ++j) {
    double h = 1e-5 * (1.0 + std::abs(center(j)));
    if (names[j].ends_with(".variance")) h = std::min(h, 0.5 * center(j));
    VectorXd up = center, down = center;
    up(j) += h;
    down(j) -= h;
    const VectorXd s_up = summed_score(data, unpack(theta, up));
    const VectorXd s_down = summed_score(data, unpack(theta, down));
    out.bread.col(j) = (s_up - s_down) / (2.0 * h * n);
  }
  out.bread = 0.5 * (out.bread + out.bread.transpose()).eval();

  Eigen::JacobiSVD<MatrixXd> svd(out.bread);
  const VectorXd sv = svd.singularValues();
  out.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                           : std::numeric_limits<double>::infinity();
  if (!(out.condition < 1e12))
    throw SingularInformationError(
        "average Hessian is not invertible (condition number " + std::to_string(out.condition) +
            "); the fitted root may not be isolated",
        out.condition);
  const MatrixXd inv = out.bread.inverse();
  out.cov = inv * out.meat * inv / n;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval mean_ci(const VectorXd& x, const MoeParams& theta, const MatrixXd& cov, double level) {
  if (theta.family != Family::Gaussian)
    throw InvalidArgument("mean confidence intervals need Gaussian experts");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must be in (0, 1)");
  const VectorXd center = pack(theta);
  if (cov.rows() != center.size() || cov.cols() != center.size())
    throw InvalidArgument("covariance matrix does not match the parameter count");
  VectorXd grad(center.size());
  for (Index j = 0; j < center.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(center(j)));
    VectorXd up = center, down = center;
    up(j) += h;
    down(j) -= h;
    grad(j) = (predict_mean(x, unpack(theta, up)) - predict_mean(x, unpack(theta, down))) / (2.0 * h);
  }
  const double m = predict_mean(x, theta);
  const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  return {m - half, m + half};
}

}  // namespace moe
