#include "moe/selection.hpp"

#include "moe/error.hpp"
#include "moe/io.hpp"

#include <cmath>

namespace moe {

int param_count(int g, int p, Family family, const ExpertDesign& design, int num_classes) {
  const int d = design.width(p);
  int per_expert = 0;
  switch (family) {
    case Family::Gaussian: per_expert = d + 2; break;
    case Family::Logistic:
    case Family::Poisson: per_expert = d + 1; break;
    case Family::Multinomial: per_expert = (num_classes - 1) * (d + 1); break;
  }
  return (g - 1) * (p + 1) + g * per_expert;
}

double bic(double log_ql, Index dim, Index n) {
  return -2.0 * log_ql + static_cast<double>(dim) * std::log(static_cast<double>(n));
}

double bic(const FitResult& fit, const Dataset& data) {
  return bic(fit.log_ql(), parameter_count(fit.theta_hat), data.n());
}

const FitResult& SelectionReport::selected() const {
  if (g_hat < 1 || !fits[g_hat - 1]) throw InvalidArgument("report has no selected model");
  return *fits[g_hat - 1];
}

int pick_g(const std::vector<SelectionRow>& rows, bool require_converged) {
  int best = 0;
  double best_bic = 0.0;
  for (const auto& row : rows) {
    if (!row.eligible(require_converged)) continue;
    if (best == 0 || row.bic < best_bic || (row.bic == best_bic && row.g < best)) {
      best = row.g;
      best_bic = row.bic;
    }
  }
  return best;
}

SelectionReport select_g(const Dataset& data, int max_g, Family family,
                         const ExpertDesign& design, const FitConfig& config,
                         bool require_converged) {
  if (max_g < 1) throw InvalidArgument("G must be at least 1");
  data.validate();
  SelectionReport report;
  for (int g = 1; g <= max_g; ++g) {
    SelectionRow row;
    row.g = g;
    row.dim = param_count(g, static_cast<int>(data.p()), family, design, data.num_classes);
    try {
      FitResult f = multi_start_fit(data, g, family, design, config);
      row.log_ql = f.log_ql();
      row.bic = bic(row.log_ql, row.dim, data.n());
      row.converged = f.converged;
      row.degenerate = f.degenerate;
      report.fits.push_back(std::move(f));
    } catch (const FitError& e) {
      row.failed = true;
      row.log_ql = std::nan("");
      row.bic = std::nan("");
      row.diagnostic = e.what();
      report.fits.push_back(std::nullopt);
    }
    report.rows.push_back(row);
  }
  report.g_hat = pick_g(report.rows, require_converged);
  if (report.g_hat == 0) {
    std::string msg = "no eligible fit for any g in [1, " + std::to_string(max_g) + "]:";
    for (const auto& row : report.rows) {
      msg += "\n  g = " + std::to_string(row.g) + ": ";
      if (row.failed) msg += row.diagnostic;
      else if (row.degenerate) msg += "degenerate (variance floor)";
      else msg += "not converged";
    }
    throw FitError(msg);
  }
  return report;
}

void write_bic_table(std::ostream& out, const SelectionReport& report) {
  out << "g,logQL,dim,bic,converged,degenerate\n";
  for (const auto& row : report.rows) {
    out << row.g << ',' << format_number(row.log_ql) << ',' << row.dim << ','
        << format_number(row.bic) << ',' << (row.converged ? 1 : 0) << ','
        << (row.degenerate ? 1 : 0) << '\n';
  }
}

}  // namespace moe
