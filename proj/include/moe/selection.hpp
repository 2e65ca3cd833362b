#pragma once

// Choice of the number of components by BIC = -2 Q + dim(theta) log n.

#include "moe/estimation.hpp"
#include "moe/model.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace moe {

/// Number of free parameters: (g-1)(p+1) gating coefficients plus, per
/// expert, d+2 (Gaussian), d+1 (logistic, Poisson) or (K-1)(d+1)
/// (multinomial), where d is the expert design width.
int param_count(int g, int p, Family family, const ExpertDesign& design, int num_classes = 0);

double bic(double log_ql, Index dim, Index n);
double bic(const FitResult& fit, const Dataset& data);

struct SelectionRow {
  int g = 0;
  double log_ql = 0.0;
  int dim = 0;
  double bic = 0.0;
  bool converged = false;
  bool degenerate = false;
  /// Every start failed; `diagnostic` holds the reason.
  bool failed = false;
  std::string diagnostic;

  /// Converged (unless the caller waives that), non-degenerate and not failed.
  bool eligible(bool require_converged = true) const {
    return !failed && !degenerate && (converged || !require_converged);
  }
};

struct SelectionReport {
  std::vector<SelectionRow> rows;  // ordered by g
  std::vector<std::optional<FitResult>> fits;
  int g_hat = 0;

  const FitResult& selected() const;
};

/// Smallest g attaining the minimum BIC among eligible rows; 0 if none.
int pick_g(const std::vector<SelectionRow>& rows, bool require_converged = true);

/// Multi-start fits for g = 1..max_g and the BIC choice among them. Throws
/// FitError listing per-g diagnostics when no fit is eligible.
///
/// With `require_converged` false, fits stopped by the cycle cap compete as
/// well; they stay marked as not converged in the report. This suits slowly
/// sharpening gates whose Q_n creeps upward long after the fit is usable.
SelectionReport select_g(const Dataset& data, int max_g, Family family,
                         const ExpertDesign& design, const FitConfig& config,
                         bool require_converged = true);

/// CSV with columns g,logQL,dim,bic,converged,degenerate.
void write_bic_table(std::ostream& out, const SelectionReport& report);

}  // namespace moe
