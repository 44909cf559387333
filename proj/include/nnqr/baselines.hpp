#pragma once

// Comparison estimators: pooled quantile regression that ignores the fixed
// effects, and the alternating factor quantile regression with a known number
// of factors.

#include <string>
#include <vector>

#include "nnqr/constants.hpp"
#include "nnqr/numcore.hpp"
#include "nnqr/panel.hpp"
#include "nnqr/quantreg.hpp"

namespace nnqr {

/// Pooled quantile regression on the flattened panel with design (X_1it, ..., X_pit).
inline QuantRegResult pooled_regression(const PanelData& data, const Matrix& target, double u) {
  if (data.p() < 1) detail::invalid("pooled regression needs at least one covariate");
  const Vector y = target.reshaped();
  return qr_small(y, data.stacked_design(), u);
}

inline Vector pooled_fit(const PanelData& data, double u) {
  data.validate();
  return pooled_regression(data, data.Y, u).coef;
}

struct IterativeOptions {
  double tol = Tolerances::iterative_termination;
  int max_sweeps = Tolerances::iterative_max_sweeps;
};

struct IterativeFit {
  Vector beta;
  /// N x r loadings.
  Matrix Lambda;
  /// T x r factors.
  Matrix F;
  /// Lambda * F'.
  Matrix L;
  int iterations = 0;
  bool converged = false;
  /// Set when a factor or loading block lost full column rank.
  bool degenerate = false;
  std::string degenerate_reason;
  /// sum rho_u(Y - X beta - Lambda F') / NT after every completed sweep.
  std::vector<double> objective_history;
};

inline double iterative_objective(const PanelData& data, double u, const Vector& beta, const Matrix& l) {
  const double nt = static_cast<double>(data.N() * data.T());
  return check_loss(data.Y - data.linear_index(beta) - l, u) / nt;
}

/// Alternating quantile regressions: every loading row given (beta, F), then
/// every factor row given (beta, Lambda), then beta by pooled regression on
/// Y - Lambda F'. Starts from the pooled beta and F = sqrt(T) times the top-r
/// eigenvectors of R'R with R the pooled residual matrix.
inline IterativeFit iterative_fit(const PanelData& data, double u, Eigen::Index r,
                                  const IterativeOptions& opts = {}) {
  data.validate();
  check_quantile_level(u);
  const Eigen::Index n = data.N();
  const Eigen::Index t = data.T();
  const Eigen::Index p = data.p();
  if (r < 0 || r > std::min(n, t)) detail::invalid("factor count must lie in [0, min(N,T)]");
  if (opts.max_sweeps < 1 || !(opts.tol > 0.0)) detail::invalid("invalid iterative options");

  IterativeFit fit;
  fit.beta = p > 0 ? pooled_fit(data, u) : Vector(0);
  fit.Lambda = Matrix::Zero(n, r);
  fit.F = Matrix::Zero(t, r);
  fit.L = Matrix::Zero(n, t);
  if (r == 0) {
    fit.converged = true;
    fit.objective_history.push_back(iterative_objective(data, u, fit.beta, fit.L));
    return fit;
  }

  const Matrix resid0 = data.Y - data.linear_index(fit.beta);
  fit.F = svd(resid0).right.leftCols(r) * std::sqrt(static_cast<double>(t));

  const double nt = static_cast<double>(n * t);
  Matrix lambda = fit.Lambda;
  Matrix factors = fit.F;
  Vector beta = fit.beta;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    try {
      const Matrix target = data.Y - data.linear_index(beta);
      for (Eigen::Index i = 0; i < n; ++i) {
        lambda.row(i) = qr_small(target.row(i).transpose(), factors, u).coef.transpose();
      }
      for (Eigen::Index s = 0; s < t; ++s) {
        factors.row(s) = qr_small(target.col(s), lambda, u).coef.transpose();
      }
      if (p > 0) beta = pooled_regression(data, data.Y - lambda * factors.transpose(), u).coef;
    } catch (const IllPosedDesign& e) {
      fit.degenerate = true;
      fit.degenerate_reason = e.what();
      break;
    }

    const Matrix l_new = lambda * factors.transpose();
    double stat = (l_new - fit.L).squaredNorm() / nt;
    if (p > 0) stat += (beta - fit.beta).squaredNorm() / static_cast<double>(p);
    fit.beta = beta;
    fit.Lambda = lambda;
    fit.F = factors;
    fit.L = l_new;
    fit.iterations = sweep + 1;
    fit.objective_history.push_back(iterative_objective(data, u, fit.beta, fit.L));
    if (stat <= opts.tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace nnqr
