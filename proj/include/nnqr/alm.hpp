#pragma once

// Nuclear-norm-penalized quantile regression solved by an augmented Lagrangian
// method. The problem
//
//   min_{beta, L}  (1/NT) rho_u(Y - sum_j X_j beta_j - L) + lambda ||L||_*
//
// is rewritten with a slack V = Y - sum_j X_j beta_j - L and the sweep updates
// L, V, beta and the multiplier H in that order.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "nnqr/constants.hpp"
#include "nnqr/numcore.hpp"
#include "nnqr/panel.hpp"

namespace nnqr {

struct FitConfig {
  double u = 0.5;
  double lambda = 0.0;
  /// ALM penalty; 0.25 NT / ||Y||_1 when unset.
  std::optional<double> mu;
  int max_iters = Tolerances::alm_max_iters;
  double tol = Tolerances::alm_termination;
  /// When set, L is clipped into [-bound, bound] after every L-step.
  std::optional<double> l_inf_bound;

  void validate() const {
    check_quantile_level(u);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) detail::invalid("lambda must be finite and > 0");
    if (mu && (!(*mu > 0.0) || !std::isfinite(*mu))) detail::invalid("mu must be finite and > 0");
    if (max_iters < 1) detail::invalid("max_iters must be >= 1");
    if (!(tol > 0.0)) detail::invalid("tol must be > 0");
    if (l_inf_bound && !(*l_inf_bound > 0.0)) detail::invalid("l_inf_bound must be > 0");
  }
};

struct FitResult {
  Vector beta;
  Matrix L;
  /// Singular values of L, nonincreasing.
  Vector singulars;
  int iterations = 0;
  bool converged = false;
  /// ||Y - sum_j X_j beta_j - L - V||_F at the returned iterate.
  double final_constraint_residual = 0.0;
  /// Last value of the termination criterion.
  double final_step = 0.0;
  double objective = 0.0;
  double mu = 0.0;
  /// max |L_it|, reported so the sup-norm constraint can be checked after an unconstrained fit.
  double max_abs_L = 0.0;
};

/// log(NT) sqrt(max(N,T)) / (3.6 NT).
inline double default_lambda(Eigen::Index n, Eigen::Index t) {
  if (n < 2 || t < 2) detail::invalid("default_lambda needs N, T >= 2");
  const double nt = static_cast<double>(n) * static_cast<double>(t);
  return std::log(nt) * std::sqrt(static_cast<double>(std::max(n, t))) / (3.6 * nt);
}

/// 0.25 NT / ||Y||_1 with ||Y||_1 the entrywise absolute sum.
inline double default_mu(const Matrix& y) {
  require_finite(y, "outcome");
  const double l1 = y.cwiseAbs().sum();
  if (!(l1 > 0.0)) detail::invalid("default_mu: outcome matrix is identically zero");
  return 0.25 * static_cast<double>(y.rows()) * static_cast<double>(y.cols()) / l1;
}

/// (1/NT) rho_u(Y - sum_j X_j beta_j - L) + lambda ||L||_*.
inline double objective_value(const PanelData& data, double u, double lambda, const Vector& beta,
                              const Matrix& l) {
  if (l.rows() != data.N() || l.cols() != data.T()) detail::invalid("L does not match the panel shape");
  if (beta.size() != data.p()) detail::invalid("beta length does not match the covariate count");
  const double nt = static_cast<double>(data.N() * data.T());
  const Matrix resid = data.Y - data.linear_index(beta) - l;
  double value = check_loss(resid, u) / nt;
  if (lambda != 0.0) value += lambda * nuclear_norm(l);
  return value;
}

/// Precomputed least-squares solver for beta given a target matrix:
/// argmin_b ||vec(G) - X b||^2 via the p x p Gram matrix.
class CovariateProjector {
 public:
  explicit CovariateProjector(const std::vector<Matrix>& x) : x_(&x) {
    const auto p = static_cast<Eigen::Index>(x.size());
    gram_.resize(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = a; b < p; ++b) {
        const double g = x[static_cast<std::size_t>(a)].cwiseProduct(x[static_cast<std::size_t>(b)]).sum();
        gram_(a, b) = g;
        gram_(b, a) = g;
      }
    }
    if (p > 0) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
      const double hi = eig.eigenvalues().maxCoeff();
      const double lo = eig.eigenvalues().minCoeff();
      if (!(hi > 0.0) || lo < Tolerances::design_min_rcond * hi) {
        throw IllPosedDesign("stacked covariate matrix does not have full column rank");
      }
      ldlt_.compute(gram_);
    }
  }

  Eigen::Index p() const { return gram_.rows(); }
  const Matrix& gram() const { return gram_; }

  /// X' vec(G)
  Vector cross(const Matrix& g) const {
    Vector out(p());
    for (Eigen::Index j = 0; j < p(); ++j) out(j) = (*x_)[static_cast<std::size_t>(j)].cwiseProduct(g).sum();
    return out;
  }

  Vector solve(const Matrix& g) const {
    if (p() == 0) return Vector(0);
    return ldlt_.solve(cross(g));
  }

 private:
  const std::vector<Matrix>* x_;
  Matrix gram_;
  Eigen::LDLT<Matrix> ldlt_;
};

/// Step-by-step ALM iteration. Exposed so tests can audit every block update;
/// use alm_fit for the usual entry point.
class AlmSolver {
 public:
  AlmSolver(const PanelData& data, const FitConfig& config)
      : data_(data), config_(config), projector_(validated_covariates(data, config)) {
    mu_ = config_.mu ? *config_.mu : default_mu(data_.Y);
    const auto n = data_.N();
    const auto t = data_.T();
    nt_ = static_cast<double>(n * t);
    beta_ = Vector::Zero(data_.p());
    l_ = Matrix::Zero(n, t);
    v_ = Matrix::Zero(n, t);
    h_ = Matrix::Zero(n, t);
    xb_ = Matrix::Zero(n, t);
  }

  double mu() const { return mu_; }
  const Vector& beta() const { return beta_; }
  const Matrix& L() const { return l_; }
  const Matrix& V() const { return v_; }
  const Matrix& H() const { return h_; }
  int iterations() const { return iter_; }

  /// L <- svt(Y - V - Xb + H/mu, 1/mu), optionally clipped.
  void l_step() {
    Matrix target = data_.Y - v_ - xb_ + h_ / mu_;
    l_ = svt(target, 1.0 / mu_);
    if (config_.l_inf_bound) {
      const double b = *config_.l_inf_bound;
      l_ = l_.cwiseMax(-b).cwiseMin(b);
    }
  }

  /// The argument of the V-step prox: H/mu - Xb - L + Y.
  Matrix v_step_argument() const { return h_ / mu_ - xb_ - l_ + data_.Y; }
  double v_step_scale() const { return 1.0 / (mu_ * config_.lambda * nt_); }

  void v_step() {
    const double u = config_.u;
    const double c = v_step_scale();
    v_ = v_step_argument().unaryExpr([u, c](double g) { return prox_check(g, u, c); });
  }

  /// The least-squares target of the beta-step: Y - L - V + H/mu.
  Matrix beta_step_target() const { return data_.Y - l_ - v_ + h_ / mu_; }

  void beta_step() {
    if (data_.p() == 0) return;
    beta_ = projector_.solve(beta_step_target());
    xb_ = data_.linear_index(beta_);
  }

  void h_step() { h_.noalias() -= mu_ * (v_ + xb_ + l_ - data_.Y); }

  /// One full sweep (L, V, beta, H). Returns the termination statistic.
  double sweep() {
    const Vector beta_prev = beta_;
    const Matrix l_prev = l_;
    l_step();
    v_step();
    beta_step();
    h_step();
    ++iter_;
    double stat = (l_ - l_prev).squaredNorm() / nt_;
    if (data_.p() > 0) stat += (beta_ - beta_prev).squaredNorm() / static_cast<double>(data_.p());
    return stat;
  }

  double constraint_residual() const { return (data_.Y - xb_ - l_ - v_).norm(); }

  /// Largest constraint residual accepted at termination.
  double feasibility_bound() const { return Tolerances::alm_feasibility * (1.0 + data_.Y.norm()); }

  FitResult run() {
    FitResult out;
    double stat = std::numeric_limits<double>::infinity();
    const double feasible = feasibility_bound();
    while (iter_ < config_.max_iters) {
      stat = sweep();
      if (!beta_.allFinite() || !l_.allFinite()) throw ConvergenceError("ALM iterates became non-finite");
      if (stat <= config_.tol && constraint_residual() <= feasible) {
        out.converged = true;
        break;
      }
    }
    out.beta = beta_;
    out.L = l_;
    out.singulars = singular_values(l_);
    out.iterations = iter_;
    out.final_step = stat;
    out.final_constraint_residual = constraint_residual();
    out.mu = mu_;
    out.max_abs_L = l_.cwiseAbs().maxCoeff();
    out.objective = check_loss(data_.Y - xb_ - l_, config_.u) / nt_ + config_.lambda * out.singulars.sum();
    return out;
  }

 private:
  static const std::vector<Matrix>& validated_covariates(const PanelData& data, const FitConfig& config) {
    data.validate();
    config.validate();
    return data.X;
  }

  const PanelData& data_;
  FitConfig config_;
  CovariateProjector projector_;
  double mu_ = 0.0;
  double nt_ = 0.0;
  int iter_ = 0;
  Vector beta_;
  Matrix l_, v_, h_, xb_;
};

inline FitResult alm_fit(const PanelData& data, const FitConfig& config) {
  AlmSolver solver(data, config);
  return solver.run();
}

/// Config with the default lambda for the panel's shape.
inline FitConfig default_fit_config(const PanelData& data, double u) {
  FitConfig c;
  c.u = u;
  c.lambda = default_lambda(data.N(), data.T());
  return c;
}

}  // namespace nnqr
