#pragma once

// Rank estimation from a fitted low-rank component, the tangent-space
// projector of a low-rank matrix, and the cone diagnostic for estimation errors.

#include <algorithm>
#include <cmath>

#include "nnqr/constants.hpp"
#include "nnqr/numcore.hpp"

namespace nnqr {

struct RankEstimate {
  Eigen::Index r_hat = 0;
  double threshold = 0.0;
  Vector singulars;
};

/// Counts singular values >= threshold.
inline RankEstimate estimate_rank(const Vector& singulars, double threshold) {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) detail::invalid("rank threshold must be finite and > 0");
  require_finite(singulars, "singular values");
  for (Eigen::Index k = 0; k < singulars.size(); ++k) {
    if (singulars(k) < 0.0) detail::invalid("singular values must be nonnegative");
    if (k > 0 && singulars(k) > singulars(k - 1)) detail::invalid("singular values must be sorted nonincreasing");
  }
  RankEstimate out;
  out.threshold = threshold;
  out.singulars = singulars;
  while (out.r_hat < singulars.size() && singulars(out.r_hat) >= threshold) ++out.r_hat;
  return out;
}

/// (N T max(N,T))^{1/4}: between the sqrt(N v T) noise level of the trailing
/// singular values and the sqrt(NT) level of the leading ones.
inline double default_rank_threshold(Eigen::Index n, Eigen::Index t) {
  if (n < 2 || t < 2) detail::invalid("default_rank_threshold needs N, T >= 2");
  const double nd = static_cast<double>(n);
  const double td = static_cast<double>(t);
  return std::pow(nd * td * std::max(nd, td), 0.25);
}

/// Number of singular values above rel_tol * max(1, sigma_1).
inline Eigen::Index numerical_rank(const Vector& singulars, double rel_tol = 1e-8) {
  if (singulars.size() == 0) return 0;
  const double cut = rel_tol * std::max(1.0, singulars(0));
  Eigen::Index r = 0;
  while (r < singulars.size() && singulars(r) > cut) ++r;
  return r;
}

/// Leading r left/right singular vectors of a low-rank matrix.
struct TangentFactors {
  Matrix R;  // N x r
  Matrix S;  // T x r
};

inline TangentFactors tangent_factors(const Matrix& l0, Eigen::Index r) {
  const SvdFactors f = svd(l0);
  if (r < 0 || r > f.singulars.size()) detail::invalid("tangent rank out of range");
  return {f.left.leftCols(r), f.right.leftCols(r)};
}

namespace detail {

inline void require_orthonormal(const Matrix& m, const char* what) {
  if (m.cols() == 0) return;
  const Matrix gram = m.transpose() * m;
  const double dev = (gram - Matrix::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff();
  if (dev > Tolerances::orthonormal) invalid(std::string(what) + " does not have orthonormal columns");
}

}  // namespace detail

/// Orthogonal projection onto {R A + B S'}: RR'W + WSS' - RR'WSS'.
inline Matrix project_tangent(const Matrix& w, const Matrix& r, const Matrix& s) {
  if (r.rows() != w.rows() || s.rows() != w.cols()) detail::invalid("tangent factors do not match W");
  if (r.cols() != s.cols()) detail::invalid("left and right tangent factors must have the same rank");
  detail::require_orthonormal(r, "left tangent factor");
  detail::require_orthonormal(s, "right tangent factor");
  if (r.cols() == 0) return Matrix::Zero(w.rows(), w.cols());
  const Matrix rw = r * (r.transpose() * w);
  const Matrix ws = (w * s) * s.transpose();
  const Matrix rws = r * ((r.transpose() * w * s) * s.transpose());
  return rw + ws - rws;
}

struct ConeReport {
  /// ||dL||_* - 4 ||P dL||_* - C sqrt(p (N ^ T) log(p N T)) ||dbeta||.
  double value = 0.0;
  bool in_cone = true;
  double nuclear_error = 0.0;
  double nuclear_projected = 0.0;
  double beta_term = 0.0;
};

inline ConeReport cone_diagnostic(const Vector& delta_beta, const Matrix& delta_l, const TangentFactors& l0,
                                  double c_cone = 1.0) {
  if (!(c_cone > 0.0)) detail::invalid("cone constant must be > 0");
  const auto n = static_cast<double>(delta_l.rows());
  const auto t = static_cast<double>(delta_l.cols());
  const auto p = static_cast<double>(delta_beta.size());
  ConeReport out;
  out.nuclear_error = nuclear_norm(delta_l);
  out.nuclear_projected = nuclear_norm(project_tangent(delta_l, l0.R, l0.S));
  if (delta_beta.size() > 0) {
    out.beta_term = c_cone * std::sqrt(p * std::min(n, t) * std::log(p * n * t)) * delta_beta.norm();
  }
  out.value = out.nuclear_error - 4.0 * out.nuclear_projected - out.beta_term;
  out.in_cone = out.value <= 0.0;
  return out;
}

}  // namespace nnqr
