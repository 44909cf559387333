#pragma once

// Dense-matrix and quantile-loss primitives shared by every estimator.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

#include "nnqr/constants.hpp"
#include "nnqr/errors.hpp"

namespace nnqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void check_quantile_level(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    detail::invalid("quantile level must lie in (0,1), got " + std::to_string(u));
  }
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().allFinite()) {
    detail::invalid(std::string(what) + " contains non-finite entries");
  }
}

/// rho_u(z) = z (u - 1(z <= 0)).
inline double check_loss(double z, double u) { return z * (u - (z <= 0.0 ? 1.0 : 0.0)); }

/// Sum of rho_u over all entries.
template <typename Derived>
double check_loss(const Eigen::DenseBase<Derived>& z, double u) {
  check_quantile_level(u);
  require_finite(z, "check_loss argument");
  double total = 0.0;
  const auto& d = z.derived();
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) total += check_loss(d(i, j), u);
  }
  return total;
}

/// A subgradient of rho_u at z; picks u - 1 at the kink, matching the indicator 1(z <= 0).
inline double check_subgradient(double z, double u) { return z > 0.0 ? u : u - 1.0; }

/// Thin SVD M = left * diag(singulars) * right^T with k = min(N,T).
struct SvdFactors {
  Matrix left;
  Vector singulars;
  Matrix right;

  Matrix reconstruct() const { return left * singulars.asDiagonal() * right.transpose(); }
};

/// Thin SVD with singular values sorted nonincreasing. Each left singular vector
/// is signed so that its largest-magnitude entry is nonnegative (the first such
/// entry on ties); the matching right vector is flipped with it.
inline SvdFactors svd(const Matrix& m) {
  require_finite(m, "svd input");
  if (m.rows() == 0 || m.cols() == 0) detail::invalid("svd of an empty matrix");

  Eigen::BDCSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw ConvergenceError("svd failed to converge");
  }
  SvdFactors out{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  if (!out.singulars.allFinite() || !out.left.allFinite() || !out.right.allFinite()) {
    throw ConvergenceError("svd produced non-finite factors");
  }

  for (Eigen::Index k = 0; k < out.left.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < out.left.rows(); ++i) {
      const double a = std::abs(out.left(i, k));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (out.left(arg, k) < 0.0) {
      out.left.col(k) *= -1.0;
      out.right.col(k) *= -1.0;
    }
  }
  return out;
}

inline Vector singular_values(const Matrix& m) {
  require_finite(m, "singular_values input");
  Eigen::BDCSVD<Matrix> dec(m);
  if (dec.info() != Eigen::Success) throw ConvergenceError("svd failed to converge");
  return dec.singularValues();
}

inline double nuclear_norm(const Matrix& m) { return singular_values(m).sum(); }

/// Result of singular value thresholding: the shrunk matrix and its singular values.
struct Thresholded {
  Matrix value;
  Vector singulars;
};

/// Proximal map of tau * ||.||_*: shrinks every singular value by tau toward zero.
inline Thresholded svt_factors(const Matrix& m, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) detail::invalid("svt threshold must be finite and >= 0");
  SvdFactors f = svd(m);
  Vector shrunk = (f.singulars.array() - tau).max(0.0).matrix();
  Eigen::Index keep = 0;
  while (keep < shrunk.size() && shrunk(keep) > 0.0) ++keep;
  Matrix value = Matrix::Zero(m.rows(), m.cols());
  if (keep > 0) {
    value.noalias() = f.left.leftCols(keep) * shrunk.head(keep).asDiagonal() *
                      f.right.leftCols(keep).transpose();
  }
  return {std::move(value), std::move(shrunk)};
}

inline Matrix svt(const Matrix& m, double tau) { return svt_factors(m, tau).value; }

/// argmin_v c*rho_u(v) + (v - gamma)^2 / 2. Ties at gamma = 0 return 0.
/// Unchecked scalar kernel; the matrix overload validates u and c.
inline double prox_check(double gamma, double u, double c) {
  if (gamma >= 0.0) return std::max(gamma - u * c, 0.0);
  return -std::max(-gamma - (1.0 - u) * c, 0.0);
}

inline void check_prox_args(double u, double c) {
  check_quantile_level(u);
  if (!(c > 0.0) || !std::isfinite(c)) detail::invalid("prox_check scale must be finite and > 0");
}

/// Elementwise proximal map of c * rho_u.
template <typename Derived>
typename Derived::PlainObject prox_check(const Eigen::MatrixBase<Derived>& gamma, double u, double c) {
  check_prox_args(u, c);
  return gamma.unaryExpr([u, c](double g) { return prox_check(g, u, c); });
}

}  // namespace nnqr
