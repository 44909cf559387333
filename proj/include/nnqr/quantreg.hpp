#pragma once

// Small dense linear quantile regression, argmin_b sum_i rho_u(y_i - z_i' b).
//
// An ADMM splitting (the ALM sweep with the low-rank block removed) brings b
// close to the optimum; a vertex descent then moves to an exact basic solution
// (q observations fitted with zero residual) and pivots along edges until no
// edge direction decreases the loss.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "nnqr/constants.hpp"
#include "nnqr/numcore.hpp"

namespace nnqr {

struct QuantRegOptions {
  double admm_tol = Tolerances::qr_admm;
  int admm_max_iters = Tolerances::qr_admm_max_iters;
  /// Pivot cap for the vertex descent; 0 means 10 n + 100.
  int max_pivots = 0;
};

struct QuantRegResult {
  Vector coef;
  /// y - Z coef with the basis observations set to exactly zero.
  Vector residuals;
  /// Observations fitted exactly by the returned vertex.
  std::vector<Eigen::Index> basis;
  double objective = 0.0;
  int admm_iterations = 0;
  bool admm_converged = false;
  int pivots = 0;
  /// True when the returned vertex passed the edge-optimality test.
  bool converged = false;
};

namespace detail {

inline double rcond_of_gram(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  return hi > 0.0 ? lo / hi : 0.0;
}

/// Picks q rows of z, preferring small |resid|, that form a nonsingular block.
inline std::vector<Eigen::Index> pick_basis(const Matrix& z, const Vector& resid) {
  const Eigen::Index n = z.rows();
  const Eigen::Index q = z.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(resid(a)) < std::abs(resid(b));
  });

  std::vector<Eigen::Index> basis;
  Matrix ortho(q, q);  // orthonormal rows spanning the accepted rows
  for (Eigen::Index idx : order) {
    Vector row = z.row(idx).transpose();
    const double scale = row.norm();
    if (!(scale > 0.0)) continue;
    const auto m = static_cast<Eigen::Index>(basis.size());
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < m; ++k) row -= ortho.row(k).dot(row) * ortho.row(k).transpose();
    }
    const double rest = row.norm();
    if (rest > 1e-9 * scale) {
      ortho.row(m) = (row / rest).transpose();
      basis.push_back(idx);
      if (static_cast<Eigen::Index>(basis.size()) == q) break;
    }
  }
  if (static_cast<Eigen::Index>(basis.size()) != q) {
    throw IllPosedDesign("quantile regression design does not have full column rank");
  }
  return basis;
}

inline Matrix basis_rows(const Matrix& z, const std::vector<Eigen::Index>& basis) {
  Matrix zh(static_cast<Eigen::Index>(basis.size()), z.cols());
  for (std::size_t k = 0; k < basis.size(); ++k) zh.row(static_cast<Eigen::Index>(k)) = z.row(basis[k]);
  return zh;
}

}  // namespace detail

inline QuantRegResult qr_small(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Matrix>& z_in, double u,
                               const QuantRegOptions& opts = {}) {
  check_quantile_level(u);
  const Eigen::Index n = z_in.rows();
  const Eigen::Index q = z_in.cols();
  if (y.size() != n) detail::invalid("qr_small: response length does not match design rows");
  if (q < 1 || n < q) detail::invalid("qr_small needs n >= q >= 1");
  require_finite(y, "qr_small response");
  require_finite(z_in, "qr_small design");
  const Matrix z = z_in;

  const Matrix gram = z.transpose() * z;
  if (detail::rcond_of_gram(gram) < Tolerances::design_min_rcond) {
    throw IllPosedDesign("quantile regression design does not have full column rank");
  }
  const Eigen::LDLT<Matrix> ls(gram);

  QuantRegResult out;

  // ADMM on  min rho_u(v)  s.t.  z b + v = y.
  Vector b = ls.solve(z.transpose() * y);
  Vector v = y - z * b;
  const double spread = v.cwiseAbs().mean();
  const double yscale = 1.0 + y.cwiseAbs().maxCoeff();
  if (spread > 1e-14 * yscale) {
    const double mu = 1.0 / spread;
    Vector h = Vector::Zero(n);
    Vector zb = z * b;
    for (int it = 0; it < opts.admm_max_iters; ++it) {
      const double c = 1.0 / mu;
      for (Eigen::Index i = 0; i < n; ++i) v(i) = prox_check(y(i) - zb(i) + h(i) / mu, u, c);
      Vector b_new = ls.solve(z.transpose() * (y - v + h / mu));
      zb.noalias() = z * b_new;
      Vector primal = zb + v - y;
      h -= mu * primal;
      const double step = (b_new - b).cwiseAbs().maxCoeff();
      b = std::move(b_new);
      out.admm_iterations = it + 1;
      if (step <= opts.admm_tol * (1.0 + b.cwiseAbs().maxCoeff()) &&
          primal.cwiseAbs().maxCoeff() <= opts.admm_tol * yscale) {
        out.admm_converged = true;
        break;
      }
    }
  } else {
    out.admm_converged = true;
  }

  // Vertex descent.
  Vector resid = y - z * b;
  std::vector<Eigen::Index> basis = detail::pick_basis(z, resid);
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Eigen::Index k : basis) in_basis[static_cast<std::size_t>(k)] = 1;

  const int max_pivots = opts.max_pivots > 0 ? opts.max_pivots : static_cast<int>(10 * n + 100);
  const double zero_tol = 1e-12 * yscale;
  Eigen::FullPivLU<Matrix> lu;
  Matrix w(n, q);
  struct Kink {
    double t;
    Eigen::Index idx;
    bool operator<(const Kink& o) const { return t < o.t || (t == o.t && idx < o.idx); }
  };
  std::vector<Kink> breaks;
  breaks.reserve(static_cast<std::size_t>(n));

  for (;;) {
    const Matrix zh = detail::basis_rows(z, basis);
    lu.compute(zh);
    if (!lu.isInvertible()) throw IllPosedDesign("quantile regression basis became singular");
    Vector yh(q);
    for (Eigen::Index k = 0; k < q; ++k) yh(k) = y(basis[static_cast<std::size_t>(k)]);
    b = lu.solve(yh);
    resid.noalias() = y - z * b;
    for (Eigen::Index k : basis) resid(k) = 0.0;

    // Columns of w = z zh^{-1} give the rate at which every fitted value moves
    // when basis residual k is released.
    w.noalias() = z * lu.inverse();

    double best = 0.0;
    Eigen::Index best_k = -1;
    double best_s = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      double a = 0.0;
      double deg_plus = 0.0;
      double deg_minus = 0.0;
      double scale = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (in_basis[static_cast<std::size_t>(i)]) continue;
        const double wik = w(i, k);
        scale += std::abs(wik);
        const double r = resid(i);
        if (r > zero_tol) {
          a += u * wik;
        } else if (r < -zero_tol) {
          a += (u - 1.0) * wik;
        } else {
          // residual moves by g = -s w_ik; cost rate u g if g > 0 else (u-1) g
          const double g_plus = -wik;
          deg_plus += g_plus > 0.0 ? u * g_plus : (u - 1.0) * g_plus;
          const double g_minus = wik;
          deg_minus += g_minus > 0.0 ? u * g_minus : (u - 1.0) * g_minus;
        }
      }
      const double d_plus = (1.0 - u) - a + deg_plus;
      const double d_minus = u + a + deg_minus;
      const double slack = Tolerances::qr_vertex_slack * scale;
      if (d_plus < -slack && d_plus < best) {
        best = d_plus;
        best_k = k;
        best_s = 1.0;
      }
      if (d_minus < -slack && d_minus < best) {
        best = d_minus;
        best_k = k;
        best_s = -1.0;
      }
    }

    if (best_k < 0) {
      out.converged = true;
      break;
    }
    if (out.pivots >= max_pivots) break;

    // Exact line search along the chosen edge: the loss is piecewise linear in
    // the step with kinks where nonbasic residuals cross zero.
    breaks.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double g = -best_s * w(i, best_k);
      const double r = resid(i);
      if ((r > zero_tol && g < 0.0) || (r < -zero_tol && g > 0.0)) {
        breaks.push_back({-r / g, i});
      }
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best;
    Eigen::Index entering = -1;
    for (const Kink& kink : breaks) {
      const Eigen::Index idx = kink.idx;
      slope += std::abs(w(idx, best_k));
      if (slope >= 0.0) {
        entering = idx;
        break;
      }
    }
    if (entering < 0) throw IllPosedDesign("quantile regression objective is unbounded along an edge");

    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(best_k)])] = 0;
    basis[static_cast<std::size_t>(best_k)] = entering;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    ++out.pivots;
  }

  out.coef = b;
  out.residuals = resid;
  out.basis = basis;
  out.objective = check_loss(resid, u);
  return out;
}

}  // namespace nnqr
