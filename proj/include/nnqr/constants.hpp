#pragma once

namespace nnqr {

/// Every numerical tolerance used by the library and its acceptance checks.
struct Tolerances {
  /// Relative accuracy target of the SVD (reconstruction and orthonormality).
  static constexpr double svd = 1e-10;
  /// Sweep cap handed to the SVD backend.
  static constexpr int svd_max_sweeps = 200;

  /// ALM termination: ||dbeta||^2/p + ||dL||^2_F/NT <= alm_termination.
  static constexpr double alm_termination = 1e-6;
  static constexpr int alm_max_iters = 10000;
  /// Feasibility bound on converged fits, relative to 1 + ||Y||_F.
  static constexpr double alm_feasibility = 1e-3;
  /// Gram matrix eigenvalue ratio below which the covariate design is rejected.
  static constexpr double design_min_rcond = 1e-12;

  /// Inner ADMM used to warm start small quantile regressions. The vertex
  /// descent that follows makes the answer exact, so the ADMM budget is short.
  static constexpr double qr_admm = 1e-8;
  static constexpr int qr_admm_max_iters = 20;
  /// Slack when testing a vertex for optimality (relative to the edge slope scale).
  static constexpr double qr_vertex_slack = 1e-12;

  /// Iterative estimator uses the same criterion as the ALM solver.
  static constexpr double iterative_termination = 1e-6;
  static constexpr int iterative_max_sweeps = 500;

  /// Orthonormality check for tangent-space factors.
  static constexpr double orthonormal = 1e-8;

  /// Accuracy contract of the inverse normal CDF.
  static constexpr double normal_quantile = 1e-9;
};

}  // namespace nnqr
