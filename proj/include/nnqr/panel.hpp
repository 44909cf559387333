#pragma once

#include <utility>
#include <vector>

#include "nnqr/numcore.hpp"

namespace nnqr {

/// A balanced panel: outcome Y (N x T) and p covariate matrices of the same shape.
struct PanelData {
  Matrix Y;
  std::vector<Matrix> X;

  PanelData() = default;
  PanelData(Matrix y, std::vector<Matrix> x) : Y(std::move(y)), X(std::move(x)) { validate(); }

  Eigen::Index N() const { return Y.rows(); }
  Eigen::Index T() const { return Y.cols(); }
  Eigen::Index p() const { return static_cast<Eigen::Index>(X.size()); }

  void validate() const {
    if (Y.rows() < 1 || Y.cols() < 1) detail::invalid("panel outcome must be at least 1x1");
    require_finite(Y, "panel outcome");
    for (const Matrix& x : X) {
      if (x.rows() != Y.rows() || x.cols() != Y.cols()) {
        detail::invalid("every covariate matrix must match the outcome shape");
      }
      require_finite(x, "panel covariate");
    }
  }

  /// sum_j X_j * beta_j
  Matrix linear_index(const Vector& beta) const {
    if (beta.size() != p()) detail::invalid("coefficient length does not match covariate count");
    Matrix out = Matrix::Zero(N(), T());
    for (Eigen::Index j = 0; j < p(); ++j) out.noalias() += beta(j) * X[static_cast<std::size_t>(j)];
    return out;
  }

  /// The NT x p matrix (vec(X_1), ..., vec(X_p)), column-major vec.
  Matrix stacked_design() const {
    Matrix d(N() * T(), p());
    for (Eigen::Index j = 0; j < p(); ++j) {
      d.col(j) = X[static_cast<std::size_t>(j)].reshaped();
    }
    return d;
  }
};

}  // namespace nnqr
