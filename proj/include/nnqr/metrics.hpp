#pragma once

// Replication-level error measures and their aggregation into one table row.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnqr/distributions.hpp"
#include "nnqr/numcore.hpp"

namespace nnqr {

enum class Estimator { Nu, It, Po };

inline std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Nu: return "Nu";
    case Estimator::It: return "It";
    default: return "Po";
  }
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "nu" || s == "Nu") return Estimator::Nu;
  if (s == "it" || s == "It") return Estimator::It;
  if (s == "po" || s == "Po") return Estimator::Po;
  detail::invalid("unknown estimator '" + s + "' (expected nu, it or po)");
}

/// One replication's estimate. Pooled fits carry no L.
struct ReplicationEstimate {
  Vector beta;
  std::optional<Matrix> L;
  double seconds = 0.0;
};

/// Ground truth and covariates a replication is scored against.
struct ReplicationTarget {
  Vector beta;
  const Matrix* L0 = nullptr;
  const std::vector<Matrix>* X = nullptr;
};

/// Per-replication errors; aggregate_metrics reduces a list of these.
struct ReplicationErrors {
  Vector beta_hat;
  Vector beta_true;
  std::optional<double> sq_err_L;  // ||L_hat - L0||_F^2 / NT
  std::optional<double> sq_err_q;  // ||sum_j X_j (b_hat_j - b_j) + L_hat - L0||_F^2 / NT
  double seconds = 0.0;
};

/// Scores one estimate. When the estimate has no L and `implied_zero_L` is set,
/// the quantile error is computed with L_hat = 0.
inline ReplicationErrors replication_errors(const ReplicationEstimate& est, const ReplicationTarget& truth,
                                            bool implied_zero_L = false) {
  if (truth.L0 == nullptr || truth.X == nullptr) detail::invalid("replication target is incomplete");
  const Matrix& l0 = *truth.L0;
  const auto& x = *truth.X;
  if (est.beta.size() != truth.beta.size() || static_cast<std::size_t>(est.beta.size()) != x.size()) {
    detail::invalid("coefficient lengths do not match the covariate count");
  }
  ReplicationErrors out;
  out.beta_hat = est.beta;
  out.beta_true = truth.beta;
  out.seconds = est.seconds;
  const double nt = static_cast<double>(l0.rows() * l0.cols());

  if (est.L || implied_zero_L) {
    Matrix dl = est.L ? Matrix(*est.L - l0) : Matrix(-l0);
    if (dl.rows() != l0.rows() || dl.cols() != l0.cols()) detail::invalid("L_hat does not match L0");
    if (est.L) out.sq_err_L = dl.squaredNorm() / nt;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j].rows() != l0.rows() || x[j].cols() != l0.cols()) detail::invalid("covariate shape mismatch");
      const auto jj = static_cast<Eigen::Index>(j);
      dl.noalias() += (est.beta(jj) - truth.beta(jj)) * x[j];
    }
    out.sq_err_q = dl.squaredNorm() / nt;
  }
  return out;
}

struct MetricsRow {
  Estimator estimator = Estimator::Nu;
  double u = 0.5;
  Eigen::Index N = 0;
  Eigen::Index T = 0;
  double phi = 0.0;
  ErrorLaw error_law = ErrorLaw::standard_normal;
  /// Stored unscaled; tables multiply by 100.
  double bias2_beta = 0.0;
  /// Stored unscaled; tables multiply by 1e4.
  double var_beta = 0.0;
  std::optional<double> mse_L;
  std::optional<double> mse_q;
  /// mse_q was computed with L_hat = 0 for an estimator without L.
  bool mse_q_implied = false;
  double mean_seconds = 0.0;
  int replications = 0;
  int nonconverged = 0;
  int failed = 0;
};

/// Bias^2 = mean_j (mean_b (b_hat - b))^2, Var = mean_j (mean_b b_hat^2 - (mean_b b_hat)^2),
/// MSE_L and MSE_q averaged over replications.
inline MetricsRow aggregate_metrics(std::span<const ReplicationErrors> reps) {
  if (reps.empty()) detail::invalid("metrics need at least one replication");
  const Eigen::Index p = reps.front().beta_hat.size();
  const double nb = static_cast<double>(reps.size());

  Vector mean_err = Vector::Zero(p);
  Vector mean_hat = Vector::Zero(p);
  double sum_l = 0.0, sum_q = 0.0, sum_sec = 0.0;
  bool has_l = true, has_q = true;
  for (const auto& r : reps) {
    if (r.beta_hat.size() != p || r.beta_true.size() != p) detail::invalid("inconsistent coefficient lengths");
    mean_err += r.beta_hat - r.beta_true;
    mean_hat += r.beta_hat;
    sum_sec += r.seconds;
    if (r.sq_err_L) sum_l += *r.sq_err_L; else has_l = false;
    if (r.sq_err_q) sum_q += *r.sq_err_q; else has_q = false;
  }
  mean_err /= nb;
  mean_hat /= nb;

  Vector var = Vector::Zero(p);
  for (const auto& r : reps) var += (r.beta_hat - mean_hat).cwiseAbs2();
  var /= nb;

  MetricsRow row;
  if (p > 0) {
    row.bias2_beta = mean_err.squaredNorm() / static_cast<double>(p);
    row.var_beta = var.sum() / static_cast<double>(p);
  }
  if (has_l) row.mse_L = sum_l / nb;
  if (has_q) row.mse_q = sum_q / nb;
  row.mean_seconds = sum_sec / nb;
  row.replications = static_cast<int>(reps.size());
  return row;
}

inline MetricsRow compute_metrics(std::span<const ReplicationEstimate> fits, std::span<const ReplicationTarget> truths,
                                  bool implied_zero_L = false) {
  if (fits.size() != truths.size()) detail::invalid("one truth per replication is required");
  std::vector<ReplicationErrors> errs;
  errs.reserve(fits.size());
  for (std::size_t b = 0; b < fits.size(); ++b) errs.push_back(replication_errors(fits[b], truths[b], implied_zero_L));
  MetricsRow row = aggregate_metrics(errs);
  row.mse_q_implied = implied_zero_L && !fits.empty() && !fits.front().L;
  return row;
}

}  // namespace nnqr
