#pragma once

// Monte Carlo design: three covariates correlated with three time factors and
// unit loadings, quantile-dependent coefficients, and a set of active factors
// that grows with the quantile level.
//
//   Y_it = sum_j X_j,it beta_j(U_it) + sum_k 1_k(U_it) F_kt Lambda_ki(U_it) + G^{-1}(U_it)
//
// with beta_1(v) = beta_3(v) = -1 + 0.1 v, beta_2(v) = 1 + 0.1 v,
// Lambda_ki(v) = chi_ki + 0.1 v, 1_1 = 1, 1_2(v) = 1(v > 0.3), 1_3(v) = 1(v > 0.7),
// X_j,it = eta_j,it + phi (F_jt^2 + chi_ji^2).

#include <array>
#include <cstdint>
#include <vector>

#include "nnqr/distributions.hpp"
#include "nnqr/numcore.hpp"
#include "nnqr/panel.hpp"
#include "nnqr/random.hpp"

namespace nnqr {

inline constexpr int kSimCovariates = 3;
inline constexpr int kSimFactors = 3;

struct SimulationSpec {
  Eigen::Index N = 200;
  Eigen::Index T = 200;
  double phi = 0.2;
  ErrorLaw error_law = ErrorLaw::standard_normal;
  std::uint64_t seed = 0;
  std::vector<double> quantile_levels{0.5};

  void validate() const {
    if (N < 2 || T < 2) detail::invalid("simulation needs N, T >= 2");
    if (!(phi >= 0.0) || !std::isfinite(phi)) detail::invalid("phi must be finite and >= 0");
    for (double u : quantile_levels) check_quantile_level(u);
  }
};

/// The draws behind one simulated panel.
struct SimulationLatent {
  Matrix U;    // N x T quantile ranks
  Matrix F;    // kSimFactors x T, Unif[0,2]
  Matrix chi;  // kSimFactors x N, Unif[0,1]
  std::array<Matrix, kSimCovariates> eta;  // N x T, Unif[0,2]
};

struct QuantileTruth {
  double u = 0.5;
  Vector beta;
  Matrix L0;
  /// Number of structural low-rank terms at u: the constant G^{-1}(u) term plus the active factors.
  int r_true = 0;
};

struct SimulationTruth {
  PanelData data;
  std::vector<QuantileTruth> truths;
  SimulationLatent latent;
  ErrorLaw error_law = ErrorLaw::standard_normal;
  double phi = 0.0;

  const QuantileTruth& at(double u) const {
    for (const auto& q : truths) {
      if (q.u == u) return q;
    }
    detail::invalid("no truth stored for quantile level " + std::to_string(u));
  }
};

inline Vector simulation_beta(double v) {
  Vector b(kSimCovariates);
  b << -1.0 + 0.1 * v, 1.0 + 0.1 * v, -1.0 + 0.1 * v;
  return b;
}

inline bool simulation_factor_active(int k, double v) {
  switch (k) {
    case 0: return true;
    case 1: return v > 0.3;
    default: return v > 0.7;
  }
}

inline int simulation_true_rank(double u) {
  check_quantile_level(u);
  if (u <= 0.3) return 2;
  if (u <= 0.7) return 3;
  return 4;
}

/// Structural outcome of cell (i,t) evaluated at rank v with every other draw held fixed.
inline double structural_outcome(const SimulationLatent& latent, const PanelData& data, ErrorLaw law,
                                 Eigen::Index i, Eigen::Index t, double v) {
  const Vector b = simulation_beta(v);
  double y = error_quantile(law, v);
  for (int j = 0; j < kSimCovariates; ++j) y += data.X[static_cast<std::size_t>(j)](i, t) * b(j);
  for (int k = 0; k < kSimFactors; ++k) {
    if (simulation_factor_active(k, v)) y += latent.F(k, t) * (latent.chi(k, i) + 0.1 * v);
  }
  return y;
}

/// L0(u) = G^{-1}(u) 1 1' + sum over active k of Lambda_k(u) F_k'. Loadings are
/// evaluated at the requested level u, not at the drawn ranks.
inline Matrix simulation_low_rank(const SimulationLatent& latent, ErrorLaw law, double u) {
  const Eigen::Index n = latent.chi.cols();
  const Eigen::Index t = latent.F.cols();
  Matrix l0 = Matrix::Constant(n, t, error_quantile(law, u));
  for (int k = 0; k < kSimFactors; ++k) {
    if (!simulation_factor_active(k, u)) continue;
    const Vector loading_at_u = (latent.chi.row(k).array() + 0.1 * u).matrix().transpose();
    l0.noalias() += loading_at_u * latent.F.row(k);
  }
  return l0;
}

/// q_{Y|W}(u) = sum_j X_j beta_j(u) + L0(u).
inline Matrix simulation_conditional_quantile(const SimulationTruth& truth, double u) {
  return truth.data.linear_index(simulation_beta(u)) + simulation_low_rank(truth.latent, truth.error_law, u);
}

namespace detail {
enum SimStream : std::uint64_t { kStreamU = 1, kStreamF = 2, kStreamChi = 3, kStreamEta = 10 };
}

inline SimulationTruth simulate(const SimulationSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.N;
  const Eigen::Index t = spec.T;

  SimulationTruth out;
  out.error_law = spec.error_law;
  out.phi = spec.phi;
  SimulationLatent& lat = out.latent;

  RandomStream u_stream(derive_seed(spec.seed, detail::kStreamU));
  lat.U.resize(n, t);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index s = 0; s < t; ++s) lat.U(i, s) = u_stream.uniform();

  RandomStream f_stream(derive_seed(spec.seed, detail::kStreamF));
  lat.F.resize(kSimFactors, t);
  for (int k = 0; k < kSimFactors; ++k)
    for (Eigen::Index s = 0; s < t; ++s) lat.F(k, s) = f_stream.uniform(0.0, 2.0);

  RandomStream chi_stream(derive_seed(spec.seed, detail::kStreamChi));
  lat.chi.resize(kSimFactors, n);
  for (int k = 0; k < kSimFactors; ++k)
    for (Eigen::Index i = 0; i < n; ++i) lat.chi(k, i) = chi_stream.uniform(0.0, 1.0);

  std::vector<Matrix> x(kSimCovariates);
  for (int j = 0; j < kSimCovariates; ++j) {
    RandomStream eta_stream(derive_seed(spec.seed, detail::kStreamEta + static_cast<std::uint64_t>(j)));
    Matrix& eta = lat.eta[static_cast<std::size_t>(j)];
    eta.resize(n, t);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index s = 0; s < t; ++s) eta(i, s) = eta_stream.uniform(0.0, 2.0);
    Matrix& xj = x[static_cast<std::size_t>(j)];
    xj.resize(n, t);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index s = 0; s < t; ++s) {
        xj(i, s) = eta(i, s) + spec.phi * (lat.F(j, s) * lat.F(j, s) + lat.chi(j, i) * lat.chi(j, i));
      }
    }
  }

  out.data.Y.resize(n, t);
  out.data.X = std::move(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index s = 0; s < t; ++s) {
      out.data.Y(i, s) = structural_outcome(lat, out.data, spec.error_law, i, s, lat.U(i, s));
    }
  }

  for (double u : spec.quantile_levels) {
    QuantileTruth q;
    q.u = u;
    q.beta = simulation_beta(u);
    q.L0 = simulation_low_rank(lat, spec.error_law, u);
    q.r_true = simulation_true_rank(u);
    out.truths.push_back(std::move(q));
  }
  return out;
}

}  // namespace nnqr
