#pragma once

// Monte Carlo grid runner: simulate, fit each requested estimator, aggregate.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nnqr/alm.hpp"
#include "nnqr/baselines.hpp"
#include "nnqr/metrics.hpp"
#include "nnqr/simulation.hpp"

namespace nnqr {

struct ExperimentCell {
  Eigen::Index N = 200;
  Eigen::Index T = 200;
  double phi = 0.2;
  ErrorLaw error_law = ErrorLaw::standard_normal;
  double u = 0.5;
  std::vector<Estimator> estimators{Estimator::Nu};
  /// Factor count for It; the true rank at u when unset.
  std::optional<int> it_rank;
};

struct ExperimentOptions {
  int reps = 20;
  std::uint64_t master_seed = 0;
  /// 0 reads NNQR_WORKERS, then falls back to the hardware thread count.
  int workers = 0;
  /// Score pooled fits' quantile error with L_hat = 0.
  bool pooled_implied_mse_q = false;
  /// Retain every fitted L_hat together with its truth in the result.
  bool keep_estimates = false;
  IterativeOptions iterative;
  int alm_max_iters = Tolerances::alm_max_iters;
  double alm_tol = Tolerances::alm_termination;
};

/// Telemetry and (optionally) the estimate of one fit.
struct ReplicationRecord {
  std::size_t cell = 0;
  int replication = 0;
  Estimator estimator = Estimator::Nu;
  std::uint64_t seed = 0;
  bool ok = false;
  bool converged = false;
  std::string error;
  int iterations = 0;
  double seconds = 0.0;
  Vector beta;
  Vector beta_true;
  Vector singulars;  // of L_hat, when the estimator has one
  std::optional<ReplicationErrors> errors;
  std::optional<Matrix> L;
  std::optional<Matrix> L0;
  /// Iterative estimator only.
  std::vector<double> objective_history;
};

struct ExperimentResult {
  /// One row per (cell, estimator), cell-major.
  std::vector<MetricsRow> rows;
  /// Indexed [cell][replication][estimator position within the cell].
  std::vector<std::vector<std::vector<ReplicationRecord>>> records;
};

/// Panel seed of replication b. Shared by every cell so cells are paired.
inline std::uint64_t replication_seed(std::uint64_t master, int b) {
  return derive_seed(master, 0x5eedULL + static_cast<std::uint64_t>(b));
}

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NNQR_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace detail {

inline ReplicationRecord fit_one(const ExperimentCell& cell, const SimulationTruth& sim, Estimator est,
                                 const ExperimentOptions& opts) {
  using clock = std::chrono::steady_clock;
  const QuantileTruth& truth = sim.at(cell.u);
  ReplicationRecord rec;
  rec.estimator = est;
  rec.beta_true = truth.beta;
  ReplicationEstimate estimate;
  try {
    const auto start = clock::now();
    switch (est) {
      case Estimator::Nu: {
        FitConfig cfg = default_fit_config(sim.data, cell.u);
        cfg.max_iters = opts.alm_max_iters;
        cfg.tol = opts.alm_tol;
        FitResult fit = alm_fit(sim.data, cfg);
        rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
        rec.converged = fit.converged;
        rec.iterations = fit.iterations;
        rec.singulars = fit.singulars;
        estimate.beta = fit.beta;
        estimate.L = std::move(fit.L);
        break;
      }
      case Estimator::It: {
        const int r = cell.it_rank ? *cell.it_rank : truth.r_true;
        IterativeFit fit = iterative_fit(sim.data, cell.u, r, opts.iterative);
        rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
        rec.converged = fit.converged && !fit.degenerate;
        rec.iterations = fit.iterations;
        rec.objective_history = fit.objective_history;
        if (fit.degenerate) rec.error = fit.degenerate_reason;
        rec.singulars = singular_values(fit.L);
        estimate.beta = fit.beta;
        estimate.L = std::move(fit.L);
        break;
      }
      case Estimator::Po: {
        QuantRegResult fit = pooled_regression(sim.data, sim.data.Y, cell.u);
        rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
        rec.converged = fit.converged;
        rec.iterations = fit.pivots;
        estimate.beta = fit.coef;
        break;
      }
    }
    estimate.seconds = rec.seconds;
    rec.beta = estimate.beta;
    const bool implied = est == Estimator::Po && opts.pooled_implied_mse_q;
    rec.errors = replication_errors(estimate, {truth.beta, &truth.L0, &sim.data.X}, implied);
    rec.ok = true;
    if (opts.keep_estimates) {
      rec.L = std::move(estimate.L);
      rec.L0 = truth.L0;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace detail

/// Runs every cell for opts.reps replications. Fit failures and non-convergence
/// are counted per row; the grid always completes. Deterministic given the
/// master seed regardless of the worker count (timings aside).
inline ExperimentResult run_experiment(const std::vector<ExperimentCell>& grid, const ExperimentOptions& opts) {
  if (grid.empty()) detail::invalid("experiment grid is empty");
  if (opts.reps < 1) detail::invalid("experiment needs at least one replication");
  for (const auto& cell : grid) {
    if (cell.estimators.empty()) detail::invalid("experiment cell lists no estimators");
    SimulationSpec probe{cell.N, cell.T, cell.phi, cell.error_law, 0, {cell.u}};
    probe.validate();
  }

  ExperimentResult result;
  result.records.resize(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    result.records[c].resize(static_cast<std::size_t>(opts.reps));
  }

  const std::size_t total = grid.size() * static_cast<std::size_t>(opts.reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      const std::size_t c = job / static_cast<std::size_t>(opts.reps);
      const int b = static_cast<int>(job % static_cast<std::size_t>(opts.reps));
      const ExperimentCell& cell = grid[c];
      const std::uint64_t seed = replication_seed(opts.master_seed, b);
      SimulationTruth sim = simulate({cell.N, cell.T, cell.phi, cell.error_law, seed, {cell.u}});
      std::vector<ReplicationRecord> recs;
      recs.reserve(cell.estimators.size());
      for (Estimator est : cell.estimators) {
        ReplicationRecord rec = detail::fit_one(cell, sim, est, opts);
        rec.cell = c;
        rec.replication = b;
        rec.seed = seed;
        recs.push_back(std::move(rec));
      }
      result.records[c][static_cast<std::size_t>(b)] = std::move(recs);
    }
  };

  const int workers = std::min<int>(resolve_workers(opts.workers), static_cast<int>(total));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t c = 0; c < grid.size(); ++c) {
    const ExperimentCell& cell = grid[c];
    for (std::size_t e = 0; e < cell.estimators.size(); ++e) {
      std::vector<ReplicationErrors> errs;
      int nonconv = 0, failed = 0;
      for (int b = 0; b < opts.reps; ++b) {
        const ReplicationRecord& rec = result.records[c][static_cast<std::size_t>(b)][e];
        if (!rec.ok) {
          ++failed;
          continue;
        }
        if (!rec.converged) ++nonconv;
        errs.push_back(*rec.errors);
      }
      MetricsRow row;
      if (!errs.empty()) row = aggregate_metrics(errs);
      row.estimator = cell.estimators[e];
      row.u = cell.u;
      row.N = cell.N;
      row.T = cell.T;
      row.phi = cell.phi;
      row.error_law = cell.error_law;
      row.mse_q_implied = row.estimator == Estimator::Po && opts.pooled_implied_mse_q;
      row.nonconverged = nonconv;
      row.failed = failed;
      result.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace nnqr
