// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Panels are simulated once per replication and shared by every criterion that
// needs them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "nnqr/nnqr.hpp"

using namespace nnqr;

namespace {

namespace pinned {
constexpr int kProxTriples = 1000;
constexpr double kProxTol = 1e-6;
constexpr double kProxSeconds = 5.0;
constexpr int kSvtMatrices = 100;
constexpr double kSvtTol = 1e-8;
constexpr double kLimitHuge = 1e6;
constexpr double kLimitHugeTol = 1e-6;
constexpr double kLimitTiny = 1e-12;
constexpr double kLimitTinyTol = 1e-3;
constexpr int kReps = 20;
constexpr Eigen::Index kSize = 200;
constexpr double kPhi = 0.2;
constexpr double kNuBiasMax = 1.0;
constexpr double kPoBiasLo = 15.0, kPoBiasHi = 30.0;
constexpr double kNuMseQLo = 0.1, kNuMseQHi = 0.45;
constexpr double kNuMseLLo = 0.15, kNuMseLHi = 0.6;
constexpr double kNuBiasMaxT2 = 1.2;
constexpr double kPoBiasMinT2 = 15.0;
constexpr double kShare = 0.9;
constexpr double kGapRatio = 0.5;
constexpr double kConeConstant = 1.0;
constexpr int kQuantileVectors = 100;
constexpr double kMonotoneSlack = 1e-10;
constexpr std::uint64_t kMasterSeed = 20240601;
}  // namespace pinned

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %2d  %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& line) {
  std::printf("INFO      %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double golden_prox(double gamma, double u, double c) {
  auto f = [&](double v) { return c * check_loss(v, u) + 0.5 * (v - gamma) * (v - gamma); };
  double a = gamma - c - 1.0, b = gamma + c + 1.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-12) {
    if (f1 < f2) {
      b = x2, x2 = x1, f2 = f1, x1 = b - g * (b - a), f1 = f(x1);
    } else {
      a = x1, x1 = x2, f1 = f2, x2 = a + g * (b - a), f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = nd(rng);
  return m;
}

void criterion_prox() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> gd(-10.0, 10.0), ud(0.001, 0.999), cd(1e-3, 5.0);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < pinned::kProxTriples; ++k) {
    const double g = gd(rng), u = ud(rng), c = cd(rng);
    worst = std::max(worst, std::abs(prox_check(g, u, c) - golden_prox(g, u, c)));
  }
  const double secs = seconds_since(t0);
  report(1, "prox vs golden-section oracle", worst <= pinned::kProxTol && secs < pinned::kProxSeconds,
         fmt("max |diff| = %.3g", worst) + fmt(", %.3f s", secs));
}

void criterion_svt() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> rows(1, 30), cols(1, 20);
  std::uniform_real_distribution<double> td(0.0, 4.0);
  double worst_fro = 0.0, worst_nuc = 0.0;
  for (int k = 0; k < pinned::kSvtMatrices; ++k) {
    const Matrix m = gaussian(rows(rng), cols(rng), rng);
    const double tau = td(rng);
    Eigen::JacobiSVD<Matrix> js(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix sigma = Matrix::Zero(m.rows(), m.cols());
    double shrunk_sum = 0.0;
    for (Eigen::Index j = 0; j < js.singularValues().size(); ++j) {
      sigma(j, j) = std::max(js.singularValues()(j) - tau, 0.0);
      shrunk_sum += sigma(j, j);
    }
    const Matrix oracle = js.matrixU() * sigma * js.matrixV().transpose();
    const Matrix out = svt(m, tau);
    worst_fro = std::max(worst_fro, (out - oracle).norm());
    worst_nuc = std::max(worst_nuc, std::abs(nuclear_norm(out) - shrunk_sum));
  }
  report(2, "svt vs full-SVD oracle", worst_fro <= pinned::kSvtTol && worst_nuc <= pinned::kSvtTol,
         fmt("max Frobenius diff = %.3g", worst_fro) + fmt(", max nuclear-norm diff = %.3g", worst_nuc));
}

void criterion_limits() {
  const SimulationTruth sim = simulate({40, 30, pinned::kPhi, ErrorLaw::standard_normal, 3, {0.5}});
  FitConfig big = default_fit_config(sim.data, 0.5);
  big.lambda = pinned::kLimitHuge;
  const FitResult a = alm_fit(sim.data, big);
  const double ratio_big = a.L.norm() / sim.data.Y.norm();

  std::mt19937_64 rng(3);
  const PanelData bare(gaussian(30, 25, rng), {});
  FitConfig tiny = default_fit_config(bare, 0.5);
  tiny.lambda = pinned::kLimitTiny;
  const FitResult b = alm_fit(bare, tiny);
  const double ratio_tiny = (b.L - bare.Y).norm() / bare.Y.norm();
  report(3, "penalty limits", ratio_big <= pinned::kLimitHugeTol && ratio_tiny <= pinned::kLimitTinyTol,
         fmt("huge lambda ||L||/||Y|| = %.3g", ratio_big) + fmt(", tiny lambda ||L-Y||/||Y|| = %.3g", ratio_tiny));
}

struct NuFit {
  FitResult fit;
  double seconds = 0.0;
};

NuFit timed_alm(const PanelData& data, double u) {
  const auto t0 = std::chrono::steady_clock::now();
  NuFit out{alm_fit(data, default_fit_config(data, u)), 0.0};
  out.seconds = seconds_since(t0);
  return out;
}

ReplicationErrors score(const Vector& beta, const Matrix* l, const QuantileTruth& truth, const PanelData& data,
                        double secs) {
  ReplicationEstimate est{beta, l ? std::optional<Matrix>(*l) : std::nullopt, secs};
  return replication_errors(est, {truth.beta, &truth.L0, &data.X});
}

double share(const std::vector<bool>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

}  // namespace

int main() {
  const auto t_start = std::chrono::steady_clock::now();
  criterion_prox();
  criterion_svt();
  criterion_limits();

  const std::vector<double> levels{0.2, 0.5, 0.8};
  const double threshold = default_rank_threshold(pinned::kSize, pinned::kSize);

  // Shared 200 x 200 normal-error panels.
  std::vector<ReplicationErrors> nu_mid, po_mid, it_mid;
  std::vector<std::vector<bool>> rank_ok(3), gap_ok(3), cone_ok(3);
  std::vector<double> nu_secs, it_secs;
  int nonconverged = 0, it_nonconverged = 0;
  bool monotone = true;
  double worst_rise = 0.0;
  std::vector<int> rank_hist(8, 0);
  for (int b = 0; b < pinned::kReps; ++b) {
    const std::uint64_t seed = replication_seed(pinned::kMasterSeed, b);
    const SimulationTruth sim =
        simulate({pinned::kSize, pinned::kSize, pinned::kPhi, ErrorLaw::standard_normal, seed, levels});
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const double u = levels[k];
      const QuantileTruth& truth = sim.at(u);
      const NuFit nu = timed_alm(sim.data, u);
      if (!nu.fit.converged) ++nonconverged;

      const RankEstimate est = estimate_rank(nu.fit.singulars, threshold);
      rank_ok[k].push_back(est.r_hat == truth.r_true);
      if (u == 0.5) ++rank_hist[static_cast<std::size_t>(std::min<Eigen::Index>(est.r_hat, 7))];
      const auto r = static_cast<Eigen::Index>(truth.r_true);
      const double top = nu.fit.singulars(r - 1);
      const double next = nu.fit.singulars(r);
      gap_ok[k].push_back(top > 0.0 && next / top < pinned::kGapRatio);

      if (nu.fit.converged) {
        const TangentFactors tf = tangent_factors(truth.L0, numerical_rank(singular_values(truth.L0)));
        const ConeReport cone =
            cone_diagnostic(nu.fit.beta - truth.beta, nu.fit.L - truth.L0, tf, pinned::kConeConstant);
        cone_ok[k].push_back(cone.in_cone);
      } else {
        cone_ok[k].push_back(false);
      }

      if (u == 0.5) {
        nu_mid.push_back(score(nu.fit.beta, &nu.fit.L, truth, sim.data, nu.seconds));
        nu_secs.push_back(nu.seconds);
        const QuantRegResult po = pooled_regression(sim.data, sim.data.Y, u);
        po_mid.push_back(score(po.coef, nullptr, truth, sim.data, 0.0));

        const auto t0 = std::chrono::steady_clock::now();
        const IterativeFit it = iterative_fit(sim.data, u, truth.r_true);
        it_secs.push_back(seconds_since(t0));
        if (!it.converged || it.degenerate) ++it_nonconverged;
        it_mid.push_back(score(it.beta, &it.L, truth, sim.data, it_secs.back()));
        for (std::size_t s = 1; s < it.objective_history.size(); ++s) {
          const double rise = it.objective_history[s] - it.objective_history[s - 1];
          worst_rise = std::max(worst_rise, rise);
          if (rise > pinned::kMonotoneSlack) monotone = false;
        }
      }
    }
    info("replication " + std::to_string(b + 1) + "/" + std::to_string(pinned::kReps) + " done" +
         fmt(" (%.0f s elapsed)", seconds_since(t_start)));
  }
  const MetricsRow nu_row = aggregate_metrics(nu_mid);
  const MetricsRow po_row = aggregate_metrics(po_mid);
  const MetricsRow it_row = aggregate_metrics(it_mid);

  {
    const double nb = 100.0 * nu_row.bias2_beta, pb = 100.0 * po_row.bias2_beta;
    const double mq = *nu_row.mse_q, ml = *nu_row.mse_L;
    const bool pass = nb >= 0.0 && nb <= pinned::kNuBiasMax && pb >= pinned::kPoBiasLo && pb <= pinned::kPoBiasHi &&
                      mq >= pinned::kNuMseQLo && mq <= pinned::kNuMseQHi && ml >= pinned::kNuMseLLo &&
                      ml <= pinned::kNuMseLHi;
    report(4, "median cell, normal errors, 200x200", pass,
           fmt("Nu bias2x100 = %.3f", nb) + fmt(" [0, 1.0]; Po bias2x100 = %.3f", pb) +
               fmt(" [15, 30]; Nu MSE_q = %.3f", mq) + fmt(" [0.1, 0.45]; Nu MSE_L = %.3f", ml) + " [0.15, 0.6]");
    info(fmt("Nu var_beta x1e4 = %.3f", 1e4 * nu_row.var_beta) + fmt(", Po var_beta x1e4 = %.3f", 1e4 * po_row.var_beta) +
         fmt(", Nu non-converged fits (all levels) = %.0f", nonconverged));
  }

  {
    std::vector<ReplicationErrors> nu_t2, po_t2;
    for (int b = 0; b < pinned::kReps; ++b) {
      const std::uint64_t seed = replication_seed(pinned::kMasterSeed, b);
      const SimulationTruth sim =
          simulate({pinned::kSize, pinned::kSize, pinned::kPhi, ErrorLaw::student_t2, seed, {0.5}});
      const QuantileTruth& truth = sim.at(0.5);
      const NuFit nu = timed_alm(sim.data, 0.5);
      nu_t2.push_back(score(nu.fit.beta, &nu.fit.L, truth, sim.data, nu.seconds));
      const QuantRegResult po = pooled_regression(sim.data, sim.data.Y, 0.5);
      po_t2.push_back(score(po.coef, nullptr, truth, sim.data, 0.0));
    }
    const double nb = 100.0 * aggregate_metrics(nu_t2).bias2_beta;
    const double pb = 100.0 * aggregate_metrics(po_t2).bias2_beta;
    report(5, "median cell, t2 errors, 200x200", nb >= 0.0 && nb <= pinned::kNuBiasMaxT2 && pb >= pinned::kPoBiasMinT2,
           fmt("Nu bias2x100 = %.3f", nb) + fmt(" [0, 1.2]; Po bias2x100 = %.3f", pb) + " [>= 15]");
  }

  {
    std::vector<double> mse_q;
    for (Eigen::Index n : {Eigen::Index{100}, Eigen::Index{150}}) {
      std::vector<ReplicationErrors> errs;
      for (int b = 0; b < pinned::kReps; ++b) {
        const std::uint64_t seed = replication_seed(pinned::kMasterSeed, b);
        const SimulationTruth sim = simulate({n, n, pinned::kPhi, ErrorLaw::standard_normal, seed, {0.5}});
        const NuFit nu = timed_alm(sim.data, 0.5);
        errs.push_back(score(nu.fit.beta, &nu.fit.L, sim.at(0.5), sim.data, nu.seconds));
      }
      mse_q.push_back(*aggregate_metrics(errs).mse_q);
    }
    mse_q.push_back(*nu_row.mse_q);
    report(6, "Nu MSE_q decreases with panel size", mse_q[0] > mse_q[1] && mse_q[1] > mse_q[2],
           fmt("100: %.4f", mse_q[0]) + fmt(", 150: %.4f", mse_q[1]) + fmt(", 200: %.4f", mse_q[2]));
  }

  {
    const bool pass = share(rank_ok[0]) >= pinned::kShare && share(rank_ok[1]) >= pinned::kShare &&
                      share(rank_ok[2]) >= pinned::kShare;
    report(7, "rank estimate at default threshold", pass,
           fmt("share correct u=0.2: %.2f", share(rank_ok[0])) + fmt(", u=0.5: %.2f", share(rank_ok[1])) +
               fmt(", u=0.8: %.2f", share(rank_ok[2])) + fmt(" (threshold %.2f)", threshold));
    std::string hist = "r_hat histogram at u=0.5:";
    for (std::size_t r = 0; r < rank_hist.size(); ++r) {
      if (rank_hist[r] > 0) hist += " " + std::to_string(r) + "->" + std::to_string(rank_hist[r]);
    }
    info(hist);
  }

  {
    const bool pass =
        share(gap_ok[0]) >= pinned::kShare && share(gap_ok[1]) >= pinned::kShare && share(gap_ok[2]) >= pinned::kShare;
    report(8, "singular-value gap after the true rank", pass,
           fmt("share with ratio < 0.5 u=0.2: %.2f", share(gap_ok[0])) + fmt(", u=0.5: %.2f", share(gap_ok[1])) +
               fmt(", u=0.8: %.2f", share(gap_ok[2])));
  }

  {
    const bool pass = share(cone_ok[0]) >= pinned::kShare && share(cone_ok[1]) >= pinned::kShare &&
                      share(cone_ok[2]) >= pinned::kShare;
    report(9, "estimation errors inside the cone", pass,
           fmt("share in cone u=0.2: %.2f", share(cone_ok[0])) + fmt(", u=0.5: %.2f", share(cone_ok[1])) +
               fmt(", u=0.8: %.2f", share(cone_ok[2])));
  }

  {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> nd(3, 500);
    std::uniform_real_distribution<double> ud(0.01, 0.99);
    std::student_t_distribution<double> td(2.0);
    int exact = 0, balanced = 0, converged = 0;
    for (int k = 0; k < pinned::kQuantileVectors; ++k) {
      const int n = nd(rng);
      const double u = ud(rng);
      std::vector<double> ys(static_cast<std::size_t>(n));
      for (double& v : ys) v = td(rng);
      const QuantRegResult fit = qr_small(Eigen::Map<const Vector>(ys.data(), n), Matrix::Ones(n, 1), u);
      std::vector<double> sorted = ys;
      std::sort(sorted.begin(), sorted.end());
      const auto idx = static_cast<std::size_t>(std::max(1.0, std::ceil(n * u))) - 1;
      exact += fit.coef(0) == sorted[idx];
      if (!fit.converged) continue;
      ++converged;
      const double neg = static_cast<double>((fit.residuals.array() < 0.0).count());
      const double zero = static_cast<double>((fit.residuals.array() == 0.0).count());
      balanced += std::abs(neg / n - u) <= 1.0 / n + zero / n + 1e-12;
    }
    report(10, "intercept-only quantile regression", exact == pinned::kQuantileVectors && balanced == converged,
           std::to_string(exact) + "/" + std::to_string(pinned::kQuantileVectors) + " exact sample quantiles, " +
               std::to_string(balanced) + "/" + std::to_string(converged) + " converged solves sign-balanced");
  }

  report(11, "iterative objective nonincreasing across sweeps", monotone,
         fmt("largest rise = %.3g", worst_rise) + " over " + std::to_string(it_mid.size()) + " fits");

  {
    double nu_mean = 0.0, it_mean = 0.0;
    for (double s : nu_secs) nu_mean += s;
    for (double s : it_secs) it_mean += s;
    nu_mean /= static_cast<double>(nu_secs.size());
    it_mean /= static_cast<double>(it_secs.size());
    report(12, "Nu no slower than It on 200x200", nu_mean <= it_mean,
           fmt("mean Nu %.3f s", nu_mean) + fmt(", mean It %.3f s", it_mean) + fmt(" (ratio 1:%.1f)", it_mean / nu_mean));
    info(fmt("It bias2x100 = %.3f", 100.0 * it_row.bias2_beta) + fmt(", MSE_L = %.3f", *it_row.mse_L) +
         fmt(", MSE_q = %.3f", *it_row.mse_q) + fmt(", non-converged = %.0f", it_nonconverged));
  }

  info(fmt("total %.0f s", seconds_since(t_start)));
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
