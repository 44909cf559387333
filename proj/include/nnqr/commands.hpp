#pragma once

// Command-line front end: fit, rank, bench, simulate.
// Exit codes: 0 success, 2 usage or configuration error, 3 data or numerical error.

#include <cstdint>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nnqr/alm.hpp"
#include "nnqr/experiment.hpp"
#include "nnqr/panel_io.hpp"
#include "nnqr/rank.hpp"
#include "nnqr/simulation.hpp"

namespace nnqr::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 2, kDataError = 3 };

using json = nlohmann::ordered_json;

/// "200x150" -> (200, 150). Throws InvalidArgument on anything else.
inline std::pair<Eigen::Index, Eigen::Index> parse_size(const std::string& token) {
  const auto x = token.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == token.size()) {
    detail::invalid("invalid size token '" + token + "' (expected NxT, e.g. 200x200)");
  }
  auto part = [&](const std::string& s) {
    for (char ch : s) {
      if (ch < '0' || ch > '9') detail::invalid("invalid size token '" + token + "'");
    }
    const long long v = std::stoll(s);
    if (v < 2) detail::invalid("size token '" + token + "' needs N, T >= 2");
    return static_cast<Eigen::Index>(v);
  };
  return {part(token.substr(0, x)), part(token.substr(x + 1))};
}

/// %g rendering used in file and directory names.
inline std::string level_tag(double u) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", u);
  return buf;
}

inline std::vector<double> vector_values(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

/// Accepted on every subcommand; the file itself is expanded by expand_config before parsing.
inline void add_config_option(CLI::App& sub) {
  sub.add_option("--config", "Flat key=value file; command-line flags take precedence");
}

/// Replaces "--config PATH" with "--key=value" arguments for every key in the
/// file that is not already given on the command line. Lines starting with
/// '#' or ';' are comments.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> paths;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) detail::invalid("--config needs a file path");
      paths.push_back(args[++k]);
    } else if (args[k].rfind("--config=", 0) == 0) {
      paths.push_back(args[k].substr(9));
    } else {
      out.push_back(args[k]);
    }
  }
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(out.begin(), out.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) detail::invalid("cannot open config file '" + path + "'");
    std::string line;
    std::vector<std::string> extra;
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) detail::invalid("config line '" + t + "' is not key=value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.rfind("--", 0) == 0) key = key.substr(2);
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      if (key.empty() || key == "config") detail::invalid("invalid config key in '" + t + "'");
      if (!given(key)) extra.push_back("--" + key + "=" + value);
    }
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

struct AlmFlags {
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> l_inf_bound;
  double tol = Tolerances::alm_termination;
  int max_iters = Tolerances::alm_max_iters;

  void add_to(CLI::App& app) {
    app.add_option("--lambda", lambda, "Nuclear-norm penalty (default log(NT) sqrt(max(N,T)) / (3.6 NT))");
    app.add_option("--mu", mu, "Augmented Lagrangian penalty (default 0.25 NT / ||Y||_1)");
    app.add_option("--l-inf-bound", l_inf_bound, "Clip L entries into [-bound, bound] after each L-step");
    app.add_option("--tol", tol, "Termination tolerance on the per-iteration change")->capture_default_str();
    app.add_option("--max-iters", max_iters, "Iteration cap")->capture_default_str();
  }

  FitConfig config(const PanelData& data, double u) const {
    FitConfig c = default_fit_config(data, u);
    if (lambda) c.lambda = *lambda;
    c.mu = mu;
    c.l_inf_bound = l_inf_bound;
    c.tol = tol;
    c.max_iters = max_iters;
    return c;
  }

  json describe(const FitConfig& c, const FitResult& fit) const {
    json j;
    j["lambda"] = c.lambda;
    j["lambda_source"] = lambda ? "flag" : "default";
    j["mu"] = fit.mu;
    j["mu_source"] = mu ? "flag" : "default";
    j["tol"] = c.tol;
    j["max_iters"] = c.max_iters;
    j["l_inf_bound"] = c.l_inf_bound ? json(*c.l_inf_bound) : json(nullptr);
    return j;
  }
};

inline json fit_summary(const PanelData& data, const FitResult& fit) {
  json j;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["final_step"] = fit.final_step;
  j["final_constraint_residual"] = fit.final_constraint_residual;
  j["feasibility_bound"] = Tolerances::alm_feasibility * (1.0 + data.Y.norm());
  j["objective"] = fit.objective;
  j["max_abs_L"] = fit.max_abs_L;
  if (!fit.converged) j["warning"] = "iteration cap reached before the termination criterion was met";
  return j;
}

struct FitCommand {
  std::string input;
  std::vector<double> u;
  std::string out = ".";
  AlmFlags alm;

  void add_to(CLI::App& parent) {
    CLI::App* sub = parent.add_subcommand("fit", "Fit the penalized quantile model to a panel CSV");
    sub->add_option("--input", input, "Panel CSV (i,t,y,x1..xp)")->required();
    sub->add_option("--u", u, "Quantile level(s), comma separated")->required()->delimiter(',');
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    alm.add_to(*sub);
    add_config_option(*sub);
    sub->callback([this, sub] { selected = sub->parsed(); });
  }

  int run(std::ostream& os) const {
    const LoadedPanel panel = load_panel(input);
    const PanelData& data = panel.data;
    const auto root = ensure_dir(out);
    for (double level : u) {
      const FitConfig cfg = alm.config(data, level);
      const FitResult fit = alm_fit(data, cfg);
      const auto dir = u.size() == 1 ? root : ensure_dir((root / ("u" + level_tag(level))).string());
      save_indexed((dir / "beta.csv").string(), "j", fit.beta);
      save_matrix((dir / "L.csv").string(), fit.L, panel.units, panel.times);
      save_indexed((dir / "singulars.csv").string(), "k", fit.singulars);

      json m;
      m["command"] = "fit";
      m["input"] = input;
      m["out"] = dir.string();
      m["u"] = level;
      m["N"] = data.N();
      m["T"] = data.T();
      m["p"] = data.p();
      m["covariates"] = panel.covariate_names;
      m["settings"] = alm.describe(cfg, fit);
      m["result"] = fit_summary(data, fit);
      m["beta"] = vector_values(fit.beta);
      write_json(dir / "manifest.json", m);

      os << "u=" << level_tag(level) << " iterations=" << fit.iterations
         << " converged=" << (fit.converged ? "true" : "false") << " beta=";
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j) os << (j ? "," : "") << format_double(fit.beta(j));
      os << '\n';
      if (!fit.converged) os << "warning: iteration cap reached at u=" << level_tag(level) << '\n';
    }
    return kSuccess;
  }

  bool selected = false;
};

struct RankCommand {
  std::string input;
  std::vector<double> u;
  std::optional<double> threshold;
  std::optional<std::string> out;
  AlmFlags alm;

  void add_to(CLI::App& parent) {
    CLI::App* sub = parent.add_subcommand("rank", "Estimate the number of interactive effects");
    sub->add_option("--input", input, "Panel CSV (i,t,y,x1..xp)")->required();
    sub->add_option("--u", u, "Quantile level(s), comma separated")->required()->delimiter(',');
    sub->add_option("--threshold", threshold, "Singular-value cutoff (default (NT max(N,T))^(1/4))");
    sub->add_option("--out", out, "Directory for a run manifest");
    alm.add_to(*sub);
    add_config_option(*sub);
    sub->callback([this, sub] { selected = sub->parsed(); });
  }

  int run(std::ostream& os) const {
    const LoadedPanel panel = load_panel(input);
    const PanelData& data = panel.data;
    const double cut = threshold ? *threshold : default_rank_threshold(data.N(), data.T());
    json runs = json::array();
    for (double level : u) {
      const FitConfig cfg = alm.config(data, level);
      const FitResult fit = alm_fit(data, cfg);
      const RankEstimate est = estimate_rank(fit.singulars, cut);
      os << "u=" << level_tag(level) << '\n';
      os << "r_hat=" << est.r_hat << '\n';
      os << "threshold=" << format_double(est.threshold) << '\n';
      os << "singulars=";
      for (Eigen::Index k = 0; k < est.singulars.size(); ++k) os << (k ? "," : "") << format_double(est.singulars(k));
      os << '\n';

      json r;
      r["u"] = level;
      r["r_hat"] = est.r_hat;
      r["threshold"] = est.threshold;
      r["threshold_source"] = threshold ? "flag" : "default";
      r["settings"] = alm.describe(cfg, fit);
      r["result"] = fit_summary(data, fit);
      r["singulars"] = vector_values(est.singulars);
      runs.push_back(r);
    }
    if (out) {
      json m;
      m["command"] = "rank";
      m["input"] = input;
      m["N"] = data.N();
      m["T"] = data.T();
      m["p"] = data.p();
      m["runs"] = runs;
      write_json(ensure_dir(*out) / "manifest.json", m);
    }
    return kSuccess;
  }

  bool selected = false;
};

struct BenchCommand {
  std::vector<double> phi{0.2};
  std::vector<double> u{0.5};
  std::vector<std::string> sizes{"200x200"};
  std::vector<std::string> errors{"normal"};
  std::vector<std::string> estimators{"nu", "po"};
  int reps = 20;
  std::uint64_t seed = 0;
  std::string out = "results.csv";
  std::optional<int> rank;
  bool true_rank_from_truth = false;
  bool pooled_implied = false;
  int workers = 0;
  double tol = Tolerances::alm_termination;
  int max_iters = Tolerances::alm_max_iters;

  void add_to(CLI::App& parent) {
    CLI::App* sub = parent.add_subcommand("bench", "Run the Monte Carlo grid and write a results table");
    sub->add_option("--phi", phi, "Covariate/factor correlation levels")->delimiter(',')->capture_default_str();
    sub->add_option("--u", u, "Quantile levels")->delimiter(',')->capture_default_str();
    sub->add_option("--sizes", sizes, "Panel sizes NxT")->delimiter(',')->capture_default_str();
    sub->add_option("--errors", errors, "Error laws: normal, t2")->delimiter(',')->capture_default_str();
    sub->add_option("--estimators", estimators, "Estimators: nu, it, po")->delimiter(',')->capture_default_str();
    sub->add_option("--reps", reps, "Replications per cell")->capture_default_str();
    sub->add_option("--seed", seed, "Master seed")->capture_default_str();
    sub->add_option("--out", out, "Results CSV path")->capture_default_str();
    sub->add_option("--rank", rank, "Factor count used by the iterative estimator");
    sub->add_flag("--true-rank-from-truth", true_rank_from_truth,
                  "Give the iterative estimator the true rank at each level");
    sub->add_flag("--pooled-implied-mse-q", pooled_implied, "Report pooled MSE_q with L_hat = 0");
    sub->add_option("--workers", workers, "Worker threads (0: NNQR_WORKERS, then hardware)")->capture_default_str();
    sub->add_option("--tol", tol, "ALM termination tolerance")->capture_default_str();
    sub->add_option("--max-iters", max_iters, "ALM iteration cap")->capture_default_str();
    add_config_option(*sub);
    sub->callback([this, sub] { selected = sub->parsed(); });
  }

  std::vector<ExperimentCell> grid() const {
    if (phi.empty() || u.empty() || sizes.empty() || errors.empty() || estimators.empty()) {
      detail::invalid("experiment grid is empty");
    }
    if (reps < 1) detail::invalid("--reps must be >= 1");
    std::vector<Estimator> ests;
    for (const auto& e : estimators) ests.push_back(parse_estimator(e));
    const bool wants_it = std::find(ests.begin(), ests.end(), Estimator::It) != ests.end();
    if (wants_it && !rank && !true_rank_from_truth) {
      detail::invalid("--estimators it requires --rank INT or --true-rank-from-truth");
    }
    if (rank && true_rank_from_truth) detail::invalid("--rank and --true-rank-from-truth are exclusive");
    if (rank && *rank < 0) detail::invalid("--rank must be >= 0");

    std::vector<ExperimentCell> cells;
    for (const auto& size : sizes) {
      const auto [n, t] = parse_size(size);
      for (const auto& law : errors) {
        const ErrorLaw el = parse_error_law(law);
        for (double ph : phi) {
          for (double level : u) {
            ExperimentCell c;
            c.N = n;
            c.T = t;
            c.phi = ph;
            c.error_law = el;
            c.u = level;
            c.estimators = ests;
            c.it_rank = rank;
            cells.push_back(c);
          }
        }
      }
    }
    return cells;
  }

  static void write_results(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "estimator,u,N,T,phi,error_law,reps,bias2_beta_x100,var_beta_x1e4,mse_L,mse_q,mean_seconds\n";
    for (const auto& r : rows) {
      os << to_string(r.estimator) << ',' << format_double(r.u) << ',' << r.N << ',' << r.T << ','
         << format_double(r.phi) << ',' << to_string(r.error_law) << ',' << r.replications << ',';
      if (r.replications > 0) {
        os << format_double(100.0 * r.bias2_beta) << ',' << format_double(1e4 * r.var_beta) << ',';
      } else {
        os << ",,";
      }
      os << (r.mse_L ? format_double(*r.mse_L) : "") << ',' << (r.mse_q ? format_double(*r.mse_q) : "") << ','
         << (r.replications > 0 ? format_double(r.mean_seconds) : "") << '\n';
    }
  }

  int run(std::ostream& os) const {
    const std::vector<ExperimentCell> cells = grid();
    ExperimentOptions opts;
    opts.reps = reps;
    opts.master_seed = seed;
    opts.workers = resolve_workers(workers);
    opts.pooled_implied_mse_q = pooled_implied;
    opts.alm_tol = tol;
    opts.alm_max_iters = max_iters;
    const ExperimentResult res = run_experiment(cells, opts);

    const std::filesystem::path path(out);
    if (path.has_parent_path()) ensure_dir(path.parent_path().string());
    {
      std::ofstream f(path);
      if (!f) throw DataError("cannot open '" + out + "' for writing");
      write_results(f, res.rows);
    }
    write_results(os, res.rows);

    json m;
    m["command"] = "bench";
    m["out"] = out;
    m["phi"] = phi;
    m["u"] = u;
    m["sizes"] = sizes;
    m["errors"] = errors;
    m["estimators"] = estimators;
    m["reps"] = reps;
    m["seed"] = seed;
    m["workers"] = opts.workers;
    m["rank"] = rank ? json(*rank) : json(nullptr);
    m["true_rank_from_truth"] = true_rank_from_truth;
    m["pooled_implied_mse_q"] = pooled_implied;
    m["alm"] = {{"tol", tol}, {"max_iters", max_iters}, {"lambda", "default"}, {"mu", "default"}};
    m["iterative"] = {{"tol", opts.iterative.tol}, {"max_sweeps", opts.iterative.max_sweeps}};
    json rows = json::array();
    for (const auto& r : res.rows) {
      rows.push_back({{"estimator", to_string(r.estimator)},
                      {"u", r.u},
                      {"N", r.N},
                      {"T", r.T},
                      {"phi", r.phi},
                      {"error_law", to_string(r.error_law)},
                      {"replications", r.replications},
                      {"nonconverged", r.nonconverged},
                      {"failed", r.failed},
                      {"mse_q_implied", r.mse_q_implied}});
    }
    m["rows"] = rows;
    write_json(path.string() + ".manifest.json", m);
    return kSuccess;
  }

  bool selected = false;
};

struct SimulateCommand {
  std::string size = "200x200";
  double phi = 0.2;
  std::string errors = "normal";
  std::uint64_t seed = 0;
  std::vector<double> u{0.2, 0.5, 0.8};
  std::string out = ".";

  void add_to(CLI::App& parent) {
    CLI::App* sub = parent.add_subcommand("simulate", "Write one simulated panel and its truth to CSV");
    sub->add_option("--size", size, "Panel size NxT")->capture_default_str();
    sub->add_option("--phi", phi, "Covariate/factor correlation")->capture_default_str();
    sub->add_option("--errors", errors, "Error law: normal, t2")->capture_default_str();
    sub->add_option("--seed", seed, "Seed")->capture_default_str();
    sub->add_option("--u", u, "Quantile levels to store truth for")->delimiter(',')->capture_default_str();
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    add_config_option(*sub);
    sub->callback([this, sub] { selected = sub->parsed(); });
  }

  int run(std::ostream& os) const {
    const auto [n, t] = parse_size(size);
    SimulationSpec spec;
    spec.N = n;
    spec.T = t;
    spec.phi = phi;
    spec.error_law = parse_error_law(errors);
    spec.seed = seed;
    spec.quantile_levels = u;
    const SimulationTruth sim = simulate(spec);

    const auto dir = ensure_dir(out);
    save_panel((dir / "panel.csv").string(), sim.data);
    {
      std::ofstream f(dir / "truth.csv");
      if (!f) throw DataError("cannot write truth.csv");
      f << "u,r_true";
      for (int j = 1; j <= kSimCovariates; ++j) f << ",beta" << j;
      f << '\n';
      for (const auto& q : sim.truths) {
        f << format_double(q.u) << ',' << q.r_true;
        for (Eigen::Index j = 0; j < q.beta.size(); ++j) f << ',' << format_double(q.beta(j));
        f << '\n';
      }
    }
    const auto units = default_ids(n);
    const auto times = default_ids(t);
    for (const auto& q : sim.truths) {
      save_matrix((dir / ("L0_u" + level_tag(q.u) + ".csv")).string(), q.L0, units, times);
    }

    json m;
    m["command"] = "simulate";
    m["out"] = dir.string();
    m["N"] = n;
    m["T"] = t;
    m["phi"] = phi;
    m["errors"] = to_string(spec.error_law);
    m["seed"] = seed;
    m["u"] = u;
    write_json(dir / "manifest.json", m);
    os << "wrote " << (dir / "panel.csv").string() << '\n';
    return kSuccess;
  }

  bool selected = false;
};

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Penalized quantile regression for panels with interactive effects"};
  app.require_subcommand(1);
  FitCommand fit;
  RankCommand rank;
  BenchCommand bench;
  SimulateCommand sim;
  fit.add_to(app);
  rank.add_to(app);
  bench.add_to(app);
  sim.add_to(app);

  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::vector<const char*> expanded{argv[0]};
  for (const auto& a : args) expanded.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(expanded.size()), expanded.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (fit.selected) return fit.run(out);
    if (rank.selected) return rank.run(out);
    if (bench.selected) return bench.run(out);
    if (sim.selected) return sim.run(out);
    err << "no subcommand given\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace nnqr::cli
