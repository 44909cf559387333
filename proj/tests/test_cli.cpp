#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "nnqr/commands.hpp"
#include "test_support.hpp"

using namespace nnqr;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nnqr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cli::json manifest(const std::string& path) { return cli::json::parse(slurp(path)); }

std::string simulated_panel(const std::string& name, const std::string& size = "40x30") {
  const std::string dir = nnqr::testing::scratch_dir(name);
  const CliRun r = run_cli({"simulate", "--size", size, "--seed", "3", "--out", dir});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Cli, SimulateWritesPanelTruthAndManifest) {
  const std::string dir = simulated_panel("cli_sim");
  const LoadedPanel p = load_panel(dir + "/panel.csv");
  EXPECT_EQ(p.data.N(), 40);
  EXPECT_EQ(p.data.T(), 30);
  const SimulationTruth sim = simulate({40, 30, 0.2, ErrorLaw::standard_normal, 3, {0.2, 0.5, 0.8}});
  EXPECT_EQ(p.data.Y, sim.data.Y);
  EXPECT_EQ(load_matrix(dir + "/L0_u0.8.csv"), sim.at(0.8).L0);
  EXPECT_NE(slurp(dir + "/truth.csv").find("u,r_true,beta1,beta2,beta3"), std::string::npos);
  EXPECT_EQ(manifest(dir + "/manifest.json")["seed"], 3);
}

TEST(Cli, FitWritesArtifacts) {
  const std::string dir = simulated_panel("cli_fit");
  const CliRun r = run_cli({"fit", "--input", dir + "/panel.csv", "--u", "0.5", "--out", dir + "/fit"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = manifest(dir + "/fit/manifest.json");
  EXPECT_TRUE(m["result"]["converged"].get<bool>());
  EXPECT_LE(m["result"]["final_constraint_residual"].get<double>(), m["result"]["feasibility_bound"].get<double>());
  EXPECT_EQ(m["settings"]["lambda_source"], "default");
  EXPECT_EQ(m["settings"]["max_iters"], Tolerances::alm_max_iters);
  EXPECT_EQ(load_matrix(dir + "/fit/L.csv").rows(), 40);
  EXPECT_EQ(slurp(dir + "/fit/beta.csv").substr(0, 8), "j,value\n");
}

TEST(Cli, HugeLambdaWithoutCovariatesGivesZeroL) {
  const std::string dir = nnqr::testing::scratch_dir("cli_lambda");
  {
    std::ofstream f(dir + "/panel.csv");
    f << "i,t,y\n";
    for (int i = 1; i <= 6; ++i)
      for (int t = 1; t <= 5; ++t) f << i << ',' << t << ',' << (i * 0.7 - t * 0.3 + (i * t) % 3) << '\n';
  }
  const CliRun r = run_cli({"fit", "--input", dir + "/panel.csv", "--u", "0.5", "--lambda", "1e6", "--out", dir});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_matrix(dir + "/L.csv").cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(manifest(dir + "/manifest.json")["settings"]["lambda"], 1e6);
}

TEST(Cli, MultipleLevelsRunIndependently) {
  const std::string dir = simulated_panel("cli_levels", "20x15");
  const CliRun r = run_cli({"fit", "--input", dir + "/panel.csv", "--u", "0.2,0.8", "--out", dir + "/fit"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(manifest(dir + "/fit/u0.2/manifest.json")["u"], 0.2);
  EXPECT_EQ(manifest(dir + "/fit/u0.8/manifest.json")["u"], 0.8);
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
  const std::string dir = simulated_panel("cli_config", "20x15");
  {
    std::ofstream f(dir + "/run.cfg");
    f << "input=" << dir << "/panel.csv\nu=0.3\nmax-iters=3\nout=" << dir << "/cfg\n";
  }
  CliRun r = run_cli({"fit", "--config", dir + "/run.cfg"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = manifest(dir + "/cfg/manifest.json");
  EXPECT_EQ(m["u"], 0.3);
  EXPECT_EQ(m["settings"]["max_iters"], 3);
  EXPECT_TRUE(m["result"].contains("warning"));

  r = run_cli({"fit", "--config", dir + "/run.cfg", "--max-iters", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  m = manifest(dir + "/cfg/manifest.json");
  EXPECT_EQ(m["settings"]["max_iters"], 7);
}

TEST(Cli, RankPrintsEstimate) {
  const std::string dir = simulated_panel("cli_rank", "20x15");
  const CliRun r = run_cli({"rank", "--input", dir + "/panel.csv", "--u", "0.5", "--threshold", "1e9"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("r_hat=0\n"), std::string::npos);
  EXPECT_NE(r.out.find("threshold=1000000000\n"), std::string::npos);
  EXPECT_NE(r.out.find("singulars="), std::string::npos);
}

TEST(Cli, BenchWritesResultsTable) {
  const std::string dir = nnqr::testing::scratch_dir("cli_bench");
  const std::string out = dir + "/results.csv";
  const std::vector<std::string> args{"bench", "--sizes", "12x10", "--u", "0.5", "--reps", "2",
                                      "--estimators", "nu,po", "--seed", "9", "--out", out};
  const CliRun r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(out);
  std::istringstream lines(csv);
  std::string header, nu, po, extra;
  std::getline(lines, header);
  std::getline(lines, nu);
  std::getline(lines, po);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_EQ(header, "estimator,u,N,T,phi,error_law,reps,bias2_beta_x100,var_beta_x1e4,mse_L,mse_q,mean_seconds");
  EXPECT_EQ(nu.substr(0, 3), "Nu,");
  EXPECT_EQ(po.substr(0, 3), "Po,");
  EXPECT_EQ(split_csv_line(po).size(), 12u);
  EXPECT_EQ(split_csv_line(po)[9], "");

  const auto m = manifest(out + ".manifest.json");
  EXPECT_EQ(m["reps"], 2);
  EXPECT_EQ(m["seed"], 9);

  // Same seed, same numbers (timings aside).
  const CliRun again = run_cli(args);
  ASSERT_EQ(again.code, 0);
  const auto a = split_csv_line(nu);
  std::istringstream l2(slurp(out));
  std::getline(l2, header);
  std::getline(l2, header);
  const auto b = split_csv_line(header);
  for (std::size_t k = 0; k + 1 < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--input", "x.csv"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--estimators", "it", "--reps", "1", "--sizes", "5x5"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--sizes", "200by200"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--errors", "cauchy", "--sizes", "5x5"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, DataErrors) {
  const std::string dir = nnqr::testing::scratch_dir("cli_data");
  EXPECT_EQ(run_cli({"fit", "--input", dir + "/missing.csv", "--u", "0.5"}).code, 3);
  {
    std::ofstream f(dir + "/unbalanced.csv");
    f << "i,t,y\n1,1,1\n1,2,2\n2,1,3\n";
  }
  const CliRun r = run_cli({"rank", "--input", dir + "/unbalanced.csv", "--u", "0.5"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("unbalanced"), std::string::npos);
}

TEST(Cli, BenchIterativeNeedsRankSource) {
  const std::string dir = nnqr::testing::scratch_dir("cli_it");
  const CliRun r = run_cli({"bench", "--sizes", "10x8", "--reps", "1", "--estimators", "it", "--true-rank-from-truth",
                         "--out", dir + "/r.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir + "/r.csv").find("It,"), slurp(dir + "/r.csv").find('\n') + 1);
}
