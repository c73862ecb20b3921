#include "robinv/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace robinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("robinv_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  std::string cmd = std::string(ROBINV_CLI) + " " + args + " > /dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Problem small_problem() {
  const int n = 6;
  Problem p;
  p.model.A = MatrixXd::Identity(n, n);
  p.model.B = MatrixXd::Identity(3, n);
  p.model.sigma = 0.01;
  MatrixXd Aa = MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) Aa(i + 1, i) = 0.1;
  p.model.A_alpha = {Aa};
  p.X = EllitopeSpec::unit_ball(n);
  p.norm = ErrorNorm::euclidean(3);
  p.uncertainty = StructuredUncertainty{{Aa}, {}};
  return p;
}

fs::path write_problem(const fs::path& dir) {
  fs::path f = dir / "problem.json";
  write_json_file(f.string(), to_json(small_problem()));
  return f;
}

}  // namespace

TEST(Cli, CertifyZeroContrastIsBiasOnly) {
  auto d = scratch("certify");
  auto pf = write_problem(d);
  write_json_file((d / "h.json").string(), to_json_matrix(MatrixXd::Zero(6, 3)));
  ASSERT_EQ(run("certify --model " + pf.string() + " --H " + (d / "h.json").string() + " --eps 0.05 --out-dir " + d.string()), 0);
  json s = read_json_file((d / "certify.json").string());
  EXPECT_EQ(s["certificate"]["noise"].get<double>(), 0.0);
  EXPECT_NEAR(s["certificate"]["bound"].get<double>(), 1.0, 1e-6);
  EXPECT_FALSE(fs::exists(d / "certify_errors.csv"));
}

TEST(Cli, SynthLinearSummaryIsReproducibleFromLibrary) {
  auto d = scratch("synth");
  auto pf = write_problem(d);
  ASSERT_EQ(run("synth-linear --model " + pf.string() + " --n-mc 60 --seed 5 --out-dir " + d.string()), 0);
  json s = read_json_file((d / "synth-linear.json").string());
  Problem p = small_problem();
  MatrixXd H = matrix_from_json(s["H"], "H");
  double bound = risk_bound_linear(H, p.model, p.X, p.norm, 0.05).bound;
  EXPECT_NEAR(s["certificate"]["bound"].get<double>(), bound, 1e-6 * std::max(1.0, bound));
  McOptions o;
  o.n_draws = 60;
  o.seed = s["seed"].get<std::uint64_t>();
  auto mc = monte_carlo_risk([&](const std::vector<VectorXd>& obs) -> VectorXd { return H.transpose() * obs[0]; }, p.model,
                             p.norm, boundary_signals(p.X, 3, o.seed), NoiseLaw::gaussian(), NoiseLaw::gaussian(), o);
  ASSERT_EQ(s["monte_carlo"]["quantiles"].size(), 3u);
  for (size_t k = 0; k < 3; ++k) EXPECT_EQ(s["monte_carlo"]["quantiles"][k].get<double>(), mc.quantiles[k]);
  std::ostringstream os;
  write_error_csv(os, mc);
  EXPECT_EQ(slurp(d / "synth-linear_errors.csv"), os.str());
}

TEST(Cli, RerunWithSameSeedGivesIdenticalCsv) {
  auto d = scratch("rerun");
  auto pf = write_problem(d);
  write_json_file((d / "h.json").string(), to_json_matrix(MatrixXd::Identity(6, 3)));
  std::string base = "risk-eval --model " + pf.string() + " --H " + (d / "h.json").string() + " --n-mc 80 ";
  ASSERT_EQ(run(base + "--seed 7 --out-dir " + (d / "a").string()), 0);
  ASSERT_EQ(run(base + "--seed 7 --out-dir " + (d / "b").string()), 0);
  ASSERT_EQ(run(base + "--seed 8 --out-dir " + (d / "c").string()), 0);
  std::string a = slurp(d / "a" / "risk-eval_errors.csv");
  EXPECT_EQ(a.substr(0, 17), "signal,draw,error");
  EXPECT_EQ(a, slurp(d / "b" / "risk-eval_errors.csv"));
  EXPECT_NE(a, slurp(d / "c" / "risk-eval_errors.csv"));
}

TEST(Cli, PolyAndUbbSubcommands) {
  auto d = scratch("poly");
  auto pf = write_problem(d);
  ASSERT_EQ(run("synth-poly-ball --model " + pf.string() + " --n-mc 0 --trials 5 --out-dir " + d.string()), 0);
  json s = read_json_file((d / "synth-poly-ball.json").string());
  ASSERT_EQ(run("certify --kind poly --model " + pf.string() + " --H " + (d / "synth-poly-ball.json").string() + " --out-dir " +
                d.string()),
            0);
  json c = read_json_file((d / "certify.json").string());
  EXPECT_NEAR(c["certificate"]["bound"].get<double>(), s["certificate"]["bound"].get<double>(), 1e-6);
  ASSERT_EQ(run("synth-poly-ubb --model " + pf.string() + " --n-mc 0 --trials 5 --out-dir " + d.string()), 0);
  ASSERT_EQ(run("synth-linear-ubb --model " + pf.string() + " --n-mc 0 --out-dir " + d.string()), 0);
  json u = read_json_file((d / "synth-linear-ubb.json").string());
  EXPECT_GT(u["certificate"]["snb"].get<double>(), 0.0);
  ASSERT_EQ(run("robust-norm --model " + pf.string() + " --out-dir " + d.string()), 0);
  json r = read_json_file((d / "robust-norm.json").string());
  EXPECT_GE(r["bound"].get<double>(), r["oracle_lower"].get<double>() * (1 - 1e-6));
}

TEST(Cli, ExperimentDeconvSmallIsDeterministic) {
  auto d = scratch("experiment");
  json cfg = to_json(ExperimentConfig{});
  cfg["deconv"]["n"] = 8;
  cfg["deconv"]["m"] = 8;
  cfg["deconv"]["nu"] = 4;
  cfg["n_mc"] = 40;
  write_json_file((d / "cfg.json").string(), cfg);
  std::string base = "experiment deconv --config " + (d / "cfg.json").string() + " --gamma 0.01,1 --seed 3 --out-dir ";
  ASSERT_EQ(run(base + (d / "a").string()), 0);
  ASSERT_EQ(run(base + (d / "b").string()), 0);
  std::string table = slurp(d / "a" / "experiment_deconv.csv");
  EXPECT_EQ(table, slurp(d / "b" / "experiment_deconv.csv"));
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
  for (const char* f : {"deconv_g0_linear.csv", "deconv_g1_nominal.csv", "deconv_g1_poly.csv"})
    EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  json s = read_json_file((d / "a" / "experiment_deconv.json").string());
  EXPECT_EQ(s["config"]["seed"].get<int>(), 3);
  EXPECT_EQ(s["config"]["n_mc"].get<int>(), 40);
  EXPECT_EQ(s["results"].size(), 2u);
}

TEST(Cli, ExitCodes) {
  auto d = scratch("exit");
  auto pf = write_problem(d);
  const std::string out = " --out-dir " + d.string();
  EXPECT_EQ(run("synth-linear --model " + (d / "missing.json").string() + out), 3);
  EXPECT_EQ(run("synth-linear --model " + pf.string() + " --eps 2" + out), 3);
  EXPECT_EQ(run("no-such-command"), 3);
  EXPECT_EQ(run("certify --model " + pf.string() + out), 3);
  {
    std::ofstream bad(d / "bad.json");
    bad << "{\"model\": [1,";
  }
  EXPECT_EQ(run("synth-linear --model " + (d / "bad.json").string() + out), 3);
  write_json_file((d / "wrong.json").string(), to_json_matrix(MatrixXd::Zero(4, 3)));
  EXPECT_EQ(run("certify --model " + pf.string() + " --H " + (d / "wrong.json").string() + out), 3);
  EXPECT_EQ(run("synth-linear --model " + pf.string() + " --n-mc 0 --tol-gap 1e-300 --tol-feas 1e-300" + out), 2);
  EXPECT_EQ(run("synth-linear --help"), 0);
}
