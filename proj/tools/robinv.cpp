#include "robinv/io.hpp"
#include "robinv/stochastics.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace robinv;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string model_file, config_file, H_file, kind = "linear";
  std::vector<double> gammas;
  double eps = 0.05;
  int n_mc = 500;
  std::uint64_t seed = 1;
  int trials = 20;
  int signals = 3;
  std::string out_dir = ".";
  double tol_gap = 1e-8, tol_feas = 1e-8;
  std::vector<std::string> estimators;
  const CLI::App* given = nullptr;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

conic::SolverOptions solver_options(const Common& c) {
  conic::SolverOptions o;
  o.tol_gap = c.tol_gap;
  o.tol_feas = c.tol_feas;
  return o;
}

json solver_json(const Common& c) { return {{"tol_gap", c.tol_gap}, {"tol_feas", c.tol_feas}}; }

// Problem from --model, or the built-in deconvolution scenario at the first --gamma.
// With `ball`, an ellipsoidal X is mapped to the unit ball and the model folded accordingly.
Problem load_problem(const Common& c, bool ball) {
  if (!c.model_file.empty()) {
    Problem p = problem_from_json(read_json_file(c.model_file));
    if (ball && p.X.K() == 1) {
      DeconvScenario b = ball_form({p.model, p.X, p.norm, VectorXd()});
      p.model = b.model;
      p.X = b.X;
    }
    return p;
  }
  DeconvConfig d;
  double gamma = c.gammas.empty() ? 0.01 : c.gammas.front();
  DeconvScenario s = deconv_scenario(d, gamma);
  if (ball) s = ball_form(s);
  return {s.model, s.X, s.norm, std::nullopt, std::nullopt};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + p.string());
  out << s;
}

// Runs the Monte Carlo check when n_mc > 0 and records quantiles in the summary.
void evaluate(const Common& c, const std::string& name, const Estimator& est, const Problem& p, json& summary) {
  if (c.n_mc <= 0) return;
  McOptions o;
  o.n_draws = c.n_mc;
  o.eps = c.eps;
  o.seed = c.seed;
  auto signals = boundary_signals(p.X, c.signals, c.seed);
  auto mc = monte_carlo_risk(est, p.model, p.norm, signals, noise_law_of(p.model), perturbation_law_of(p.model), o);
  std::ostringstream os;
  write_error_csv(os, mc);
  fs::path csv = fs::path(c.out_dir) / (name + "_errors.csv");
  write_text(csv, os.str());
  json q = json::array(), med = json::array();
  for (size_t s = 0; s < mc.quantiles.size(); ++s) {
    q.push_back(mc.quantiles[s]);
    med.push_back(mc.median(s));
  }
  summary["monte_carlo"] = {{"draws", c.n_mc}, {"signals", c.signals}, {"seed", c.seed}, {"quantile_level", 1.0 - c.eps},
                            {"quantiles", q},  {"medians", med},       {"csv", csv.filename().string()}};
}

void finish(const Common& c, const std::string& name, const json& summary) {
  write_json_file((fs::path(c.out_dir) / (name + ".json")).string(), summary);
  std::cout << summary.dump(2) << "\n";
}

Estimator linear_estimator(const MatrixXd& H) {
  return [H](const std::vector<VectorXd>& obs) -> VectorXd { return H.transpose() * obs[0]; };
}

Estimator poly_estimator(const ContrastMatrix& H, const Problem& p) {
  return [H, &p](const std::vector<VectorXd>& obs) -> VectorXd { return recover_poly(H, obs[0], p.model, p.X).w; };
}

json header(const Common& c, const std::string& cmd) {
  return {{"command", cmd}, {"eps", c.eps}, {"seed", c.seed}, {"model", c.model_file.empty() ? "deconv" : c.model_file},
          {"solver", solver_json(c)}};
}

int synth_linear(const Common& c) {
  Problem p = load_problem(c, false);
  auto r = synthesize_linear(p.model, p.X, p.norm, c.eps, solver_options(c));
  json s = header(c, "synth-linear");
  s["certificate"] = to_json(r.cert);
  s["synthesis_objective"] = r.synthesis_objective;
  s["H"] = to_json_matrix(r.H);
  evaluate(c, "synth-linear", linear_estimator(r.H), p, s);
  finish(c, "synth-linear", s);
  return 0;
}

int synth_linear_ubb(const Common& c) {
  Problem p = load_problem(c, false);
  StructuredUncertainty u = p.uncertainty.value_or(StructuredUncertainty{});
  auto r = synthesize_linear_ubb(p.model, u, p.X, p.norm, c.eps, solver_options(c));
  json s = header(c, "synth-linear-ubb");
  s["certificate"] = to_json(r.cert);
  s["objective"] = r.objective;
  s["iterations"] = r.iterations;
  s["H"] = to_json_matrix(r.H);
  evaluate(c, "synth-linear-ubb", linear_estimator(r.H), p, s);
  finish(c, "synth-linear-ubb", s);
  return 0;
}

int synth_poly(const Common& c, bool ubb) {
  const std::string name = ubb ? "synth-poly-ubb" : "synth-poly-ball";
  Problem p = load_problem(c, true);
  PolyEstimate e = ubb ? synthesize_poly_ubb_ball(p.model, p.norm, c.eps, c.trials, c.seed, solver_options(c))
                       : synthesize_poly(p.model, p.X, p.norm, c.eps, c.trials, c.seed, {0.0, 0.0, solver_options(c)});
  json s = header(c, name);
  s["trials"] = c.trials;
  s["synthesis"] = to_json(e.synthesis);
  s["certificate"] = to_json(e.cert);
  s["H"] = to_json(e.H);
  evaluate(c, name, poly_estimator(e.H, p), p, s);
  finish(c, name, s);
  return 0;
}

// Contrast from a bare matrix, a summary file with an "H" entry, or a contrast object.
json load_contrast_json(const std::string& path) {
  require(!path.empty(), "--H is required");
  json j = read_json_file(path);
  if (j.is_object() && j.contains("H")) return j["H"];
  return j;
}

MatrixXd as_matrix(const json& j) { return j.is_array() ? matrix_from_json(j, "H") : contrast_from_json(j).full(); }

ContrastMatrix as_contrast(const json& j, double eps) {
  ContrastMatrix H = contrast_from_json(j);
  if (H.delta <= 0.0) H.delta = eps / std::max(1, H.columns());
  return H;
}

int certify(const Common& c, bool run_mc) {
  const std::string name = run_mc ? "risk-eval" : "certify";
  const bool poly = c.kind == "poly" || c.kind == "poly-ubb";
  require(c.kind == "linear" || c.kind == "linear-ubb" || poly, "--kind must be linear, linear-ubb, poly or poly-ubb");
  Problem p = load_problem(c, poly);
  json hj = load_contrast_json(c.H_file);
  json s = header(c, name);
  s["kind"] = c.kind;
  Estimator est;
  if (c.kind == "linear") {
    MatrixXd H = as_matrix(hj);
    s["certificate"] = to_json(risk_bound_linear(H, p.model, p.X, p.norm, c.eps, solver_options(c)));
    est = linear_estimator(H);
  } else if (c.kind == "linear-ubb") {
    MatrixXd H = as_matrix(hj);
    StructuredUncertainty u = p.uncertainty.value_or(StructuredUncertainty{});
    s["certificate"] = to_json(risk_bound_linear_ubb(H, p.model, u, p.X, p.norm, c.eps, solver_options(c)));
    est = linear_estimator(H);
  } else {
    ContrastMatrix H = as_contrast(hj, c.eps);
    if (c.kind == "poly") {
      s["certificate"] = to_json(risk_bound_poly(H, p.model, p.X, p.norm, solver_options(c)));
    } else {
      SpectratopeSpec U = p.U.value_or(SpectratopeSpec::unit_ball(std::max(1, p.model.q())));
      s["certificate"] = to_json(risk_bound_poly_ubb(H, p.model, U, to_spectratope(p.X), p.norm, c.eps, solver_options(c)));
    }
    est = poly_estimator(H, p);
  }
  if (run_mc) evaluate(c, name, est, p, s);
  finish(c, name, s);
  return 0;
}

int robust_norm(const Common& c) {
  require(!c.model_file.empty(), "robust-norm needs --model with an \"uncertainty\" entry");
  json j = read_json_file(c.model_file);
  require(j.contains("uncertainty"), "robust-norm: model file has no \"uncertainty\" entry");
  StructuredUncertainty u = uncertainty_from_json(j["uncertainty"]);
  require(!u.empty(), "robust-norm: uncertainty has no blocks");
  EllitopeSpec X = j.contains("X") ? ellitope_from_json(j["X"]) : EllitopeSpec::unit_ball(u.n());
  EllitopeSpec Bstar = j.contains("Bstar") ? ellitope_from_json(j["Bstar"]) : EllitopeSpec::unit_ball(u.m());
  require(X.n() == u.n() && Bstar.n() == u.m(), "robust-norm: set dimensions differ from the uncertainty");
  auto r = robust_norm_bound(u, X, Bstar, solver_options(c));
  double lower = robust_norm_oracle(u, X, Bstar, c.trials, c.seed);
  json s = header(c, "robust-norm");
  s["bound"] = r.value;
  s["factor"] = r.factor;
  s["iterations"] = r.iterations;
  s["oracle_lower"] = lower;
  s["oracle_starts"] = c.trials;
  finish(c, "robust-norm", s);
  return 0;
}

struct Row {
  double gamma;
  std::string estimator;
  double bound, nominal_model_bound, quantile, median;
};

int experiment_deconv(const Common& c) {
  ExperimentConfig cfg = c.config_file.empty() ? ExperimentConfig{} : config_from_json(read_json_file(c.config_file));
  // flags given on the command line override the config file
  auto given = [&](const char* f) { return c.config_file.empty() || c.given->count(f) > 0; };
  if (!c.gammas.empty()) cfg.deconv.gammas = c.gammas;
  if (!c.estimators.empty()) cfg.estimators = c.estimators;
  if (given("--eps")) cfg.eps = c.eps;
  if (given("--n-mc")) cfg.n_mc = c.n_mc;
  if (given("--seed")) cfg.seed = c.seed;
  if (given("--trials")) cfg.trials = c.trials;
  if (given("--signals")) cfg.signals = c.signals;
  if (given("--out-dir")) cfg.out_dir = c.out_dir;
  if (given("--tol-gap")) cfg.tol_gap = c.tol_gap;
  if (given("--tol-feas")) cfg.tol_feas = c.tol_feas;
  cfg = config_from_json(to_json(cfg));
  require(cfg.model_file.empty(), "experiment deconv uses the built-in generator; model_file must be empty");
  auto has = [&](const std::string& e) { return std::find(cfg.estimators.begin(), cfg.estimators.end(), e) != cfg.estimators.end(); };

  fs::create_directories(cfg.out_dir);
  std::vector<Row> rows;
  json per_gamma = json::array();
  for (size_t gi = 0; gi < cfg.deconv.gammas.size(); ++gi) {
    const double gamma = cfg.deconv.gammas[gi];
    DeconvScenario sc = deconv_scenario(cfg.deconv, gamma);
    MatrixXd F;
    DeconvScenario ball = ball_form(sc, &F);
    Problem p{sc.model, sc.X, sc.norm, std::nullopt, std::nullopt};
    Problem pb{ball.model, ball.X, ball.norm, std::nullopt, std::nullopt};
    // the same signals in both parametrizations: x = F u
    std::vector<VectorXd> us = boundary_signals(pb.X, cfg.signals, cfg.seed), xs;
    for (const auto& u : us) xs.push_back(F * u);
    McOptions o;
    o.n_draws = cfg.n_mc;
    o.eps = cfg.eps;
    o.seed = cfg.seed;
    const NoiseLaw noise = noise_law_of(sc.model), pert = perturbation_law_of(sc.model);
    json g = {{"gamma", gamma}, {"index", gi}};

    auto run = [&](const std::string& est_name, const Estimator& est, const Problem& prob, const std::vector<VectorXd>& sig,
                   double bound, double nominal_bound, json& entry) {
      Row row{gamma, est_name, bound, nominal_bound, std::nan(""), std::nan("")};
      if (cfg.n_mc > 0) {
        auto r = monte_carlo_risk(est, prob.model, prob.norm, sig, noise, pert, o);
        std::ostringstream os;
        write_error_csv(os, r);
        std::string file = "deconv_g" + std::to_string(gi) + "_" + est_name + ".csv";
        write_text(fs::path(cfg.out_dir) / file, os.str());
        std::vector<double> all;
        for (const auto& e : r.errors) all.insert(all.end(), e.begin(), e.end());
        row.quantile = r.max_quantile();
        row.median = empirical_quantile(all, 0.5);
        entry["quantiles"] = r.quantiles;
        entry["median"] = row.median;
        entry["csv"] = file;
      }
      rows.push_back(row);
    };

    if (has("linear")) {
      auto r = synthesize_linear(sc.model, sc.X, sc.norm, cfg.eps, cfg.solver());
      json e = {{"bound", r.cert.bound}, {"noise", r.cert.noise}, {"iterations", r.cert.iterations}};
      run("linear", linear_estimator(r.H), p, xs, r.cert.bound, std::nan(""), e);
      g["linear"] = e;
    }
    if (has("nominal")) {
      UncertaintyModel nominal = sc.model;
      nominal.A_alpha.clear();
      auto r = synthesize_linear(nominal, sc.X, sc.norm, cfg.eps, cfg.solver());
      double under = sc.model.q() > 0 ? risk_bound_linear(r.H, sc.model, sc.X, sc.norm, cfg.eps, cfg.solver()).bound : r.cert.bound;
      json e = {{"bound", under}, {"nominal_model_bound", r.cert.bound}, {"iterations", r.cert.iterations}};
      run("nominal", linear_estimator(r.H), p, xs, under, r.cert.bound, e);
      g["nominal"] = e;
    }
    if (has("poly")) {
      auto r = synthesize_poly(pb.model, pb.X, pb.norm, cfg.eps, cfg.trials, cfg.seed, {0.0, 0.0, cfg.solver()});
      json e = {{"bound", num(r.cert.bound)}, {"admissible", r.cert.admissible}, {"synthesis_bound", r.synthesis.risk_bound},
                {"columns", r.H.columns()},   {"trials", cfg.trials}};
      run("poly", poly_estimator(r.H, pb), pb, us, r.cert.bound, std::nan(""), e);
      g["poly"] = e;
    }
    per_gamma.push_back(g);
  }

  std::ostringstream table;
  table << "gamma,estimator,bound,nominal_model_bound,quantile,median\n";
  for (const auto& r : rows)
    table << fmt(r.gamma) << "," << r.estimator << "," << fmt(r.bound) << "," << fmt(r.nominal_model_bound) << "," << fmt(r.quantile)
          << "," << fmt(r.median) << "\n";
  write_text(fs::path(cfg.out_dir) / "experiment_deconv.csv", table.str());
  json s = {{"command", "experiment deconv"}, {"config", to_json(cfg)}, {"results", per_gamma}, {"table", "experiment_deconv.csv"}};
  write_json_file((fs::path(cfg.out_dir) / "experiment_deconv.json").string(), s);
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust estimation for linear inverse problems with uncertain observation matrices"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* s) {
    s->add_option("--model", c.model_file, "problem JSON {model, X, norm, uncertainty, U}; default: built-in deconvolution");
    s->add_option("--eps", c.eps, "risk level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    s->add_option("--gamma", c.gammas, "perturbation level(s) for the built-in model")->delimiter(',');
    s->add_option("--n-mc", c.n_mc, "Monte Carlo draws per signal (0 skips)")->check(CLI::NonNegativeNumber);
    s->add_option("--signals", c.signals, "boundary signals for Monte Carlo")->check(CLI::PositiveNumber);
    s->add_option("--seed", c.seed, "root seed");
    s->add_option("--out-dir", c.out_dir, "output directory");
    s->add_option("--tol-gap", c.tol_gap, "solver duality-gap tolerance")->check(CLI::PositiveNumber);
    s->add_option("--tol-feas", c.tol_feas, "solver feasibility tolerance")->check(CLI::PositiveNumber);
    s->add_option("--trials", c.trials, "extraction trials / oracle starts")->check(CLI::PositiveNumber);
  };

  auto* sl = app.add_subcommand("synth-linear", "synthesize the robust linear estimate");
  auto* su = app.add_subcommand("synth-linear-ubb", "synthesize the linear estimate under bounded structured uncertainty");
  auto* sp = app.add_subcommand("synth-poly-ball", "synthesize the polyhedral estimate (ellipsoidal signal set)");
  auto* spu = app.add_subcommand("synth-poly-ubb", "synthesize the polyhedral estimate under bounded perturbations");
  auto* ce = app.add_subcommand("certify", "risk bound for a given contrast");
  auto* re = app.add_subcommand("risk-eval", "risk bound and Monte Carlo evaluation for a given contrast");
  auto* rn = app.add_subcommand("robust-norm", "bound on the worst-case norm of a structured uncertainty");
  auto* ex = app.add_subcommand("experiment", "reproduce an experiment");
  auto* ed = ex->add_subcommand("deconv", "deconvolution experiment over a gamma grid");
  ex->require_subcommand(1);
  for (auto* s : {sl, su, sp, spu, ce, re, rn, ed}) add_common(s);
  for (auto* s : {ce, re}) {
    s->add_option("--H", c.H_file, "contrast JSON (matrix, contrast object, or synth summary)")->required();
    s->add_option("--kind", c.kind, "linear | linear-ubb | poly | poly-ubb");
  }
  c.given = ed;
  ed->add_option("--config", c.config_file, "experiment config JSON");
  ed->add_option("--estimators", c.estimators, "subset of linear,nominal,poly")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    fs::create_directories(c.out_dir);
    if (*sl) return synth_linear(c);
    if (*su) return synth_linear_ubb(c);
    if (*sp) return synth_poly(c, false);
    if (*spu) return synth_poly(c, true);
    if (*ce) return certify(c, false);
    if (*re) return certify(c, true);
    if (*rn) return robust_norm(c);
    if (*ed) return experiment_deconv(c);
  } catch (const conic::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 3;
}
