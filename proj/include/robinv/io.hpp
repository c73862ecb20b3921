#pragma once

#include "robinv/deconv.hpp"
#include "robinv/linear_estimator.hpp"
#include "robinv/polyhedral_estimator.hpp"
#include "robinv/robust_uncertainty.hpp"
#include "robinv/stochastics.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace robinv {

using json = nlohmann::json;

// Matrices are arrays of rows.
inline json to_json_matrix(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& what) {
  require(j.is_array(), what + ": expected an array of rows");
  const auto r = static_cast<int>(j.size());
  if (r == 0) return MatrixXd(0, 0);
  require(j[0].is_array(), what + ": expected an array of rows");
  const auto c = static_cast<int>(j[0].size());
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i) {
    require(j[static_cast<size_t>(i)].is_array() && static_cast<int>(j[static_cast<size_t>(i)].size()) == c, what + ": ragged rows");
    for (int k = 0; k < c; ++k) M(i, k) = j[static_cast<size_t>(i)][static_cast<size_t>(k)].get<double>();
  }
  return M;
}

inline json to_json_vector(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline VectorXd vector_from_json(const json& j, const std::string& what) {
  require(j.is_array(), what + ": expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline json matrices_to_json(const std::vector<MatrixXd>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(to_json_matrix(m));
  return a;
}

inline std::vector<MatrixXd> matrices_from_json(const json& j, const std::string& what) {
  require(j.is_array(), what + ": expected an array of matrices");
  std::vector<MatrixXd> out;
  for (size_t i = 0; i < j.size(); ++i) out.push_back(matrix_from_json(j[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

inline json to_json(const BaseSet& b) {
  json j = {{"kind", to_string(b.kind)}, {"K", b.K}};
  if (b.kind == BaseKind::pball) j["p"] = std::isinf(b.p) ? json("inf") : json(b.p);
  if (b.scale.size() > 0) j["scale"] = to_json_vector(b.scale);
  return j;
}

inline BaseSet base_from_json(const json& j) {
  BaseSet b;
  std::string kind = j.value("kind", "box");
  if (kind == "box") b.kind = BaseKind::box;
  else if (kind == "p-ball" || kind == "pball") b.kind = BaseKind::pball;
  else if (kind == "simplex") b.kind = BaseKind::simplex;
  else throw std::invalid_argument("base: unknown kind " + kind);
  b.K = j.at("K").get<int>();
  if (j.contains("p")) b.p = j["p"].is_string() ? std::numeric_limits<double>::infinity() : j["p"].get<double>();
  if (j.contains("scale")) b.scale = vector_from_json(j["scale"], "base.scale");
  b.check();
  return b;
}

inline json to_json(const EllitopeSpec& e) {
  json j = {{"T", matrices_to_json(e.T)}, {"base", to_json(e.base)}};
  if (e.P) j["P"] = to_json_matrix(*e.P);
  return j;
}

inline EllitopeSpec ellitope_from_json(const json& j) {
  EllitopeSpec e;
  e.T = matrices_from_json(j.at("T"), "ellitope.T");
  e.base = j.contains("base") ? base_from_json(j["base"]) : BaseSet::box(static_cast<int>(e.T.size()));
  if (j.contains("P")) e.P = matrix_from_json(j["P"], "ellitope.P");
  return checked(e);
}

inline json to_json(const SpectratopeSpec& s) {
  json blocks = json::array();
  for (const auto& b : s.S) blocks.push_back(matrices_to_json(b));
  json j = {{"S", blocks}, {"base", to_json(s.base)}};
  if (s.P) j["P"] = to_json_matrix(*s.P);
  return j;
}

inline SpectratopeSpec spectratope_from_json(const json& j) {
  SpectratopeSpec s;
  const json& blocks = j.at("S");
  require(blocks.is_array(), "spectratope.S: expected an array of blocks");
  for (size_t i = 0; i < blocks.size(); ++i) s.S.push_back(matrices_from_json(blocks[i], "spectratope.S"));
  s.base = j.contains("base") ? base_from_json(j["base"]) : BaseSet::box(static_cast<int>(s.S.size()));
  if (j.contains("P")) s.P = matrix_from_json(j["P"], "spectratope.P");
  Diagnostics d = validate(s);
  if (!d.valid) throw std::invalid_argument(d.summary());
  return s;
}

inline json to_json(const ErrorNorm& n) { return {{"R", matrices_to_json(n.R)}}; }

inline ErrorNorm norm_from_json(const json& j) {
  auto R = matrices_from_json(j.at("R"), "norm.R");
  require(!R.empty(), "norm.R: at least one matrix required");
  return ErrorNorm(R);
}

inline json to_json(const UncertaintyModel& m) {
  json j = {{"A", to_json_matrix(m.A)},
            {"B", to_json_matrix(m.B)},
            {"A_alpha", matrices_to_json(m.A_alpha)},
            {"sigma", m.sigma},
            {"noise_law", m.noise_law},
            {"perturbation_law", m.perturbation_law},
            {"noise_dof", m.noise_dof},
            {"perturbation_dof", m.perturbation_dof}};
  if (m.perturbation_law == "column-erasure") {
    j["erasure_gamma"] = m.erasure_gamma;
    j["erasure_rho"] = m.erasure_rho;
  }
  return j;
}

inline UncertaintyModel model_from_json(const json& j) {
  UncertaintyModel m;
  m.A = matrix_from_json(j.at("A"), "model.A");
  m.B = matrix_from_json(j.at("B"), "model.B");
  if (j.contains("A_alpha")) m.A_alpha = matrices_from_json(j["A_alpha"], "model.A_alpha");
  m.sigma = j.value("sigma", 0.0);
  m.noise_law = j.value("noise_law", std::string("gaussian"));
  m.perturbation_law = j.value("perturbation_law", std::string("gaussian"));
  m.noise_dof = j.value("noise_dof", 3.0);
  m.perturbation_dof = j.value("perturbation_dof", 3.0);
  m.erasure_gamma = j.value("erasure_gamma", 0.0);
  m.erasure_rho = j.value("erasure_rho", 0.0);
  m.check();
  return m;
}

inline json to_json(const StructuredUncertainty& u) {
  json g = json::array();
  for (const auto& b : u.general) g.push_back({{"L", to_json_matrix(b.L)}, {"R", to_json_matrix(b.R)}});
  return {{"scalar_blocks", matrices_to_json(u.scalar)}, {"general_blocks", g}};
}

inline StructuredUncertainty uncertainty_from_json(const json& j) {
  StructuredUncertainty u;
  if (j.contains("scalar_blocks")) u.scalar = matrices_from_json(j["scalar_blocks"], "scalar_blocks");
  if (j.contains("general_blocks"))
    for (const auto& b : j["general_blocks"])
      u.general.push_back({matrix_from_json(b.at("L"), "general_blocks.L"), matrix_from_json(b.at("R"), "general_blocks.R")});
  u.check();
  return u;
}

inline json to_json(const ContrastMatrix& H) {
  json j = {{"blocks", matrices_to_json(H.blocks)},
            {"delta", H.delta},
            {"seed", H.seed},
            {"chi_noise", H.chi_noise},
            {"chi_perturbation", H.chi_perturbation}};
  if (!H.theta.empty()) j["theta"] = H.theta;
  return j;
}

// Accepts a contrast-matrix object or a bare matrix (single block, delta 0).
inline ContrastMatrix contrast_from_json(const json& j) {
  if (j.is_array()) return ContrastMatrix::single(matrix_from_json(j, "contrast"), 0.0);
  ContrastMatrix H;
  H.blocks = matrices_from_json(j.at("blocks"), "contrast.blocks");
  H.delta = j.value("delta", 0.0);
  H.seed = j.value("seed", std::uint64_t{0});
  H.chi_noise = j.value("chi_noise", 0.0);
  H.chi_perturbation = j.value("chi_perturbation", 0.0);
  if (j.contains("theta")) H.theta = j["theta"].get<std::vector<double>>();
  for (const auto& b : H.blocks) require(b.rows() == H.blocks[0].rows(), "contrast: blocks differ in row count");
  return H;
}

inline json to_json(const RiskCertificate& c) {
  json mu = json::array(), vk = json::array();
  for (const auto& v : c.mu) mu.push_back(to_json_vector(v));
  for (const auto& v : c.varkappa) vk.push_back(to_json_vector(v));
  return {{"bound", c.bound}, {"eps", c.eps},       {"c_eps", c.c_eps},   {"noise", c.noise},
          {"rho", c.rho},     {"varrho", c.varrho}, {"lambda", c.lambda}, {"kappa", c.kappa},
          {"mu", mu},         {"varkappa", vk},     {"lmi_residual", c.lmi_residual}, {"iterations", c.iterations}};
}

inline json to_json(const PolyRiskReport& r) {
  json j = {{"bound", std::isfinite(r.bound) ? json(r.bound) : json("inf")},
            {"admissible", r.admissible},
            {"max_gauge", r.max_gauge},
            {"inadmissible", r.inadmissible},
            {"delta", r.delta},
            {"eps", r.eps},
            {"rho", r.rho},
            {"lambda", r.lambda},
            {"lmi_residual", r.lmi_residual},
            {"iterations", r.iterations}};
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

inline json to_json(const PolySynthesis& s) {
  return {{"opt", s.opt},
          {"varkappa", s.varkappa},
          {"risk_bound", s.risk_bound},
          {"delta", s.delta},
          {"chi_noise", s.chi_noise},
          {"chi_perturbation", s.chi_perturbation},
          {"varrho", s.point.varrho},
          {"lmi_residual", s.lmi_residual},
          {"iterations", s.iterations}};
}

inline json to_json(const LinearUbbCertificate& c) {
  return {{"bound", c.bound}, {"noise", c.noise}, {"snb", c.snb}, {"bias", c.bias}, {"c_eps", c.c_eps}, {"snb_factor", c.snb_factor}};
}

// Problem file: {"model": ..., "X": ellitope, "norm": {"R": [...]}, "uncertainty": ..., "U": spectratope}.
struct Problem {
  UncertaintyModel model;
  EllitopeSpec X;
  ErrorNorm norm;
  std::optional<StructuredUncertainty> uncertainty;
  std::optional<SpectratopeSpec> U;
};

inline Problem problem_from_json(const json& j) {
  Problem p;
  p.model = model_from_json(j.at("model"));
  p.X = j.contains("X") ? ellitope_from_json(j["X"]) : EllitopeSpec::unit_ball(p.model.n());
  p.norm = j.contains("norm") ? norm_from_json(j["norm"]) : ErrorNorm::euclidean(p.model.nu());
  if (j.contains("uncertainty")) p.uncertainty = uncertainty_from_json(j["uncertainty"]);
  if (j.contains("U")) p.U = spectratope_from_json(j["U"]);
  require(p.X.n() == p.model.n(), "problem: signal set dimension differs from A columns");
  require(p.norm.nu() == p.model.nu(), "problem: norm dimension differs from B rows");
  return p;
}

inline json to_json(const Problem& p) {
  json j = {{"model", to_json(p.model)}, {"X", to_json(p.X)}, {"norm", to_json(p.norm)}};
  if (p.uncertainty) j["uncertainty"] = to_json(*p.uncertainty);
  if (p.U) j["U"] = to_json(*p.U);
  return j;
}

struct DeconvConfig {
  int n = 32, m = 32, nu = 16;
  std::vector<double> kernel;   // empty: normalized Gaussian, length 9, std 2
  std::vector<double> gammas{1e-3, 1e-2, 1e-1, 1.0};
  double sigma = 1e-4;
  std::vector<double> weights;  // empty: i^2
  bool operator==(const DeconvConfig&) const = default;
};

struct ExperimentConfig {
  std::string model_file;  // empty: built-in deconvolution generator
  DeconvConfig deconv;
  std::vector<std::string> estimators{"linear", "nominal", "poly"};
  double eps = 0.05;
  int n_mc = 500;
  std::uint64_t seed = 1;
  int trials = 20;
  int signals = 3;
  std::string out_dir = ".";
  double tol_gap = 1e-8, tol_feas = 1e-8;
  bool operator==(const ExperimentConfig&) const = default;

  conic::SolverOptions solver() const {
    conic::SolverOptions o;
    o.tol_gap = tol_gap;
    o.tol_feas = tol_feas;
    return o;
  }
};

inline json to_json(const DeconvConfig& d) {
  return {{"n", d.n}, {"m", d.m}, {"nu", d.nu}, {"kernel", d.kernel}, {"gammas", d.gammas}, {"sigma", d.sigma}, {"weights", d.weights}};
}

inline DeconvConfig deconv_config_from_json(const json& j) {
  DeconvConfig d;
  d.n = j.value("n", d.n);
  d.m = j.value("m", d.m);
  d.nu = j.value("nu", d.nu);
  d.kernel = j.value("kernel", d.kernel);
  d.gammas = j.value("gammas", d.gammas);
  d.sigma = j.value("sigma", d.sigma);
  d.weights = j.value("weights", d.weights);
  require(d.n >= 1 && d.m >= 1 && d.nu >= 1 && d.nu <= d.n, "deconv: need n, m >= 1 and 1 <= nu <= n");
  require(!d.gammas.empty(), "deconv: gamma grid is empty");
  for (double g : d.gammas) require(g >= 0.0, "deconv: gamma must be nonnegative");
  require(d.sigma >= 0.0, "deconv: sigma must be nonnegative");
  require(d.weights.empty() || static_cast<int>(d.weights.size()) == d.n, "deconv: weights must have n entries");
  return d;
}

inline json to_json(const ExperimentConfig& c) {
  return {{"model_file", c.model_file}, {"deconv", to_json(c.deconv)}, {"estimators", c.estimators}, {"eps", c.eps},
          {"n_mc", c.n_mc},             {"seed", c.seed},               {"trials", c.trials},         {"signals", c.signals},
          {"out_dir", c.out_dir},       {"tol_gap", c.tol_gap},         {"tol_feas", c.tol_feas}};
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.model_file = j.value("model_file", c.model_file);
  if (j.contains("deconv")) c.deconv = deconv_config_from_json(j["deconv"]);
  c.estimators = j.value("estimators", c.estimators);
  c.eps = j.value("eps", c.eps);
  c.n_mc = j.value("n_mc", c.n_mc);
  c.seed = j.value("seed", c.seed);
  c.trials = j.value("trials", c.trials);
  c.signals = j.value("signals", c.signals);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.tol_gap = j.value("tol_gap", c.tol_gap);
  c.tol_feas = j.value("tol_feas", c.tol_feas);
  require(c.eps > 0.0 && c.eps < 1.0, "config: eps must lie in (0,1)");
  require(c.n_mc >= 0 && c.trials >= 1 && c.signals >= 1, "config: n_mc >= 0, trials >= 1, signals >= 1 required");
  require(c.tol_gap > 0.0 && c.tol_feas > 0.0, "config: tolerances must be positive");
  for (const auto& e : c.estimators)
    require(e == "linear" || e == "nominal" || e == "poly", "config: unknown estimator " + e);
  return c;
}

inline DeconvScenario deconv_scenario(const DeconvConfig& d, double gamma) {
  VectorXd k = d.kernel.empty() ? gaussian_kernel() : Eigen::Map<const VectorXd>(d.kernel.data(), static_cast<Eigen::Index>(d.kernel.size()));
  VectorXd w = d.weights.empty() ? VectorXd() : Eigen::Map<const VectorXd>(d.weights.data(), static_cast<Eigen::Index>(d.weights.size()));
  return build_deconv_model(d.n, d.m, d.nu, k, gamma, d.sigma, w);
}

// Ellipsoidal X = P B_2: returns the model folded with P over the unit ball, P in `factor`.
inline DeconvScenario ball_form(const DeconvScenario& s, MatrixXd* factor = nullptr) {
  require(s.X.K() == 1 && s.X.base.scales()(0) == 1.0, "ball_form: signal set must be an ellipsoid");
  EllitopeSpec Y = whitened(s.X);
  DeconvScenario b = s;
  b.model = fold_image(s.model, *Y.P);
  b.X = EllitopeSpec::unit_ball(static_cast<int>(Y.P->cols()));
  if (factor) *factor = *Y.P;
  return b;
}

// Boundary points of X, drawn from a substream disjoint from the Monte Carlo streams.
inline std::vector<VectorXd> boundary_signals(const EllitopeSpec& X, int count, std::uint64_t seed) {
  std::vector<VectorXd> out;
  auto g = make_stream(seed, ~std::uint64_t{0});
  EllitopeSpec Y = checked(X);
  for (int k = 0; k < count; ++k) {
    VectorXd z = sample_boundary(EllitopeSpec{Y.T, Y.base, std::nullopt}, g);
    out.push_back(Y.P ? VectorXd(*Y.P * z) : z);
  }
  return out;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace robinv
