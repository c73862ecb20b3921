#pragma once

#include "robinv/deconv.hpp"
#include "robinv/linear_estimator.hpp"
#include "robinv/model.hpp"
#include "robinv/modeling.hpp"
#include "robinv/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace robinv {

inline double chi(double delta) {
  require(delta > 0.0 && delta < 1.0, "chi: delta must lie in (0,1)");
  return 2.0 * std::sqrt(2.0 * std::log(2.0 / delta));
}

// Admissible contrasts: sigma chi ||h||_2 <= 1 and chi Opt[h] <= 1.
struct HSetSpec {
  double sigma = 0.0;
  double delta = 0.05;
  std::vector<MatrixXd> A_alpha;
  EllitopeSpec X;
  double chi_noise = 0.0;  // 0 selects chi(delta)
  double chi_perturbation = 0.0;
  int m_obs = 0;

  double chi_n() const { return chi_noise > 0.0 ? chi_noise : chi(delta); }
  double chi_p() const { return chi_perturbation > 0.0 ? chi_perturbation : chi(delta); }
  int m() const { return m_obs > 0 ? m_obs : A_alpha.empty() ? 0 : static_cast<int>(A_alpha[0].rows()); }
  int q() const { return static_cast<int>(A_alpha.size()); }
};

inline HSetSpec hset_spec(const UncertaintyModel& model, const EllitopeSpec& X, double delta) {
  require(delta > 0.0 && delta < 1.0, "hset_spec: delta must lie in (0,1)");
  HSetSpec s;
  s.sigma = model.sigma;
  s.delta = delta;
  s.A_alpha = model.A_alpha;
  s.X = X;
  s.m_obs = model.m();
  return s;
}

// Second-moment variant used by the median-of-means recovery: both constants 1/8.
inline HSetSpec moment_hset_spec(const UncertaintyModel& model, const EllitopeSpec& X, double delta = 0.05) {
  HSetSpec s = hset_spec(model, X, delta);
  s.chi_noise = 8.0;
  s.chi_perturbation = 8.0;
  return s;
}

struct ContrastMatrix {
  std::vector<MatrixXd> blocks;  // H_l, m x M each
  double delta = 0.0;
  std::uint64_t seed = 0;
  double chi_noise = 0.0;
  double chi_perturbation = 0.0;
  std::vector<double> theta;  // extraction scale per block

  int L() const { return static_cast<int>(blocks.size()); }
  int m() const { return blocks.empty() ? 0 : static_cast<int>(blocks[0].rows()); }
  int columns() const {
    int c = 0;
    for (const auto& b : blocks) c += static_cast<int>(b.cols());
    return c;
  }
  MatrixXd full() const {
    MatrixXd H(m(), columns());
    int c0 = 0;
    for (const auto& b : blocks) {
      H.middleCols(c0, b.cols()) = b;
      c0 += static_cast<int>(b.cols());
    }
    return H;
  }
  static ContrastMatrix single(const MatrixXd& H, double delta) {
    ContrastMatrix c;
    c.blocks.push_back(H);
    c.delta = delta;
    return c;
  }
};

inline HSetSpec hset_spec(const ContrastMatrix& H, const UncertaintyModel& model, const EllitopeSpec& X) {
  HSetSpec s = hset_spec(model, X, H.delta);
  s.chi_noise = H.chi_noise;
  s.chi_perturbation = H.chi_perturbation;
  return s;
}

namespace detail {

// F with X = F * (unit Euclidean ball), when X is a single nondegenerate ellipsoid.
inline std::optional<MatrixXd> ellipsoid_factor(const EllitopeSpec& X) {
  EllitopeSpec c = checked(X);
  if (c.K() != 1) return std::nullopt;
  const MatrixXd& T = c.T[0];
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(T);
  const VectorXd& ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff())) return std::nullopt;
  double s = c.base.scales()(0);
  MatrixXd F = std::sqrt(s) * es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  if (c.P) F = *c.P * F;
  return F;
}

inline MatrixXd calA(const VectorXd& h, const std::vector<MatrixXd>& A_alpha) {
  const int q = static_cast<int>(A_alpha.size());
  MatrixXd M(q, q > 0 ? A_alpha[0].cols() : 0);
  for (int a = 0; a < q; ++a) M.row(a) = h.transpose() * A_alpha[static_cast<size_t>(a)];
  return M;
}

// Closed-form Minkowski function of the admissible set for ellipsoidal X.
struct HGauge {
  double sn = 0.0, cp = 0.0;
  std::vector<MatrixXd> AF;

  explicit HGauge(const HSetSpec& s) {
    auto F = ellipsoid_factor(s.X);
    require(F.has_value(), "admissible-set gauge needs an ellipsoidal signal set");
    sn = s.sigma * s.chi_n();
    cp = s.chi_p();
    for (const auto& Aa : s.A_alpha) AF.push_back(Aa * *F);
  }
  double opt(const VectorXd& h) const { return AF.empty() ? 0.0 : spectral_norm(calA(h, AF)); }
  double operator()(const VectorXd& h) const { return std::max(sn * h.norm(), cp * opt(h)); }
};

}  // namespace detail

// min lambda + phi(mu) s.t. [[lambda I, A[h]/2], [A[h]'/2, sum_k mu_k T_k]] PSD.
inline double hset_opt(const VectorXd& h, const HSetSpec& spec, const conic::SolverOptions& opt = {}, bool closed_form = true) {
  const int q = spec.q();
  if (q == 0) return 0.0;
  require(h.size() == spec.m(), "hset_opt: dimension mismatch");
  if (closed_form && detail::ellipsoid_factor(spec.X)) return detail::HGauge(spec).opt(h);
  EllitopeSpec Y = checked(spec.X);
  MatrixXd Ah = detail::calA(h, spec.A_alpha);
  if (Y.P) Ah = Ah * *Y.P;
  if (Ah.isZero(0.0)) return 0.0;
  Ah = detail::compress_rows(Ah);
  Program prog;
  LinExpr lam = prog.new_var();
  auto mu = prog.new_nonnegs(Y.K());
  prog.add_psd(conic::build_lmi_block(identity_times(lam, static_cast<int>(Ah.rows())), AffMat::constant(0.5 * Ah),
                                      weighted_sum(mu, Y.T)));
  prog.minimize(lam + support_bound(prog, Y.base, mu));
  auto sol = conic::solve_or_throw(prog, opt, "hset_opt");
  return std::max(sol.objective, 0.0);
}

inline double hset_gauge(const VectorXd& h, const HSetSpec& spec, const conic::SolverOptions& opt = {}) {
  double g = spec.sigma * spec.chi_n() * h.norm();
  if (spec.q() > 0) g = std::max(g, spec.chi_p() * hset_opt(h, spec, opt));
  return g;
}

inline bool hset_member(const VectorXd& h, const HSetSpec& spec, double tol = 1e-9) {
  return hset_gauge(h, spec) <= 1.0 + tol;
}

// The admissible set as a spectratope over the box [0,1]^2:
// S_1[h] = sigma chi [[0, h'], [h, 0]],  S_2[h] = chi [[0, A[h] F], [F' A[h]', 0]].
inline SpectratopeSpec hset_spectratope(const HSetSpec& spec) {
  auto F = detail::ellipsoid_factor(spec.X);
  require(F.has_value(), "hset_spectratope: signal set must be an ellipsoid");
  const int m = spec.m();
  require(m > 0, "hset_spectratope: observation dimension unknown");
  const int q = spec.q(), N = static_cast<int>(F->cols());
  const double sn = spec.sigma * spec.chi_n(), cp = spec.chi_p();
  SpectratopeSpec s;
  s.base = BaseSet::box(2);
  s.S.resize(2);
  for (int j = 0; j < m; ++j) {
    MatrixXd S1 = MatrixXd::Zero(m + 1, m + 1);
    S1(0, j + 1) = sn;
    S1(j + 1, 0) = sn;
    s.S[0].push_back(S1);
    MatrixXd S2 = MatrixXd::Zero(q + N, q + N);
    for (int a = 0; a < q; ++a) {
      VectorXd row = (spec.A_alpha[static_cast<size_t>(a)] * *F).row(j).transpose();
      S2.block(a, q, 1, N) = cp * row.transpose();
      S2.block(q, a, N, 1) = cp * row;
    }
    s.S[1].push_back(S2);
  }
  return s;
}

struct PolyRiskReport {
  double bound = 0.0;
  bool admissible = true;
  double max_gauge = 0.0;
  std::vector<int> inadmissible;  // column indices of the full contrast matrix
  double delta = 0.0;
  double eps = 0.0;  // delta * columns
  double rho = 0.0;
  std::vector<double> lambda;
  std::vector<VectorXd> mu, upsilon;
  double lmi_residual = 0.0;
  int iterations = 0;
  std::string message;
};

// 2 min rho over the certificate LMIs; +inf when a column is not admissible.
inline PolyRiskReport risk_bound_poly(const ContrastMatrix& H, const UncertaintyModel& model, const EllitopeSpec& X,
                                      const ErrorNorm& norm, const conic::SolverOptions& opt = {}, bool check_admissibility = true) {
  model.check();
  require(H.L() == norm.L(), "risk_bound_poly: need one contrast block per norm component");
  require(norm.nu() == model.nu(), "risk_bound_poly: error norm dimension differs from B rows");
  require(X.n() == model.n(), "risk_bound_poly: signal set dimension differs from A columns");
  for (const auto& b : H.blocks) require(b.rows() == model.m(), "risk_bound_poly: contrast blocks need m rows");
  PolyRiskReport r;
  r.delta = H.delta;
  r.eps = H.delta * H.columns();
  if (check_admissibility) {
    require(H.delta > 0.0 && H.delta < 1.0, "risk_bound_poly: contrast delta must lie in (0,1)");
    HSetSpec hs = hset_spec(H, model, X);
    MatrixXd Hf = H.full();
    std::optional<detail::HGauge> closed;
    if (detail::ellipsoid_factor(X)) closed.emplace(hs);
    for (int j = 0; j < Hf.cols(); ++j) {
      double g = closed ? (*closed)(Hf.col(j)) : hset_gauge(Hf.col(j), hs, opt);
      r.max_gauge = std::max(r.max_gauge, g);
      if (g > 1.0 + 1e-8) r.inadmissible.push_back(j);
    }
    if (!r.inadmissible.empty()) {
      r.admissible = false;
      r.bound = std::numeric_limits<double>::infinity();
      r.message = std::to_string(r.inadmissible.size()) + " contrast column(s) outside the admissible set (max gauge " +
                  std::to_string(r.max_gauge) + "); refusing to certify";
      return r;
    }
  }

  EllitopeSpec Y = whitened(X);
  UncertaintyModel M = fold_image(model, *Y.P);
  Y.P.reset();
  const int N = Y.N();
  Program prog;
  LinExpr rho = prog.new_var();
  struct Vars {
    LinExpr lam;
    std::vector<LinExpr> mu, ups;
    MatrixXd C, AH;
    bool active = false;
  };
  std::vector<Vars> vars(static_cast<size_t>(H.L()));
  for (int l = 0; l < H.L(); ++l) {
    Vars& v = vars[static_cast<size_t>(l)];
    v.C = detail::compress_rows(norm.R_sqrt[static_cast<size_t>(l)] * M.B);
    v.AH = M.A.transpose() * H.blocks[static_cast<size_t>(l)];
    if (v.C.isZero(0.0)) continue;
    v.active = true;
    v.lam = prog.new_var();
    v.mu = prog.new_nonnegs(Y.K());
    v.ups = prog.new_nonnegs(static_cast<int>(v.AH.cols()));
    AffMat D = weighted_sum(v.mu, Y.T);
    for (int j = 0; j < v.AH.cols(); ++j) D.add_scaled(v.ups[static_cast<size_t>(j)], v.AH.col(j) * v.AH.col(j).transpose());
    D.compress();
    prog.add_psd(conic::build_lmi_block(identity_times(v.lam, static_cast<int>(v.C.rows())), AffMat::constant(0.5 * v.C), D));
    prog.add_le(v.lam + support_bound(prog, Y.base, v.mu) + sum(v.ups), rho);
  }
  prog.add_nonneg(rho);
  prog.minimize(2.0 * rho);
  auto sol = conic::solve_or_throw(prog, opt, "risk_bound_poly");
  r.iterations = sol.iterations;
  r.lmi_residual = std::numeric_limits<double>::infinity();
  double rh = 0.0;
  for (int l = 0; l < H.L(); ++l) {
    const Vars& v = vars[static_cast<size_t>(l)];
    if (!v.active) {
      r.lambda.push_back(0.0);
      r.mu.push_back(VectorXd::Zero(Y.K()));
      r.upsilon.push_back(VectorXd::Zero(v.AH.cols()));
      continue;
    }
    double lam = std::max(sol.value(v.lam), 0.0);
    VectorXd mu = sol.value(v.mu).cwiseMax(0.0), ups = sol.value(v.ups).cwiseMax(0.0);
    MatrixXd D = MatrixXd::Zero(N, N);
    for (int k = 0; k < Y.K(); ++k) D += mu(k) * Y.T[static_cast<size_t>(k)];
    D += v.AH * ups.asDiagonal() * v.AH.transpose();
    const auto c = static_cast<Eigen::Index>(v.C.rows());
    MatrixXd blk(c + N, c + N);
    blk << lam * MatrixXd::Identity(c, c), 0.5 * v.C, 0.5 * v.C.transpose(), D;
    r.lmi_residual = std::min(r.lmi_residual, lambda_min(blk));
    rh = std::max(rh, lam + Y.base.support(mu) + ups.sum());
    r.lambda.push_back(lam);
    r.mu.push_back(mu);
    r.upsilon.push_back(ups);
  }
  if (!std::isfinite(r.lmi_residual)) r.lmi_residual = 0.0;
  r.rho = rh;
  r.bound = 2.0 * rh;
  return r;
}

struct PolyLowerBound {
  double value = 0.0;
  VectorXd y;
  int solves = 0;
};

// Lower bound on sup { ||B y|| : y in 2X, ||H' A y||_inf <= 2 } by linearized ascent from random directions.
inline PolyLowerBound p_oracle(const MatrixXd& H, const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm,
                               int budget = 20, std::uint64_t seed = 1, const conic::SolverOptions& opt = {}) {
  model.check();
  require(H.rows() == model.m(), "p_oracle: H needs m rows");
  require(budget >= 1, "p_oracle: budget must be positive");
  EllitopeSpec Y = checked(X);
  const int N = Y.N();
  MatrixXd P = Y.P ? *Y.P : MatrixXd::Identity(N, N);
  MatrixXd G = H.transpose() * model.A * P;
  MatrixXd BP = model.B * P;
  PolyLowerBound best;
  best.y = VectorXd::Zero(model.n());
  if (BP.isZero(0.0)) return best;

  auto certify = [&](const VectorXd& z) -> VectorXd {
    double s = std::max(1.0, 0.5 * gauge(z, Y));
    if (G.rows() > 0) s = std::max(s, 0.5 * (G * z).cwiseAbs().maxCoeff());
    return z / s;
  };
  auto linear_max = [&](const VectorXd& c, VectorXd& z) {
    Program prog;
    auto zv = prog.new_vars(N);
    add_ellitope_membership(prog, Y, zv, 2.0);
    for (int j = 0; j < G.rows(); ++j) {
      LinExpr e;
      for (int i = 0; i < N; ++i)
        if (G(j, i) != 0.0) e.add_scaled(zv[static_cast<size_t>(i)], G(j, i));
      prog.add_le(e, LinExpr(2.0));
      prog.add_le(-e, LinExpr(2.0));
    }
    LinExpr obj;
    for (int i = 0; i < N; ++i) obj.add_scaled(zv[static_cast<size_t>(i)], -c(i));
    prog.minimize(obj);
    auto sol = conic::solve(prog, opt);
    ++best.solves;
    if (!sol.ok() && sol.status != conic::Status::numerical_failure) return false;
    z = certify(sol.value(zv));
    return z.allFinite();
  };

  std::mt19937_64 g = make_stream(seed, 0x9017);
  std::normal_distribution<double> nd;
  for (int s = 0; s < budget; ++s) {
    int l = s % norm.L();
    MatrixXd RB = norm.R_sqrt[static_cast<size_t>(l)] * BP;
    VectorXd u(RB.rows());
    if (s < norm.L()) {
      Eigen::JacobiSVD<MatrixXd> svd(RB, Eigen::ComputeThinU);
      u = svd.matrixU().col(0);
    } else {
      for (int i = 0; i < u.size(); ++i) u(i) = nd(g);
    }
    double val = 0.0;
    VectorXd z;
    for (int it = 0; it < 30; ++it) {
      VectorXd cand;
      if (!linear_max(RB.transpose() * u, cand)) break;
      double v = norm(model.B * (P * cand));
      if (v > best.value) {
        best.value = v;
        best.y = P * cand;
      }
      if (v <= val * (1.0 + 1e-10)) break;
      val = v;
      z = cand;
      int arg = 0;
      double top = -1.0;
      for (int k = 0; k < norm.L(); ++k) {
        double nk = (norm.R_sqrt[static_cast<size_t>(k)] * (BP * z)).norm();
        if (nk > top) {
          top = nk;
          arg = k;
        }
      }
      l = arg;
      RB = norm.R_sqrt[static_cast<size_t>(l)] * BP;
      u = RB * z;
      if (u.norm() == 0.0) break;
      u.normalize();
    }
  }
  return best;
}

struct ConeMembership {
  bool member = false;
  VectorXd r;
  VectorXd lambda_max;  // largest eigenvalue of each lifted block
};

// Exists r in the base set with S_i[Sigma] <= rho r_i I; the smallest such r is lambda_max / rho since base sets are monotone.
inline ConeMembership spectratope_cone_member(const MatrixXd& Sigma, double rho, const SpectratopeSpec& H, double tol = 1e-9) {
  require_shape(Sigma, H.N(), H.N(), "spectratope_cone_member: Sigma");
  require(rho >= 0.0, "spectratope_cone_member: rho must be nonnegative");
  ConeMembership c;
  c.r = VectorXd::Zero(H.blocks());
  c.lambda_max = VectorXd::Zero(H.blocks());
  MatrixXd S = sym(Sigma);
  double scale = std::max(1.0, S.norm());
  if (lambda_min(S) < -tol * scale) return c;
  bool zero_ok = true;
  for (int i = 0; i < H.blocks(); ++i) {
    c.lambda_max(i) = std::max(lambda_max(H.lift(i, S)), 0.0);
    if (c.lambda_max(i) > tol * scale) zero_ok = false;
  }
  if (rho == 0.0) {
    c.member = zero_ok;
    return c;
  }
  c.r = c.lambda_max / rho;
  c.member = H.base.contains(c.r / (1.0 + tol), 0.0) || H.base.contains(c.r, tol);
  return c;
}

inline double cone_varkappa(int D, int N) { return 4.0 * std::log(4.0 * D * static_cast<double>(N)); }

struct ConeDecomposition {
  std::vector<VectorXd> g;
  std::vector<double> lambda;
  int rounds = 0;
  double varkappa = 0.0;
  double max_gauge = 0.0;
};

// Sigma = sum_j lambda_j g_j g_j' with g_j in H and sum_j lambda_j <= varkappa rho,
// from the columns of Sigma^{1/2} Diag(s) O for Rademacher s and the DCT matrix O.
inline ConeDecomposition decompose_cone_point(const MatrixXd& Sigma, double rho, const SpectratopeSpec& H, int max_rounds = 20,
                                              std::uint64_t seed = 1) {
  require_shape(Sigma, H.N(), H.N(), "decompose_cone_point: Sigma");
  require(max_rounds >= 1, "decompose_cone_point: max_rounds must be positive");
  const int N = H.N();
  ConeDecomposition d;
  d.varkappa = cone_varkappa(H.D(), N);
  MatrixXd S = sym(Sigma);
  if (S.isZero(0.0)) return d;
  require(rho > 0.0, "decompose_cone_point: nonzero Sigma needs rho > 0");
  MatrixXd Z = psd_sqrt(S);
  MatrixXd O = dct_matrix(N);
  const double cap = d.varkappa * rho / N;  // largest admissible theta^2
  std::mt19937_64 g = make_stream(seed, 0xdc7);
  std::bernoulli_distribution coin(0.5);
  for (int round = 1; round <= max_rounds; ++round) {
    VectorXd s(N);
    for (int i = 0; i < N; ++i) s(i) = coin(g) ? 1.0 : -1.0;
    MatrixXd Zs = Z * s.asDiagonal() * O;
    double theta = 0.0;
    for (int j = 0; j < N; ++j) theta = std::max(theta, gauge(VectorXd(Zs.col(j)), H));
    // Columns are rescaled to the boundary, so success means N theta^2 <= varkappa rho.
    if (theta * theta <= cap * (1.0 + 1e-12)) {
      d.rounds = round;
      if (theta == 0.0) return d;
      for (int j = 0; j < N; ++j) {
        d.g.push_back(Zs.col(j) / theta);
        d.lambda.push_back(theta * theta);
      }
      d.max_gauge = 1.0;
      return d;
    }
  }
  throw std::runtime_error("decompose_cone_point: no admissible decomposition after " + std::to_string(max_rounds) + " rounds");
}

struct CompatibleConePoint {
  std::vector<MatrixXd> Theta;
  std::vector<double> varrho;
  std::vector<VectorXd> r;
};

struct PolySynthesis {
  CompatibleConePoint point;
  std::vector<double> lambda, mu;
  double opt = 0.0;
  double varkappa = 0.0;
  double risk_bound = 0.0;  // 2 sqrt(varkappa) opt
  double delta = 0.0;
  double chi_noise = 0.0, chi_perturbation = 0.0;
  double lmi_residual = 0.0;
  int iterations = 0;
};

struct PolySynthOptions {
  double chi_noise = 0.0;  // 0 selects chi(delta)
  double chi_perturbation = 0.0;
  conic::SolverOptions solver;
};

// Compatible-cone relaxation for an ellipsoidal X (mapped to the unit ball), delta = eps / (L m).
inline PolySynthesis synthesize_poly_ball(const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm, double eps,
                                          const PolySynthOptions& po = {}) {
  model.check();
  require(eps > 0.0 && eps < 1.0, "synthesize_poly_ball: eps must lie in (0,1)");
  require(model.sigma > 0.0, "synthesize_poly_ball: sigma = 0 leaves Theta unbounded");
  require(norm.nu() == model.nu(), "synthesize_poly_ball: error norm dimension differs from B rows");
  require(X.n() == model.n(), "synthesize_poly_ball: signal set dimension differs from A columns");
  auto F = detail::ellipsoid_factor(X);
  require(F.has_value(), "synthesize_poly_ball: signal set must be an ellipsoid");
  UncertaintyModel M = fold_image(model, *F);
  const int m = M.m(), n = M.n(), q = M.q(), L = norm.L();

  PolySynthesis out;
  out.delta = eps / (static_cast<double>(L) * m);
  out.chi_noise = po.chi_noise > 0.0 ? po.chi_noise : chi(out.delta);
  out.chi_perturbation = po.chi_perturbation > 0.0 ? po.chi_perturbation : chi(out.delta);
  out.varkappa = cone_varkappa(m + n + q + 1, m);
  const double cn2 = model.sigma * model.sigma * out.chi_noise * out.chi_noise;
  const double ip2 = 1.0 / (out.chi_perturbation * out.chi_perturbation);

  std::vector<MatrixXd> gram_coef;  // A_a A_b' for a <= b
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b) gram_coef.push_back(M.A_alpha[static_cast<size_t>(a)] * M.A_alpha[static_cast<size_t>(b)].transpose());

  Program prog;
  LinExpr rho = prog.new_var();
  std::vector<AffMat> Th;
  std::vector<LinExpr> vr, lam, mu;
  for (int l = 0; l < L; ++l) {
    AffMat T = prog.new_psd_matrix(m);
    LinExpr v = prog.new_var(), lb = prog.new_var(), mb = prog.new_nonneg();
    prog.add_le(cn2 * trace(T), v);
    if (q > 0) {
      AffMat Gm(q, q);
      int idx = 0;
      for (int a = 0; a < q; ++a)
        for (int b = a; b < q; ++b) {
          LinExpr e = inner(gram_coef[static_cast<size_t>(idx++)], T);
          Gm(a, b) = -1.0 * e;
          Gm(b, a) = -1.0 * e;
        }
      Gm.add_scaled(ip2 * v, MatrixXd::Identity(q, q));
      prog.add_psd(Gm);
      AffMat Sm(n, n);
      for (int a = 0; a < q; ++a) {
        const MatrixXd& Aa = M.A_alpha[static_cast<size_t>(a)];
        Sm += (Aa.transpose() * T) * Aa;
      }
      Sm *= -1.0;
      Sm.add_scaled(ip2 * v, MatrixXd::Identity(n, n));
      prog.add_psd(Sm);
    }
    MatrixXd C = detail::compress_rows(norm.R_sqrt[static_cast<size_t>(l)] * M.B);
    AffMat D = (M.A.transpose() * T) * M.A;
    D.add_scaled(mb, MatrixXd::Identity(n, n));
    prog.add_psd(conic::build_lmi_block(identity_times(lb, static_cast<int>(C.rows())), AffMat::constant(0.5 * C), D));
    prog.add_le(lb + mb + v, rho);
    Th.push_back(T);
    vr.push_back(v);
    lam.push_back(lb);
    mu.push_back(mb);
  }
  prog.minimize(rho);
  auto sol = conic::solve_or_throw(prog, po.solver, "synthesize_poly_ball");
  out.iterations = sol.iterations;
  out.lmi_residual = std::numeric_limits<double>::infinity();
  double opt = 0.0;
  for (int l = 0; l < L; ++l) {
    MatrixXd T = psd_clip(sym(Th[static_cast<size_t>(l)].value(sol.x)));
    double need1 = cn2 * T.trace(), need2 = 0.0;
    if (q > 0) {
      MatrixXd Gm(q, q), Sm = MatrixXd::Zero(n, n);
      for (int a = 0; a < q; ++a) {
        const MatrixXd& Aa = M.A_alpha[static_cast<size_t>(a)];
        for (int b = 0; b < q; ++b) Gm(a, b) = (Aa.transpose() * T * M.A_alpha[static_cast<size_t>(b)]).trace();
        Sm += Aa.transpose() * T * Aa;
      }
      need2 = std::max(lambda_max(sym(Gm)), lambda_max(sym(Sm))) / ip2;
    }
    double v = std::max({sol.value(vr[static_cast<size_t>(l)]), need1, need2, 0.0});
    double lb = std::max(sol.value(lam[static_cast<size_t>(l)]), 0.0), mb = std::max(sol.value(mu[static_cast<size_t>(l)]), 0.0);
    MatrixXd C = detail::compress_rows(norm.R_sqrt[static_cast<size_t>(l)] * M.B);
    const auto c = static_cast<Eigen::Index>(C.rows());
    MatrixXd blk(c + n, c + n);
    blk << lb * MatrixXd::Identity(c, c), 0.5 * C, 0.5 * C.transpose(), M.A.transpose() * T * M.A + mb * MatrixXd::Identity(n, n);
    out.lmi_residual = std::min(out.lmi_residual, lambda_min(blk));
    VectorXd r(2);
    r << (v > 0.0 ? need1 / v : 0.0), (v > 0.0 ? need2 / v : 0.0);
    out.point.Theta.push_back(T);
    out.point.varrho.push_back(v);
    out.point.r.push_back(r);
    out.lambda.push_back(lb);
    out.mu.push_back(mb);
    opt = std::max(opt, lb + mb + v);
  }
  out.opt = opt;
  out.risk_bound = 2.0 * std::sqrt(out.varkappa) * opt;
  return out;
}

// Per block: K candidates Theta^{1/2} Diag(s) O, keep the one with the smallest largest column gauge, rescale to the boundary.
inline ContrastMatrix extract_contrasts(const CompatibleConePoint& point, const HSetSpec& spec, int trials = 20, std::uint64_t seed = 1) {
  require(trials >= 1, "extract_contrasts: trials must be positive");
  const int L = static_cast<int>(point.Theta.size());
  require(L >= 1, "extract_contrasts: empty cone point");
  const int m = static_cast<int>(point.Theta[0].rows());
  detail::HGauge gauge_of(spec);
  MatrixXd O = dct_matrix(m);
  std::vector<MatrixXd> roots;
  for (const auto& T : point.Theta) roots.push_back(psd_sqrt(sym(T)));
  std::vector<double> theta(static_cast<size_t>(L) * trials, 0.0);
  std::vector<MatrixXd> cand(static_cast<size_t>(L) * trials);
  parallel_for(L * trials, [&](int idx) {
    int l = idx / trials, k = idx % trials;
    auto g = make_stream(seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(k));
    std::bernoulli_distribution coin(0.5);
    VectorXd s(m);
    for (int i = 0; i < m; ++i) s(i) = coin(g) ? 1.0 : -1.0;
    MatrixXd G = roots[static_cast<size_t>(l)] * s.asDiagonal() * O;
    double t = 0.0;
    for (int j = 0; j < m; ++j) t = std::max(t, gauge_of(G.col(j)));
    theta[static_cast<size_t>(idx)] = t;
    cand[static_cast<size_t>(idx)] = std::move(G);
  });
  ContrastMatrix H;
  H.delta = spec.delta;
  H.seed = seed;
  H.chi_noise = spec.chi_noise;
  H.chi_perturbation = spec.chi_perturbation;
  for (int l = 0; l < L; ++l) {
    int best = l * trials;
    for (int k = 1; k < trials; ++k)
      if (theta[static_cast<size_t>(l * trials + k)] < theta[static_cast<size_t>(best)]) best = l * trials + k;
    double t = theta[static_cast<size_t>(best)];
    H.theta.push_back(t);
    H.blocks.push_back(t > 0.0 ? MatrixXd(cand[static_cast<size_t>(best)] / t) : MatrixXd::Zero(m, m));
  }
  return H;
}

struct PolyEstimate {
  ContrastMatrix H;
  PolySynthesis synthesis;
  PolyRiskReport cert;
};

inline PolyEstimate synthesize_poly(const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm, double eps,
                                    int trials = 20, std::uint64_t seed = 1, const PolySynthOptions& po = {}) {
  PolyEstimate e;
  e.synthesis = synthesize_poly_ball(model, X, norm, eps, po);
  HSetSpec hs = hset_spec(model, X, e.synthesis.delta);
  hs.chi_noise = po.chi_noise;
  hs.chi_perturbation = po.chi_perturbation;
  e.H = extract_contrasts(e.synthesis.point, hs, trials, seed);
  e.cert = risk_bound_poly(e.H, model, X, norm, po.solver);
  return e;
}

struct PolyRecovery {
  VectorXd x, w;
  double objective = 0.0;
  std::vector<std::string> warnings;
  int iterations = 0;
};

// argmin over u in X of ||y - Hf' A u||_inf.
inline PolyRecovery recover_from_projections(const MatrixXd& Hf, const VectorXd& y, const UncertaintyModel& model,
                                             const EllitopeSpec& X, const conic::SolverOptions& opt = {}) {
  require(Hf.rows() == model.m() && y.size() == Hf.cols(), "recover_poly: dimension mismatch");
  EllitopeSpec Y = checked(X);
  const int N = Y.N();
  MatrixXd P = Y.P ? *Y.P : MatrixXd::Identity(N, N);
  MatrixXd G = Hf.transpose() * model.A * P;
  PolyRecovery r;
  if (G.isZero(0.0) || Hf.cols() == 0) {
    r.x = VectorXd::Zero(model.n());
  } else {
    Program prog;
    auto z = prog.new_vars(N);
    add_ellitope_membership(prog, Y, z);
    LinExpr t = prog.new_var();
    for (int j = 0; j < G.rows(); ++j) {
      LinExpr e(-y(j));
      for (int i = 0; i < N; ++i)
        if (G(j, i) != 0.0) e.add_scaled(z[static_cast<size_t>(i)], G(j, i));
      prog.add_le(e, t);
      prog.add_le(-e, t);
    }
    prog.minimize(t);
    auto sol = conic::solve(prog, opt);
    if (!sol.ok() && sol.status != conic::Status::numerical_failure)
      throw std::runtime_error(std::string("recover_poly: solver status ") + conic::to_string(sol.status));
    if (sol.status == conic::Status::numerical_failure) r.warnings.push_back("solver stopped at reduced accuracy");
    VectorXd zv = sol.value(z);
    double gz = gauge(zv, Y);
    if (gz > 1.0) zv /= gz;
    r.x = P * zv;
    r.iterations = sol.iterations;
  }
  r.objective = Hf.cols() > 0 ? (y - Hf.transpose() * model.A * r.x).cwiseAbs().maxCoeff() : 0.0;
  r.w = model.B * r.x;
  return r;
}

inline PolyRecovery recover_poly(const ContrastMatrix& H, const VectorXd& omega, const UncertaintyModel& model,
                                 const EllitopeSpec& X, const conic::SolverOptions& opt = {}) {
  require(omega.size() == model.m(), "recover_poly: observation has wrong length");
  MatrixXd Hf = H.full();
  return recover_from_projections(Hf, Hf.transpose() * omega, model, X, opt);
}

// Order statistic ceil(K/2) of the sorted values.
inline double lower_median(std::vector<double> v) {
  require(!v.empty(), "lower_median: empty sample");
  std::sort(v.begin(), v.end());
  size_t k = (v.size() + 1) / 2;
  return v[k - 1];
}

inline int mom_min_repetitions(int M, double eps) {
  require(M >= 1 && eps > 0.0 && eps < 1.0, "mom_min_repetitions: bad arguments");
  return static_cast<int>(std::ceil(2.5 * std::log(M / eps)));
}

inline PolyRecovery mom_recover_poly(const ContrastMatrix& H, const std::vector<VectorXd>& observations, const UncertaintyModel& model,
                                     const EllitopeSpec& X, double eps, const conic::SolverOptions& opt = {}) {
  require(!observations.empty(), "mom_recover_poly: no observations");
  MatrixXd Hf = H.full();
  const int K = static_cast<int>(observations.size()), Mc = static_cast<int>(Hf.cols());
  VectorXd y(Mc);
  std::vector<double> vals(static_cast<size_t>(K));
  MatrixXd proj(Mc, K);
  for (int k = 0; k < K; ++k) {
    require(observations[static_cast<size_t>(k)].size() == model.m(), "mom_recover_poly: observation has wrong length");
    proj.col(k) = Hf.transpose() * observations[static_cast<size_t>(k)];
  }
  for (int j = 0; j < Mc; ++j) {
    for (int k = 0; k < K; ++k) vals[static_cast<size_t>(k)] = proj(j, k);
    y(j) = lower_median(vals);
  }
  PolyRecovery r = recover_from_projections(Hf, y, model, X, opt);
  if (Mc > 0 && K < mom_min_repetitions(Mc, eps))
    r.warnings.push_back("K=" + std::to_string(K) + " is below 2.5 ln(M/eps); the risk guarantee does not apply");
  return r;
}

}  // namespace robinv
