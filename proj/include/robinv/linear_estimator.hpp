#pragma once

#include "robinv/model.hpp"
#include "robinv/modeling.hpp"
#include "robinv/stochastics.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace robinv {

struct RiskCertificate {
  double bound = 0.0;
  double eps = 0.0;
  double c_eps = 1.0;
  double noise = 0.0;  // sigma * max_l ||H R_l^{1/2}||_F
  double rho = 0.0;
  double varrho = 0.0;
  std::vector<double> lambda, kappa;
  std::vector<VectorXd> mu, varkappa;
  double lmi_residual = 0.0;  // smallest eigenvalue over certificate LMIs
  int iterations = 0;
};

struct LinearEstimate {
  MatrixXd H;
  RiskCertificate cert;
  double synthesis_objective = 0.0;
};

inline double linear_confidence_factor(int L, double eps) { return 1.0 + std::sqrt(2.0 * std::log(2.0 * L / eps)); }

namespace detail {

// F with F'F = M'M and at most min(rows, cols) rows.
inline MatrixXd compress_rows(const MatrixXd& M) {
  if (M.rows() <= M.cols()) return M;
  Eigen::HouseholderQR<MatrixXd> qr(M);
  MatrixXd R = qr.matrixQR().topRows(M.cols()).triangularView<Eigen::Upper>();
  return R;
}

inline AffMat stack_rows(const std::vector<AffMat>& parts) {
  std::vector<std::vector<AffMat>> grid;
  for (const auto& p : parts) grid.push_back({p});
  return conic::assemble(grid);
}

enum class LinearMode { high_probability, expected };

struct LinearProblem {
  const UncertaintyModel* model;
  const EllitopeSpec* X;
  const ErrorNorm* norm;
  double eps = 0.05;
  LinearMode mode = LinearMode::high_probability;
  int only_ell = -1;  // expected mode: which norm component
};

struct LinearProgramVars {
  AffMat H;
  LinExpr rho, varrho, t;
  std::vector<LinExpr> lambda, kappa;
  std::vector<std::vector<LinExpr>> mu, varkappa;
  LinExpr objective;
};

inline LinearProgramVars build_linear_program(Program& prog, const LinearProblem& lp, const std::optional<MatrixXd>& Hfixed) {
  const UncertaintyModel& M = *lp.model;
  const EllitopeSpec& X = *lp.X;
  const ErrorNorm& nrm = *lp.norm;
  const int m = M.m(), nu = M.nu(), n = M.n(), q = M.q();
  LinearProgramVars v;
  v.H = Hfixed ? AffMat::constant(*Hfixed) : prog.new_matrix(m, nu);
  const AffMat Ht = v.H.transpose();
  const bool fixed = Hfixed.has_value();

  std::vector<int> ells;
  if (lp.only_ell >= 0)
    ells.push_back(lp.only_ell);
  else
    for (int l = 0; l < nrm.L(); ++l) ells.push_back(l);

  if (lp.mode == LinearMode::high_probability) {
    v.rho = prog.new_var();
    v.varrho = prog.new_var();
  }
  double frob_const = 0.0;
  if (M.sigma > 0.0 && !fixed) v.t = prog.new_var();

  for (int l : ells) {
    const MatrixXd& Rs = nrm.R_sqrt[static_cast<size_t>(l)];
    LinExpr lam, kap;
    std::vector<LinExpr> mu, vk;
    // With H fixed and a vanishing off-diagonal block, zero multipliers are optimal.
    MatrixXd Ac, Bc;
    if (fixed) {
      MatrixXd RH = Rs * Hfixed->transpose();
      Ac.resize(static_cast<Eigen::Index>(nu) * q, n);
      for (int a = 0; a < q; ++a) Ac.middleRows(static_cast<Eigen::Index>(a) * nu, nu) = RH * M.A_alpha[static_cast<size_t>(a)];
      Bc = Rs * M.B - RH * M.A;
    }
    if (q > 0 && !(fixed && Ac.isZero(0.0))) {
      lam = prog.new_var();
      mu = prog.new_nonnegs(X.K());
      AffMat calA;
      if (fixed) {
        calA = AffMat::constant(compress_rows(Ac));
      } else {
        AffMat RsHt = Rs * Ht;
        std::vector<AffMat> parts;
        for (int a = 0; a < q; ++a) parts.push_back(RsHt * M.A_alpha[static_cast<size_t>(a)]);
        calA = stack_rows(parts);
      }
      calA *= 0.5;
      prog.add_psd(conic::build_lmi_block(identity_times(lam, calA.rows()), calA, weighted_sum(mu, X.T)));
    } else {
      lam = LinExpr(0.0);
      mu.assign(static_cast<size_t>(X.K()), LinExpr(0.0));
    }
    if (!(fixed && Bc.isZero(0.0))) {
      kap = prog.new_var();
      vk = prog.new_nonnegs(X.K());
      AffMat bias;
      if (fixed) {
        bias = AffMat::constant(compress_rows(Bc));
      } else {
        bias = AffMat::constant(Rs * M.B);
        bias -= (Rs * Ht) * M.A;
      }
      bias *= 0.5;
      prog.add_psd(conic::build_lmi_block(identity_times(kap, bias.rows()), bias, weighted_sum(vk, X.T)));
    } else {
      kap = LinExpr(0.0);
      vk.assign(static_cast<size_t>(X.K()), LinExpr(0.0));
    }

    LinExpr unc = q > 0 ? lam + support_bound(prog, X.base, mu) : LinExpr(0.0);
    LinExpr bia = kap + support_bound(prog, X.base, vk);
    if (lp.mode == LinearMode::high_probability) {
      prog.add_le(unc, v.rho);
      prog.add_le(bia, v.varrho);
    } else {
      v.rho = unc;
      v.varrho = bia;
    }

    if (M.sigma > 0.0) {
      if (fixed) {
        frob_const = std::max(frob_const, (*Hfixed * Rs).norm());
      } else {
        AffMat HR = v.H * Rs;
        prog.add_soc(v.t, entries(HR));
      }
    }
    v.lambda.push_back(lam);
    v.kappa.push_back(kap);
    v.mu.push_back(mu);
    v.varkappa.push_back(vk);
  }
  LinExpr noise = M.sigma > 0.0 ? (fixed ? LinExpr(M.sigma * frob_const) : M.sigma * v.t) : LinExpr(0.0);
  if (lp.mode == LinearMode::high_probability) {
    double c = linear_confidence_factor(nrm.L(), lp.eps);
    v.objective = c * (noise + v.rho) + v.varrho;
  } else {
    v.objective = noise + v.rho + v.varrho;
  }
  prog.minimize(v.objective);
  return v;
}

inline void check_linear_inputs(const UncertaintyModel& M, const EllitopeSpec& X, const ErrorNorm& nrm, double eps) {
  M.check();
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  require(nrm.L() >= 1, "error norm has no components");
  require(nrm.nu() == M.nu(), "error norm dimension differs from B rows");
  require(X.n() == M.n(), "signal set dimension differs from A columns");
}

inline double certificate_residual(const UncertaintyModel& M, const EllitopeSpec& X, const ErrorNorm& nrm,
                                   const MatrixXd& H, const RiskCertificate& c, const std::vector<int>& ells) {
  double worst = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < ells.size(); ++i) {
    const MatrixXd& Rs = nrm.R_sqrt[static_cast<size_t>(ells[i])];
    MatrixXd Sk = MatrixXd::Zero(X.N(), X.N());
    for (int k = 0; k < X.K(); ++k) Sk += c.varkappa[i](k) * X.T[static_cast<size_t>(k)];
    MatrixXd bias = 0.5 * compress_rows(Rs * (M.B - H.transpose() * M.A));
    MatrixXd blk(bias.rows() + X.N(), bias.rows() + X.N());
    blk << c.kappa[i] * MatrixXd::Identity(bias.rows(), bias.rows()), bias, bias.transpose(), Sk;
    worst = std::min(worst, lambda_min(blk));
    if (M.q() > 0) {
      MatrixXd Sm = MatrixXd::Zero(X.N(), X.N());
      for (int k = 0; k < X.K(); ++k) Sm += c.mu[i](k) * X.T[static_cast<size_t>(k)];
      MatrixXd Ac(static_cast<Eigen::Index>(M.nu()) * M.q(), M.n());
      for (int a = 0; a < M.q(); ++a)
        Ac.middleRows(static_cast<Eigen::Index>(a) * M.nu(), M.nu()) = Rs * H.transpose() * M.A_alpha[static_cast<size_t>(a)];
      MatrixXd ca = 0.5 * compress_rows(Ac);
      MatrixXd b2(ca.rows() + X.N(), ca.rows() + X.N());
      b2 << c.lambda[i] * MatrixXd::Identity(ca.rows(), ca.rows()), ca, ca.transpose(), Sm;
      worst = std::min(worst, lambda_min(b2));
    }
  }
  return worst;
}

inline RiskCertificate extract_certificate(const conic::Solution& sol, const LinearProgramVars& v, const UncertaintyModel& M,
                                           const EllitopeSpec& X, const ErrorNorm& nrm, const MatrixXd& H, double eps,
                                           LinearMode mode, const std::vector<int>& ells) {
  RiskCertificate c;
  c.eps = eps;
  c.c_eps = mode == LinearMode::high_probability ? linear_confidence_factor(nrm.L(), eps) : 1.0;
  double frob = 0.0;
  for (int l : ells) frob = std::max(frob, (H * nrm.R_sqrt[static_cast<size_t>(l)]).norm());
  c.noise = M.sigma * frob;
  for (size_t i = 0; i < v.lambda.size(); ++i) {
    c.lambda.push_back(std::max(sol.value(v.lambda[i]), 0.0));
    c.kappa.push_back(std::max(sol.value(v.kappa[i]), 0.0));
    c.mu.push_back(sol.value(v.mu[i]).cwiseMax(0.0));
    c.varkappa.push_back(sol.value(v.varkappa[i]).cwiseMax(0.0));
  }
  double rho = 0.0, varrho = 0.0;
  for (size_t i = 0; i < c.lambda.size(); ++i) {
    rho = std::max(rho, c.lambda[i] + (M.q() > 0 ? X.base.support(c.mu[i]) : 0.0));
    varrho = std::max(varrho, c.kappa[i] + X.base.support(c.varkappa[i]));
  }
  c.rho = rho;
  c.varrho = varrho;
  c.bound = mode == LinearMode::high_probability ? c.c_eps * (c.noise + rho) + varrho : c.noise + rho + varrho;
  c.lmi_residual = certificate_residual(M, X, nrm, H, c, ells);
  c.iterations = sol.iterations;
  return c;
}

inline std::vector<int> all_ells(const ErrorNorm& nrm) {
  std::vector<int> e;
  for (int l = 0; l < nrm.L(); ++l) e.push_back(l);
  return e;
}

}  // namespace detail

// Upper bound on the eps-risk of w = H' omega over X.
inline RiskCertificate risk_bound_linear(const MatrixXd& H, const UncertaintyModel& model, const EllitopeSpec& X,
                                         const ErrorNorm& norm, double eps, const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, eps);
  require_shape(H, model.m(), model.nu(), "risk_bound_linear: H");
  EllitopeSpec Xc = whitened(X);
  UncertaintyModel M = Xc.P ? fold_image(model, *Xc.P) : model;
  Xc.P.reset();
  Program prog;
  detail::LinearProblem lp{&M, &Xc, &norm, eps, detail::LinearMode::high_probability, -1};
  auto v = detail::build_linear_program(prog, lp, H);
  auto sol = conic::solve_or_throw(prog, opt, "risk_bound_linear");
  return detail::extract_certificate(sol, v, M, Xc, norm, H, eps, lp.mode, detail::all_ells(norm));
}

// Minimizes the risk bound over H; the returned certificate is recomputed for the returned H.
inline LinearEstimate synthesize_linear(const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm,
                                        double eps, const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, eps);
  EllitopeSpec Xc = whitened(X);
  UncertaintyModel M = Xc.P ? fold_image(model, *Xc.P) : model;
  Xc.P.reset();
  Program prog;
  detail::LinearProblem lp{&M, &Xc, &norm, eps, detail::LinearMode::high_probability, -1};
  auto v = detail::build_linear_program(prog, lp, std::nullopt);
  auto sol = conic::solve_or_throw(prog, opt, "synthesize_linear");
  LinearEstimate r;
  r.H = sol.value(v.H);
  r.synthesis_objective = sol.objective;
  r.cert = risk_bound_linear(r.H, model, X, norm, eps, opt);
  return r;
}

// Root-mean-square risk bound for w = H' omega in the l-th norm component.
inline RiskCertificate risk_bound_expected(const MatrixXd& H, int ell, const UncertaintyModel& model, const EllitopeSpec& X,
                                           const ErrorNorm& norm, const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, 0.5);
  require(ell >= 0 && ell < norm.L(), "risk_bound_expected: ell out of range");
  require_shape(H, model.m(), model.nu(), "risk_bound_expected: H");
  EllitopeSpec Xc = whitened(X);
  UncertaintyModel M = Xc.P ? fold_image(model, *Xc.P) : model;
  Xc.P.reset();
  Program prog;
  detail::LinearProblem lp{&M, &Xc, &norm, 0.5, detail::LinearMode::expected, ell};
  auto v = detail::build_linear_program(prog, lp, H);
  auto sol = conic::solve_or_throw(prog, opt, "risk_bound_expected");
  return detail::extract_certificate(sol, v, M, Xc, norm, H, 0.0, lp.mode, {ell});
}

inline LinearEstimate synthesize_expected(int ell, const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm,
                                          const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, 0.5);
  require(ell >= 0 && ell < norm.L(), "synthesize_expected: ell out of range");
  EllitopeSpec Xc = whitened(X);
  UncertaintyModel M = Xc.P ? fold_image(model, *Xc.P) : model;
  Xc.P.reset();
  Program prog;
  detail::LinearProblem lp{&M, &Xc, &norm, 0.5, detail::LinearMode::expected, ell};
  auto v = detail::build_linear_program(prog, lp, std::nullopt);
  auto sol = conic::solve_or_throw(prog, opt, "synthesize_expected");
  LinearEstimate r;
  r.H = sol.value(v.H);
  r.synthesis_objective = sol.objective;
  r.cert = risk_bound_expected(r.H, ell, model, X, norm, opt);
  return r;
}

// argmin_z sum_k ||M (p_k - z)||_2 with M = metric (symmetric PSD), Weiszfeld iteration.
inline VectorXd geometric_median(const std::vector<VectorXd>& points, const MatrixXd& metric, int* iterations = nullptr) {
  require(!points.empty(), "geometric_median: no points");
  const int d = static_cast<int>(points[0].size());
  require_shape(metric, d, d, "geometric_median: metric");
  if (points.size() == 1) return points[0];

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(metric));
  const VectorXd& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<int> pos, nul;
  for (int i = 0; i < d; ++i) (std::abs(ev(i)) > 1e-12 * top ? pos : nul).push_back(i);
  const int r = static_cast<int>(pos.size());
  MatrixXd Vp(d, r), Vn(d, static_cast<Eigen::Index>(nul.size()));
  VectorXd sc(r);
  for (int i = 0; i < r; ++i) {
    Vp.col(i) = es.eigenvectors().col(pos[static_cast<size_t>(i)]);
    sc(i) = std::abs(ev(pos[static_cast<size_t>(i)]));
  }
  for (size_t i = 0; i < nul.size(); ++i) Vn.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(nul[i]);

  const int K = static_cast<int>(points.size());
  std::vector<VectorXd> u(static_cast<size_t>(K));
  VectorXd nmean = VectorXd::Zero(Vn.cols());
  for (int k = 0; k < K; ++k) {
    u[static_cast<size_t>(k)] = sc.asDiagonal() * (Vp.transpose() * points[static_cast<size_t>(k)]);
    nmean += Vn.transpose() * points[static_cast<size_t>(k)];
  }
  nmean /= K;

  VectorXd z = VectorXd::Zero(r);
  for (const auto& p : u) z += p;
  z /= K;
  double spread = 0.0;
  for (const auto& p : u) spread = std::max(spread, (p - z).norm());
  const double tol = 1e-9 * std::max(spread, 1e-300);
  const double coincide = 1e-12 * std::max(spread, 1e-300);

  bool converged = spread == 0.0;
  int it = 0;
  for (; it < 1000 && !converged; ++it) {
    VectorXd num = VectorXd::Zero(r), R = VectorXd::Zero(r);
    double den = 0.0;
    int eta = 0;
    for (const auto& p : u) {
      double dist = (p - z).norm();
      if (dist < coincide) {
        ++eta;
        continue;
      }
      num += p / dist;
      den += 1.0 / dist;
      R += (p - z) / dist;
    }
    VectorXd znew;
    if (eta > 0) {
      double rn = R.norm();
      if (rn <= eta) {
        converged = true;
        break;
      }
      VectorXd T = num / den;
      double w = std::min(1.0, eta / rn);
      znew = (1.0 - w) * T + w * z;
    } else {
      znew = num / den;
    }
    double step = (znew - z).norm();
    z = znew;
    if (step < tol) converged = true;
  }
  if (!converged) {
    Program prog;
    auto zv = prog.new_vars(r);
    LinExpr obj;
    for (const auto& p : u) {
      LinExpr t = prog.new_var();
      std::vector<LinExpr> x;
      for (int i = 0; i < r; ++i) x.push_back(LinExpr(p(i)) - zv[static_cast<size_t>(i)]);
      prog.add_soc(t, x);
      obj += t;
    }
    prog.minimize(obj);
    auto sol = conic::solve(prog);
    if (sol.ok()) z = sol.value(zv);
  }
  if (iterations) *iterations = it;
  VectorXd out = Vp * sc.cwiseInverse().asDiagonal() * z;
  if (Vn.cols() > 0) out += Vn * nmean;
  return out;
}

inline int reliable_min_repetitions(int L, double eps) {
  return static_cast<int>(std::ceil(std::log(static_cast<double>(L) / eps) / 0.1070));
}

struct ReliableEstimate {
  VectorXd w;
  std::vector<VectorXd> medians;
  bool empty_intersection = false;
  std::vector<std::string> warnings;
};

// Geometric-median aggregation of K linear estimates per norm component, then a point of the ball intersection.
inline ReliableEstimate reliable_estimate(const std::vector<MatrixXd>& H, const std::vector<VectorXd>& observations,
                                          const std::vector<double>& bounds, const ErrorNorm& norm, double eps) {
  const int L = norm.L();
  require(static_cast<int>(H.size()) == L && static_cast<int>(bounds.size()) == L, "reliable_estimate: need one H and bound per norm component");
  require(!observations.empty(), "reliable_estimate: no observations");
  ReliableEstimate out;
  const int K = static_cast<int>(observations.size());
  if (K < reliable_min_repetitions(L, eps))
    out.warnings.push_back("K=" + std::to_string(K) + " is below ln(L/eps)/0.1070; the risk guarantee does not apply");
  for (int l = 0; l < L; ++l) {
    std::vector<VectorXd> est;
    est.reserve(static_cast<size_t>(K));
    for (const auto& w : observations) est.push_back(H[static_cast<size_t>(l)].transpose() * w);
    out.medians.push_back(geometric_median(est, norm.R_sqrt[static_cast<size_t>(l)]));
  }
  auto inside_all = [&](const VectorXd& w) {
    for (int l = 0; l < L; ++l)
      if ((norm.R_sqrt[static_cast<size_t>(l)] * (out.medians[static_cast<size_t>(l)] - w)).norm() >
          4.0 * bounds[static_cast<size_t>(l)] * (1.0 + 1e-12))
        return false;
    return true;
  };
  for (const auto& z : out.medians)
    if (inside_all(z)) {
      out.w = z;
      return out;
    }
  const int nu = norm.nu();
  Program prog;
  auto w = prog.new_vars(nu);
  LinExpr t = prog.new_var();
  for (int l = 0; l < L; ++l) {
    const MatrixXd& Rs = norm.R_sqrt[static_cast<size_t>(l)];
    std::vector<LinExpr> x;
    for (int i = 0; i < nu; ++i) {
      LinExpr e(Rs.row(i).dot(out.medians[static_cast<size_t>(l)]));
      for (int j = 0; j < nu; ++j)
        if (Rs(i, j) != 0.0) e.add_scaled(w[static_cast<size_t>(j)], -Rs(i, j));
      x.push_back(e);
    }
    prog.add_soc(4.0 * bounds[static_cast<size_t>(l)] + t, x);
  }
  prog.add_nonneg(t + 1.0);
  prog.minimize(t);
  auto sol = conic::solve(prog);
  double scale = 1e-9 * std::max(1.0, *std::max_element(bounds.begin(), bounds.end()));
  if (sol.ok() && sol.value(t) <= scale) {
    out.w = sol.value(w);
    if (!inside_all(out.w)) {
      double tt = sol.value(t);
      if (tt > 0.0) out.warnings.push_back("intersection point found within solver tolerance");
    }
    return out;
  }
  out.empty_intersection = true;
  out.w = VectorXd::Zero(nu);
  return out;
}

enum class ErasureCalibration { subgaussian, second_moment };

// Optimal sub-Gaussian variance proxy of a centred Bernoulli(p) variable.
inline double bernoulli_subgaussian_proxy(double p) {
  if (std::abs(p - 0.5) < 1e-12) return 0.25;
  return (1.0 - 2.0 * p) / (2.0 * std::log((1.0 - p) / p));
}

// Random column zeroing with probability gamma: A[eta] = (1 - gamma) Abar + sum_alpha eta_alpha A_alpha.
inline UncertaintyModel column_erasure_model(const MatrixXd& Abar, const MatrixXd& B, double sigma, double gamma,
                                             ErasureCalibration cal = ErasureCalibration::second_moment) {
  require(gamma > 0.0 && gamma < 1.0, "column_erasure_model: gamma must lie in (0,1)");
  double rho = cal == ErasureCalibration::second_moment ? 1.0 / std::sqrt(gamma * (1.0 - gamma))
                                                       : 1.0 / std::sqrt(bernoulli_subgaussian_proxy(gamma));
  UncertaintyModel m;
  m.A = (1.0 - gamma) * Abar;
  m.B = B;
  m.sigma = sigma;
  for (int a = 0; a < Abar.cols(); ++a) {
    MatrixXd Aa = MatrixXd::Zero(Abar.rows(), Abar.cols());
    Aa.col(a) = Abar.col(a) / rho;
    m.A_alpha.push_back(Aa);
  }
  m.perturbation_law = "column-erasure";
  m.erasure_gamma = gamma;
  m.erasure_rho = rho;
  return m;
}

}  // namespace robinv
