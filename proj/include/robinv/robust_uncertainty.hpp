#pragma once

#include "robinv/linear_estimator.hpp"
#include "robinv/polyhedral_estimator.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace robinv {

// L' Delta R with ||Delta||_{2,2} <= 1; L is p x m, R is q x n.
struct GeneralBlock {
  MatrixXd L, R;
};

// D[eta] = sum_s delta_s A_s + sum_t L_t' Delta_t R_t, |delta_s| <= 1, ||Delta_t|| <= 1.
struct StructuredUncertainty {
  std::vector<MatrixXd> scalar;
  std::vector<GeneralBlock> general;

  int m() const {
    if (!scalar.empty()) return static_cast<int>(scalar[0].rows());
    return general.empty() ? 0 : static_cast<int>(general[0].L.cols());
  }
  int n() const {
    if (!scalar.empty()) return static_cast<int>(scalar[0].cols());
    return general.empty() ? 0 : static_cast<int>(general[0].R.cols());
  }
  int S() const { return static_cast<int>(scalar.size()); }
  int T() const { return static_cast<int>(general.size()); }
  bool empty() const { return scalar.empty() && general.empty(); }

  void check() const {
    const int mm = m(), nn = n();
    for (const auto& A : scalar) require_shape(A, mm, nn, "structured uncertainty: scalar block");
    for (const auto& g : general) {
      require(g.L.cols() == mm && g.R.cols() == nn, "structured uncertainty: general block has wrong width");
      require(g.L.rows() >= 1 && g.R.rows() >= 1, "structured uncertainty: empty general block");
      require(!g.L.isZero(0.0), "structured uncertainty: L blocks must be nonzero");
    }
  }

  MatrixXd instance(const VectorXd& delta, const std::vector<MatrixXd>& Delta) const {
    require(delta.size() == S() && static_cast<int>(Delta.size()) == T(), "instance: wrong number of perturbations");
    MatrixXd D = MatrixXd::Zero(m(), n());
    for (int s = 0; s < S(); ++s) D += delta(s) * scalar[static_cast<size_t>(s)];
    for (int t = 0; t < T(); ++t) {
      const auto& g = general[static_cast<size_t>(t)];
      D += g.L.transpose() * Delta[static_cast<size_t>(t)] * g.R;
    }
    return D;
  }

  StructuredUncertainty scaled(double c) const {
    StructuredUncertainty u = *this;
    for (auto& A : u.scalar) A *= c;
    for (auto& g : u.general) g.L *= c;
    return u;
  }

  // Largest numerical rank of a scalar block; 0 without scalar blocks.
  int kappa() const {
    int k = 0;
    for (const auto& A : scalar) k = std::max(k, numeric_rank(A));
    return k;
  }

  static StructuredUncertainty box(const std::vector<MatrixXd>& A_alpha) {
    StructuredUncertainty u;
    u.scalar = A_alpha;
    return u;
  }
};

struct TightnessFactors {
  static double theta(int k) {
    require(k >= 0, "theta: negative argument");
    const double pi = std::acos(-1.0);
    static const double table[] = {0.0, 1.0, pi / 2.0, 1.7348, 2.0};
    return k <= 4 ? table[k] : 0.5 * pi * std::sqrt(static_cast<double>(k));
  }
  static double varkappa(int J) { return J <= 1 ? 1.0 : 2.5 * std::sqrt(std::log(2.0 * J)); }
  static double varsigma_bar(int J) { return std::sqrt(2.0 * std::log(5.0 * std::max(J, 1))); }
  static double varsigma(int J) { return 2.0 * std::sqrt(2.0 * std::log(2.0 * std::max(J, 1))); }
  static double block_factor(int kappa) { return std::max(theta(2 * kappa), std::acos(-1.0) / 2.0); }
};

namespace detail {

// Multipliers of one side: an upper bound sum (dim x dim) on the quadratic form and phi of the weights.
struct SideCertificate {
  AffMat sum;
  LinExpr phi;
};

inline SideCertificate ellitope_side(Program& prog, const EllitopeSpec& e) {
  auto mu = prog.new_nonnegs(e.K());
  return {weighted_sum(mu, e.T), support_bound(prog, e.base, mu)};
}

// [Tr(V S^j S^l)]_{jl} for block i.
inline AffMat lift_adjoint_expr(const SpectratopeSpec& s, int i, const AffMat& V) {
  const auto& Si = s.S[static_cast<size_t>(i)];
  const int N = s.N();
  AffMat out(N, N);
  for (int j = 0; j < N; ++j)
    for (int l = j; l < N; ++l) {
      MatrixXd prod = Si[static_cast<size_t>(l)] * Si[static_cast<size_t>(j)];
      LinExpr e = conic::inner(prod, V);
      out(j, l) = e;
      out(l, j) = e;
    }
  return out;
}

inline SideCertificate spectratope_side(Program& prog, const SpectratopeSpec& s) {
  const int N = s.N();
  AffMat sum(N, N);
  std::vector<LinExpr> tr;
  for (int i = 0; i < s.blocks(); ++i) {
    AffMat V = prog.new_psd_matrix(s.d(i));
    sum += lift_adjoint_expr(s, i, V);
    tr.push_back(trace(V));
  }
  sum.compress();
  return {sum, support_bound(prog, s.base, tr)};
}

inline SideCertificate euclidean_side(Program& prog, int dim) {
  LinExpr mu = prog.new_nonneg();
  return {identity_times(mu, dim), mu};
}

// Uncertain matrix seen through the side factors: Q'A_sP (M x N), L_tQ (p_t x M), R_tP (q_t x N).
struct RobustNormData {
  std::vector<AffMat> scalar;
  std::vector<AffMat> left;
  std::vector<MatrixXd> right;
};

inline RobustNormData robust_data(const StructuredUncertainty& u, const MatrixXd& Q, const MatrixXd& P) {
  RobustNormData d;
  for (const auto& A : u.scalar) {
    MatrixXd C = Q.transpose() * A * P;
    if (!C.isZero(0.0)) d.scalar.push_back(AffMat::constant(C));
  }
  for (const auto& g : u.general) {
    MatrixXd l = g.L * Q, r = g.R * P;
    if (l.isZero(0.0) || r.isZero(0.0)) continue;
    d.left.push_back(AffMat::constant(l));
    d.right.push_back(compress_rows(r));
  }
  return d;
}

// 1/2 [phi_Z + phi_Y] subject to the block certificates; returns the objective expression.
inline LinExpr add_robust_norm(Program& prog, const RobustNormData& d, const SideCertificate& z, const SideCertificate& y) {
  const int M = z.sum.rows(), N = y.sum.rows();
  AffMat Us(M, M), Vs(N, N);
  for (const auto& A : d.scalar) {
    AffMat U = prog.new_sym_matrix(M), V = prog.new_sym_matrix(N);
    prog.add_psd(conic::build_lmi_block(U, -1.0 * A, V));
    Us += U;
    Vs += V;
  }
  for (size_t t = 0; t < d.left.size(); ++t) {
    const AffMat& Lq = d.left[t];
    AffMat U = prog.new_sym_matrix(M);
    LinExpr lam = prog.new_nonneg();
    prog.add_psd(conic::build_lmi_block(U, -1.0 * Lq.transpose(), identity_times(lam, Lq.rows())));
    Us += U;
    Vs.add_scaled(lam, d.right[t].transpose() * d.right[t]);
  }
  prog.add_psd(z.sum - Us);
  prog.add_psd(y.sum - Vs);
  return 0.5 * (z.phi + y.phi);
}

inline bool trivially_zero(const RobustNormData& d) { return d.scalar.empty() && d.left.empty(); }

inline MatrixXd factor_or_identity(const std::optional<MatrixXd>& P, int N) { return P ? *P : MatrixXd::Identity(N, N); }

inline double spectratope_linear_max(const SpectratopeSpec& s, const VectorXd& c, VectorXd* argmax = nullptr,
                                     const conic::SolverOptions& opt = {}) {
  if (c.isZero(0.0)) {
    if (argmax) *argmax = VectorXd::Zero(s.N());
    return 0.0;
  }
  SpectratopeSpec b = s;
  b.P.reset();
  Program prog;
  auto y = prog.new_vars(b.N());
  add_spectratope_membership(prog, b, y);
  LinExpr obj;
  for (int i = 0; i < b.N(); ++i) obj.add_scaled(y[static_cast<size_t>(i)], -c(i));
  prog.minimize(obj);
  auto sol = conic::solve_or_throw(prog, opt, "spectratope_linear_max");
  VectorXd yv = sol.value(y);
  double g = gauge(yv, b);
  if (g > 1.0) yv /= g;
  if (argmax) *argmax = yv;
  return c.dot(yv);
}

inline double set_linear_max(const EllitopeSpec& e, const VectorXd& c, VectorXd* argmax) {
  EllitopeSpec b = e;
  b.P.reset();
  if (c.isZero(0.0)) {
    if (argmax) *argmax = VectorXd::Zero(b.N());
    return 0.0;
  }
  return ellitope_linear_max(b, c, argmax);
}
inline double set_linear_max(const SpectratopeSpec& s, const VectorXd& c, VectorXd* argmax) {
  return spectratope_linear_max(s, c, argmax);
}

template <class Rng>
VectorXd random_unit(int n, Rng& g) {
  std::normal_distribution<double> nd;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(g);
  double s = v.norm();
  return s > 0.0 ? VectorXd(v / s) : v;
}

}  // namespace detail

struct RobustNormBound {
  double value = 0.0;
  double factor = 1.0;
  int iterations = 0;
};

// Upper bound on max ||D[eta]||_{X,B} over the uncertainty; X = P Y and B_* = Q Z are ellitopes.
inline RobustNormBound robust_norm_bound(const StructuredUncertainty& u, const EllitopeSpec& X, const EllitopeSpec& Bstar,
                                         const conic::SolverOptions& opt = {}) {
  u.check();
  RobustNormBound r;
  r.factor = TightnessFactors::varkappa(X.K()) * TightnessFactors::varkappa(Bstar.K()) * TightnessFactors::block_factor(u.kappa());
  if (u.empty()) return r;
  require(X.n() == u.n() && Bstar.n() == u.m(), "robust_norm_bound: set dimensions differ from the uncertain matrix");
  EllitopeSpec Y = whitened(X), Z = whitened(Bstar);
  auto d = detail::robust_data(u, *Z.P, *Y.P);
  if (detail::trivially_zero(d)) return r;
  Program prog;
  auto zs = detail::ellitope_side(prog, Z);
  auto ys = detail::ellitope_side(prog, Y);
  prog.minimize(detail::add_robust_norm(prog, d, zs, ys));
  auto sol = conic::solve_or_throw(prog, opt, "robust_norm_bound");
  r.value = std::max(sol.objective, 0.0);
  r.iterations = sol.iterations;
  return r;
}

// Same bound with spectratopes on both sides.
inline RobustNormBound robust_norm_bound_spectr(const StructuredUncertainty& u, const SpectratopeSpec& X, const SpectratopeSpec& Bstar,
                                                const conic::SolverOptions& opt = {}) {
  u.check();
  RobustNormBound r;
  r.factor = TightnessFactors::varsigma(X.D()) * TightnessFactors::varsigma(Bstar.D()) * TightnessFactors::block_factor(u.kappa());
  if (u.empty()) return r;
  require(X.n() == u.n() && Bstar.n() == u.m(), "robust_norm_bound_spectr: set dimensions differ from the uncertain matrix");
  auto d = detail::robust_data(u, detail::factor_or_identity(Bstar.P, Bstar.N()), detail::factor_or_identity(X.P, X.N()));
  if (detail::trivially_zero(d)) return r;
  Program prog;
  auto zs = detail::spectratope_side(prog, Bstar);
  auto ys = detail::spectratope_side(prog, X);
  prog.minimize(detail::add_robust_norm(prog, d, zs, ys));
  auto sol = conic::solve_or_throw(prog, opt, "robust_norm_bound_spectr");
  r.value = std::max(sol.objective, 0.0);
  r.iterations = sol.iterations;
  return r;
}

// Lower bound on max z'Q'D[eta]Py by alternating maximization from seeded starts.
template <class Set>
double robust_norm_oracle(const StructuredUncertainty& u, const Set& X, const Set& Bstar, int budget = 20, std::uint64_t seed = 1) {
  u.check();
  require(budget >= 1, "robust_norm_oracle: budget must be positive");
  if (u.empty()) return 0.0;
  const MatrixXd P = detail::factor_or_identity(X.P, X.N()), Q = detail::factor_or_identity(Bstar.P, Bstar.N());
  const int S = u.S(), T = u.T();
  std::vector<double> best(static_cast<size_t>(budget), 0.0);
  parallel_for(budget, [&](int k) {
    auto g = make_stream(seed, static_cast<std::uint64_t>(k));
    std::bernoulli_distribution coin(0.5);
    VectorXd delta(S);
    for (int s = 0; s < S; ++s) delta(s) = coin(g) ? 1.0 : -1.0;
    std::vector<MatrixXd> Delta;
    for (const auto& gb : u.general) {
      VectorXd a = detail::random_unit(static_cast<int>(gb.L.rows()), g), b = detail::random_unit(static_cast<int>(gb.R.rows()), g);
      Delta.push_back(a * b.transpose());
    }
    VectorXd y, z;
    detail::set_linear_max(X, detail::random_unit(X.N(), g), &y);
    double val = 0.0;
    for (int it = 0; it < 100; ++it) {
      MatrixXd D = u.instance(delta, Delta);
      VectorXd x = P * y;
      detail::set_linear_max(Bstar, Q.transpose() * (D * x), &z);
      VectorXd w = Q * z;
      for (int s = 0; s < S; ++s) delta(s) = w.dot(u.scalar[static_cast<size_t>(s)] * x) >= 0.0 ? 1.0 : -1.0;
      for (int t = 0; t < T; ++t) {
        const auto& gb = u.general[static_cast<size_t>(t)];
        VectorXd a = gb.L * w, b = gb.R * x;
        double na = a.norm(), nb = b.norm();
        if (na > 0.0 && nb > 0.0) Delta[static_cast<size_t>(t)] = a * b.transpose() / (na * nb);
      }
      D = u.instance(delta, Delta);
      double nv = detail::set_linear_max(X, P.transpose() * (D.transpose() * w), &y);
      if (nv <= val * (1.0 + 1e-10) && it > 0) {
        val = std::max(val, nv);
        break;
      }
      val = std::max(val, nv);
    }
    best[static_cast<size_t>(k)] = val;
  });
  return *std::max_element(best.begin(), best.end());
}

namespace detail {

// Induced uncertain matrix R^{1/2} H' D[eta] P for norm component l (H as expressions).
inline RobustNormData snb_data(const AffMat& Ht, const MatrixXd& Rs, const StructuredUncertainty& u, const MatrixXd& P) {
  RobustNormData d;
  AffMat RHt = Rs * Ht;
  AffMat HR = RHt.transpose();
  for (const auto& A : u.scalar) d.scalar.push_back(RHt * MatrixXd(A * P));
  for (const auto& g : u.general) {
    MatrixXd r = g.R * P;
    if (r.isZero(0.0)) continue;
    d.left.push_back(g.L * HR);
    d.right.push_back(compress_rows(r));
  }
  return d;
}

inline bool constant_zero(const AffMat& a) {
  for (const auto& e : a.flatten())
    if (!e.is_zero()) return false;
  return true;
}

inline RobustNormData prune(RobustNormData d) {
  RobustNormData r;
  for (auto& s : d.scalar)
    if (!constant_zero(s)) r.scalar.push_back(std::move(s));
  for (size_t t = 0; t < d.left.size(); ++t)
    if (!constant_zero(d.left[t])) {
      r.left.push_back(std::move(d.left[t]));
      r.right.push_back(std::move(d.right[t]));
    }
  return r;
}

// lambda + phi(mu) >= bias term of component l.
inline LinExpr add_bias_bound(Program& prog, const AffMat& Ht, const MatrixXd& Rs, const UncertaintyModel& M, const EllitopeSpec& Y) {
  AffMat bias = AffMat::constant(Rs * M.B);
  bias -= (Rs * Ht) * M.A;
  bias *= 0.5;
  LinExpr lam = prog.new_var();
  auto side = ellitope_side(prog, Y);
  prog.add_psd(conic::build_lmi_block(identity_times(lam, bias.rows()), bias, side.sum));
  return lam + side.phi;
}

}  // namespace detail

// Upper bound on max_{x, eta} ||H' D[eta] x|| for an ellitope X.
inline double snb_bound(const MatrixXd& H, const StructuredUncertainty& u, const EllitopeSpec& X, const ErrorNorm& norm,
                        const conic::SolverOptions& opt = {}) {
  u.check();
  if (u.empty() || H.isZero(0.0)) return 0.0;
  require(H.rows() == u.m() && H.cols() == norm.nu(), "snb_bound: H has wrong shape");
  require(X.n() == u.n(), "snb_bound: signal set dimension differs from the uncertainty");
  EllitopeSpec Y = whitened(X);
  const AffMat Ht = AffMat::constant(H.transpose());
  double best = 0.0;
  for (int l = 0; l < norm.L(); ++l) {
    auto d = detail::prune(detail::snb_data(Ht, norm.R_sqrt[static_cast<size_t>(l)], u, *Y.P));
    if (detail::trivially_zero(d)) continue;
    Program prog;
    auto zs = detail::euclidean_side(prog, norm.nu());
    auto ys = detail::ellitope_side(prog, Y);
    prog.minimize(detail::add_robust_norm(prog, d, zs, ys));
    auto sol = conic::solve_or_throw(prog, opt, "snb_bound");
    best = std::max(best, sol.objective);
  }
  return std::max(best, 0.0);
}

inline double snb_factor(const StructuredUncertainty& u, const EllitopeSpec& X) {
  return TightnessFactors::varkappa(X.K()) * TightnessFactors::block_factor(u.kappa());
}

// max_l of the bias bound max_x ||R_l^{1/2}(B - H'A)x||.
inline double bias_bound(const MatrixXd& H, const UncertaintyModel& model, const EllitopeSpec& X, const ErrorNorm& norm,
                         const conic::SolverOptions& opt = {}) {
  EllitopeSpec Y = whitened(X);
  UncertaintyModel M = fold_image(model, *Y.P);
  Y.P.reset();
  double best = 0.0;
  for (int l = 0; l < norm.L(); ++l) {
    const MatrixXd& Rs = norm.R_sqrt[static_cast<size_t>(l)];
    MatrixXd C = detail::compress_rows(Rs * (M.B - H.transpose() * M.A));
    if (C.isZero(0.0)) continue;
    Program prog;
    LinExpr lam = prog.new_var();
    auto side = detail::ellitope_side(prog, Y);
    prog.add_psd(conic::build_lmi_block(identity_times(lam, static_cast<int>(C.rows())), AffMat::constant(0.5 * C), side.sum));
    prog.minimize(lam + side.phi);
    auto sol = conic::solve_or_throw(prog, opt, "bias_bound");
    best = std::max(best, sol.objective);
  }
  return std::max(best, 0.0);
}

inline double ubb_noise_factor(int L, double eps) { return 1.0 + std::sqrt(2.0 * std::log(L / eps)); }

struct LinearUbbCertificate {
  double bound = 0.0;
  double noise = 0.0;  // c_eps sigma max_l ||H R_l^{1/2}||_F
  double snb = 0.0;
  double bias = 0.0;
  double c_eps = 1.0;
  double snb_factor = 1.0;
};

struct LinearUbbEstimate {
  MatrixXd H;
  LinearUbbCertificate cert;
  double objective = 0.0;
  int iterations = 0;
};

namespace detail {

inline StructuredUncertainty with_box_blocks(const StructuredUncertainty& u, const UncertaintyModel& model) {
  StructuredUncertainty w = u;
  if (w.empty() && model.q() == 0) return w;
  for (const auto& A : model.A_alpha) w.scalar.push_back(A);
  w.check();
  require(w.m() == model.m() && w.n() == model.n(), "uncertainty dimensions differ from the model");
  return w;
}

}  // namespace detail

// Noise, uncertainty and bias terms for w = H' omega; model.A_alpha act as extra scalar blocks.
inline LinearUbbCertificate risk_bound_linear_ubb(const MatrixXd& H, const UncertaintyModel& model, const StructuredUncertainty& u,
                                                  const EllitopeSpec& X, const ErrorNorm& norm, double eps,
                                                  const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, eps);
  require_shape(H, model.m(), model.nu(), "risk_bound_linear_ubb: H");
  StructuredUncertainty w = detail::with_box_blocks(u, model);
  LinearUbbCertificate c;
  c.c_eps = ubb_noise_factor(norm.L(), eps);
  double frob = 0.0;
  for (const auto& Rs : norm.R_sqrt) frob = std::max(frob, (H * Rs).norm());
  c.noise = c.c_eps * model.sigma * frob;
  c.snb = snb_bound(H, w, X, norm, opt);
  c.snb_factor = snb_factor(w, X);
  c.bias = bias_bound(H, model, X, norm, opt);
  c.bound = c.noise + c.snb + c.bias;
  return c;
}

// Minimizes noise + structured-uncertainty + bias bounds jointly over H.
inline LinearUbbEstimate synthesize_linear_ubb(const UncertaintyModel& model, const StructuredUncertainty& u, const EllitopeSpec& X,
                                               const ErrorNorm& norm, double eps, const conic::SolverOptions& opt = {}) {
  detail::check_linear_inputs(model, X, norm, eps);
  StructuredUncertainty w = detail::with_box_blocks(u, model);
  EllitopeSpec Y = whitened(X);
  UncertaintyModel M = fold_image(model, *Y.P);
  EllitopeSpec Yb = Y;
  Yb.P.reset();
  Program prog;
  AffMat H = prog.new_matrix(model.m(), model.nu());
  AffMat Ht = H.transpose();
  LinExpr t = prog.new_var(), s = prog.new_var(), r = prog.new_var();
  for (int l = 0; l < norm.L(); ++l) {
    const MatrixXd& Rs = norm.R_sqrt[static_cast<size_t>(l)];
    if (model.sigma > 0.0) prog.add_soc(t, entries(H * Rs));
    if (!w.empty()) {
      auto d = detail::snb_data(Ht, Rs, w, *Y.P);
      auto zs = detail::euclidean_side(prog, norm.nu());
      auto ys = detail::ellitope_side(prog, Yb);
      prog.add_le(detail::add_robust_norm(prog, d, zs, ys), s);
    }
    prog.add_le(detail::add_bias_bound(prog, Ht, Rs, M, Yb), r);
  }
  const double ce = ubb_noise_factor(norm.L(), eps);
  LinExpr obj = r;
  if (model.sigma > 0.0) obj += ce * model.sigma * t;
  if (!w.empty()) obj += s;
  prog.minimize(obj);
  auto sol = conic::solve_or_throw(prog, opt, "synthesize_linear_ubb");
  LinearUbbEstimate e;
  e.H = sol.value(H);
  e.objective = sol.objective;
  e.iterations = sol.iterations;
  e.cert = risk_bound_linear_ubb(e.H, model, u, X, norm, eps, opt);
  return e;
}

// Upper bound on max_{x in X, D in scenarios} ||H' D x||; exact for an ellipsoid X.
inline double scenario_bound(const MatrixXd& H, const std::vector<MatrixXd>& scenarios, const EllitopeSpec& X, const ErrorNorm& norm,
                             const conic::SolverOptions& opt = {}) {
  require(!scenarios.empty(), "scenario_bound: no scenarios");
  require(X.n() == scenarios[0].cols(), "scenario_bound: signal set dimension differs from scenarios");
  require(H.rows() == scenarios[0].rows() && H.cols() == norm.nu(), "scenario_bound: H has wrong shape");
  auto F = detail::ellipsoid_factor(X);
  EllitopeSpec Y = whitened(X);
  double best = 0.0;
  for (const auto& D : scenarios)
    for (int l = 0; l < norm.L(); ++l) {
      MatrixXd Mq = norm.R_sqrt[static_cast<size_t>(l)] * H.transpose() * D;
      if (F) {
        best = std::max(best, spectral_norm(Mq * *F));
        continue;
      }
      MatrixXd C = detail::compress_rows(Mq * *Y.P);
      if (C.isZero(0.0)) continue;
      EllitopeSpec Yb = Y;
      Yb.P.reset();
      Program prog;
      LinExpr lam = prog.new_var();
      auto side = detail::ellitope_side(prog, Yb);
      prog.add_psd(conic::build_lmi_block(identity_times(lam, static_cast<int>(C.rows())), AffMat::constant(0.5 * C), side.sum));
      prog.minimize(lam + side.phi);
      best = std::max(best, conic::solve_or_throw(prog, opt, "scenario_bound").objective);
    }
  return best;
}

// Scenarios given as perturbation vectors with D[eta] = sum_a eta_a A_a.
inline double scenario_bound(const MatrixXd& H, const std::vector<VectorXd>& etas, const std::vector<MatrixXd>& A_alpha,
                             const EllitopeSpec& X, const ErrorNorm& norm, const conic::SolverOptions& opt = {}) {
  require(!A_alpha.empty(), "scenario_bound: empty perturbation map");
  std::vector<MatrixXd> D;
  for (const auto& e : etas) {
    require(e.size() == static_cast<Eigen::Index>(A_alpha.size()), "scenario_bound: scenario length differs from q");
    MatrixXd d = MatrixXd::Zero(A_alpha[0].rows(), A_alpha[0].cols());
    for (size_t a = 0; a < A_alpha.size(); ++a) d += e(static_cast<Eigen::Index>(a)) * A_alpha[a];
    D.push_back(d);
  }
  return scenario_bound(H, D, X, norm, opt);
}

// Upper bound on max_{eta in U, x in X} eta' A[h] x, A[h] = [h'A_1; ...; h'A_q].
inline double linform_bound(const VectorXd& h, const std::vector<MatrixXd>& A_alpha, const SpectratopeSpec& U, const SpectratopeSpec& X,
                            const conic::SolverOptions& opt = {}) {
  if (A_alpha.empty()) return 0.0;
  require(U.n() == static_cast<int>(A_alpha.size()), "linform_bound: uncertainty set dimension differs from q");
  require(X.n() == A_alpha[0].cols() && h.size() == A_alpha[0].rows(), "linform_bound: dimension mismatch");
  MatrixXd Ah = detail::calA(h, A_alpha);
  if (Ah.isZero(0.0)) return 0.0;
  StructuredUncertainty u;
  u.scalar.push_back(Ah);
  return robust_norm_bound_spectr(u, X, U, opt).value;
}

inline double linform_factor(const SpectratopeSpec& U, const SpectratopeSpec& X) {
  return TightnessFactors::varsigma_bar(X.D()) * TightnessFactors::varsigma_bar(U.D());
}

// Risk bound of the polyhedral estimate under eta in U; columns must pass the sufficient admissibility test with delta = eps / columns.
inline PolyRiskReport risk_bound_poly_ubb(const ContrastMatrix& H, const UncertaintyModel& model, const SpectratopeSpec& U,
                                          const SpectratopeSpec& X, const ErrorNorm& norm, double eps,
                                          const conic::SolverOptions& opt = {}, bool check_admissibility = true) {
  model.check();
  require(eps > 0.0 && eps < 1.0, "risk_bound_poly_ubb: eps must lie in (0,1)");
  require(H.L() == norm.L(), "risk_bound_poly_ubb: need one contrast block per norm component");
  require(norm.nu() == model.nu(), "risk_bound_poly_ubb: error norm dimension differs from B rows");
  require(X.n() == model.n(), "risk_bound_poly_ubb: signal set dimension differs from A columns");
  for (const auto& b : H.blocks) require(b.rows() == model.m(), "risk_bound_poly_ubb: contrast blocks need m rows");
  PolyRiskReport r;
  r.eps = eps;
  r.delta = eps / std::max(H.columns(), 1);
  if (check_admissibility && H.columns() > 0) {
    MatrixXd Hf = H.full();
    const double sc = model.sigma * chi(r.delta);
    for (int j = 0; j < Hf.cols(); ++j) {
      double g = std::max(sc * Hf.col(j).norm(), 2.0 * linform_bound(Hf.col(j), model.A_alpha, U, X, opt));
      r.max_gauge = std::max(r.max_gauge, g);
      if (g > 1.0 + 1e-6) r.inadmissible.push_back(j);
    }
    if (!r.inadmissible.empty()) {
      r.admissible = false;
      r.bound = std::numeric_limits<double>::infinity();
      r.message = std::to_string(r.inadmissible.size()) + " contrast column(s) fail the sufficient admissibility test (max gauge " +
                  std::to_string(r.max_gauge) + "); refusing to certify";
      return r;
    }
  }
  const MatrixXd P = detail::factor_or_identity(X.P, X.N());
  SpectratopeSpec Yb = X;
  Yb.P.reset();
  const MatrixXd AP = model.A * P, BP = model.B * P;
  Program prog;
  LinExpr rho = prog.new_var();
  struct Vars {
    LinExpr lam;
    std::vector<LinExpr> ups;
    AffMat sum;
    LinExpr phi;
    MatrixXd C, AH;
    bool active = false;
  };
  std::vector<Vars> vars(static_cast<size_t>(H.L()));
  for (int l = 0; l < H.L(); ++l) {
    Vars& v = vars[static_cast<size_t>(l)];
    v.C = detail::compress_rows(norm.R_sqrt[static_cast<size_t>(l)] * BP);
    v.AH = AP.transpose() * H.blocks[static_cast<size_t>(l)];
    if (v.C.isZero(0.0)) continue;
    v.active = true;
    v.lam = prog.new_var();
    v.ups = prog.new_nonnegs(static_cast<int>(v.AH.cols()));
    auto side = detail::spectratope_side(prog, Yb);
    v.sum = side.sum;
    v.phi = side.phi;
    AffMat D = side.sum;
    for (int j = 0; j < v.AH.cols(); ++j) D.add_scaled(v.ups[static_cast<size_t>(j)], v.AH.col(j) * v.AH.col(j).transpose());
    D.compress();
    prog.add_psd(conic::build_lmi_block(identity_times(v.lam, static_cast<int>(v.C.rows())), AffMat::constant(0.5 * v.C), D));
    prog.add_le(v.lam + side.phi + sum(v.ups), rho);
  }
  prog.add_nonneg(rho);
  prog.minimize(2.0 * rho);
  auto sol = conic::solve_or_throw(prog, opt, "risk_bound_poly_ubb");
  r.iterations = sol.iterations;
  r.lmi_residual = std::numeric_limits<double>::infinity();
  const int N = Yb.N();
  double rh = 0.0;
  for (int l = 0; l < H.L(); ++l) {
    const Vars& v = vars[static_cast<size_t>(l)];
    if (!v.active) {
      r.lambda.push_back(0.0);
      r.upsilon.push_back(VectorXd::Zero(v.AH.cols()));
      continue;
    }
    double lam = std::max(sol.value(v.lam), 0.0);
    VectorXd ups = sol.value(v.ups).cwiseMax(0.0);
    MatrixXd D = sym(v.sum.value(sol.x)) + v.AH * ups.asDiagonal() * v.AH.transpose();
    const auto c = static_cast<Eigen::Index>(v.C.rows());
    MatrixXd blk(c + N, c + N);
    blk << lam * MatrixXd::Identity(c, c), 0.5 * v.C, 0.5 * v.C.transpose(), D;
    r.lmi_residual = std::min(r.lmi_residual, lambda_min(blk));
    rh = std::max(rh, lam + std::max(sol.value(v.phi), 0.0) + ups.sum());
    r.lambda.push_back(lam);
    r.upsilon.push_back(ups);
  }
  if (!std::isfinite(r.lmi_residual)) r.lmi_residual = 0.0;
  r.rho = rh;
  r.bound = 2.0 * rh;
  return r;
}

// Ball signals and ball perturbations: the perturbation constant becomes 2, the noise constant stays chi(delta).
inline PolyEstimate synthesize_poly_ubb_ball(const UncertaintyModel& model, const ErrorNorm& norm, double eps, int trials = 20,
                                             std::uint64_t seed = 1, const conic::SolverOptions& opt = {}) {
  PolySynthOptions po;
  po.chi_perturbation = 2.0;
  po.solver = opt;
  return synthesize_poly(model, EllitopeSpec::unit_ball(model.n()), norm, eps, trials, seed, po);
}

}  // namespace robinv
