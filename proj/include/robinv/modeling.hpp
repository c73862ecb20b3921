#pragma once

#include "robinv/conic.hpp"
#include "robinv/geometry.hpp"

#include <vector>

namespace robinv {

using conic::AffMat;
using conic::LinExpr;
using conic::Program;

// Upper bound expression for phi(mu) with mu >= 0 (nonnegativity imposed by caller).
inline LinExpr support_bound(Program& prog, const BaseSet& base, const std::vector<LinExpr>& mu) {
  require(static_cast<int>(mu.size()) == base.K, "support_bound: dimension mismatch");
  VectorXd s = base.scales();
  auto linear_sum = [&] {
    LinExpr e;
    for (int k = 0; k < base.K; ++k) e.add_scaled(mu[static_cast<size_t>(k)], s(k));
    e.compress();
    return e;
  };
  auto maximum = [&] {
    if (base.K == 1) return s(0) * mu[0];
    LinExpr t = prog.new_var();
    for (int k = 0; k < base.K; ++k) prog.add_le(s(k) * mu[static_cast<size_t>(k)], t);
    return t;
  };
  switch (base.kind) {
    case BaseKind::box: return linear_sum();
    case BaseKind::simplex: return maximum();
    case BaseKind::pball: {
      double q = base.q();
      if (std::isinf(q)) return linear_sum();
      if (q == 1.0) return maximum();
      if (q == 2.0) {
        if (base.K == 1) return s(0) * mu[0];
        LinExpr t = prog.new_var();
        std::vector<LinExpr> x;
        for (int k = 0; k < base.K; ++k) x.push_back(s(k) * mu[static_cast<size_t>(k)]);
        prog.add_soc(t, x);
        return t;
      }
      throw std::invalid_argument("support_bound: p-ball with p/2 outside {1, 2, inf} is not conic-representable here");
    }
  }
  return LinExpr();
}

// r in radius * base, with r >= 0 imposed here.
inline void add_base_membership(Program& prog, const BaseSet& base, const std::vector<LinExpr>& r, const LinExpr& radius) {
  require(static_cast<int>(r.size()) == base.K, "add_base_membership: dimension mismatch");
  VectorXd s = base.scales();
  for (const auto& e : r) prog.add_nonneg(e);
  auto as_box = [&] {
    for (int k = 0; k < base.K; ++k) prog.add_le(r[static_cast<size_t>(k)], s(k) * radius);
  };
  auto as_simplex = [&] {
    LinExpr e;
    for (int k = 0; k < base.K; ++k) e.add_scaled(r[static_cast<size_t>(k)], 1.0 / s(k));
    prog.add_le(e, radius);
  };
  switch (base.kind) {
    case BaseKind::box: as_box(); return;
    case BaseKind::simplex: as_simplex(); return;
    case BaseKind::pball: {
      double q = base.q();
      if (std::isinf(q)) return as_box();
      if (q == 1.0) return as_simplex();
      if (q == 2.0) {
        std::vector<LinExpr> x;
        for (int k = 0; k < base.K; ++k) x.push_back((1.0 / s(k)) * r[static_cast<size_t>(k)]);
        prog.add_soc(radius, x);
        return;
      }
      throw std::invalid_argument("add_base_membership: unsupported p-ball exponent");
    }
  }
}

inline AffMat weighted_sum(const std::vector<LinExpr>& mu, const std::vector<MatrixXd>& T) {
  require(mu.size() == T.size() && !T.empty(), "weighted_sum: size mismatch");
  AffMat m(static_cast<int>(T[0].rows()), static_cast<int>(T[0].cols()));
  for (size_t k = 0; k < T.size(); ++k) m.add_scaled(mu[k], T[k]);
  m.compress();
  return m;
}

inline AffMat identity_times(const LinExpr& e, int n) { return AffMat::scaled(e, MatrixXd::Identity(n, n)); }

inline AffMat column(const std::vector<LinExpr>& v) {
  AffMat m(static_cast<int>(v.size()), 1);
  for (size_t i = 0; i < v.size(); ++i) m(static_cast<int>(i), 0) = v[i];
  return m;
}

inline std::vector<LinExpr> entries(const AffMat& m) {
  std::vector<LinExpr> v;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i) v.push_back(m(i, j));
  return v;
}

// y in radius * Y for a basic ellitope Y (y given as N expressions).
inline void add_ellitope_membership(Program& prog, const EllitopeSpec& e, const std::vector<LinExpr>& y, double radius = 1.0) {
  require(static_cast<int>(y.size()) == e.N(), "add_ellitope_membership: dimension mismatch");
  AffMat ycol = column(y);
  std::vector<MatrixXd> factors;
  for (const auto& T : e.T) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(T));
    std::vector<int> idx;
    double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
    for (int i = 0; i < es.eigenvalues().size(); ++i)
      if (es.eigenvalues()(i) > 1e-14 * std::max(1.0, top)) idx.push_back(i);
    MatrixXd C(T.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t c = 0; c < idx.size(); ++c)
      C.col(static_cast<Eigen::Index>(c)) = std::sqrt(es.eigenvalues()(idx[c])) * es.eigenvectors().col(idx[c]);
    factors.push_back(C.transpose());
  }
  const VectorXd s = e.base.scales();
  if (e.K() == 1) {
    AffMat u = factors[0] * ycol;
    prog.add_soc(LinExpr(radius * std::sqrt(s(0))), entries(u));
    return;
  }
  std::vector<LinExpr> t;
  for (int k = 0; k < e.K(); ++k) {
    LinExpr tk = prog.new_var();
    AffMat u = factors[static_cast<size_t>(k)] * ycol;
    std::vector<LinExpr> x;
    for (const auto& ui : entries(u)) x.push_back(2.0 * ui);
    x.push_back(tk - 1.0);
    prog.add_soc(tk + 1.0, x);
    t.push_back(tk);
  }
  add_base_membership(prog, e.base, t, LinExpr(radius * radius));
}

// y in radius * Y for a basic spectratope: S_i[y]^2 <= r_i I via [[r_i I, S_i[y]], [S_i[y], I]] PSD.
inline void add_spectratope_membership(Program& prog, const SpectratopeSpec& sp, const std::vector<LinExpr>& y, double radius = 1.0) {
  require(static_cast<int>(y.size()) == sp.N(), "add_spectratope_membership: dimension mismatch");
  std::vector<LinExpr> r;
  for (int i = 0; i < sp.blocks(); ++i) {
    LinExpr ri = prog.new_var();
    const int d = sp.d(i);
    AffMat S(d, d);
    for (int j = 0; j < sp.N(); ++j) S.add_scaled(y[static_cast<size_t>(j)], sp.S[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    S.compress();
    prog.add_psd(conic::build_lmi_block(identity_times(ri, d), S, AffMat::constant(MatrixXd::Identity(d, d))));
    r.push_back(ri);
  }
  add_base_membership(prog, sp.base, r, LinExpr(radius * radius));
}

// max c'x over a basic ellitope; closed form for a single ellipsoid.
inline double ellitope_linear_max(const EllitopeSpec& e, const VectorXd& c, VectorXd* argmax = nullptr,
                                  const conic::SolverOptions& opt = {}) {
  if (e.K() == 1 && lambda_min(e.T[0]) > 1e-12 * std::max(1.0, lambda_max(e.T[0]))) {
    double s = e.base.scales()(0);
    Eigen::LLT<MatrixXd> llt(e.T[0]);
    VectorXd w = llt.solve(c);
    double q = c.dot(w);
    if (q <= 0.0) {
      if (argmax) *argmax = VectorXd::Zero(c.size());
      return 0.0;
    }
    if (argmax) *argmax = std::sqrt(s / q) * w;
    return std::sqrt(s * q);
  }
  Program prog;
  auto y = prog.new_vars(e.N());
  add_ellitope_membership(prog, e, y);
  LinExpr obj;
  for (int i = 0; i < e.N(); ++i) obj.add_scaled(y[static_cast<size_t>(i)], -c(i));
  prog.minimize(obj);
  auto sol = conic::solve_or_throw(prog, opt, "ellitope_linear_max");
  VectorXd yv = sol.value(y);
  double g = gauge(yv, e);
  if (g > 1.0) yv /= g;
  if (argmax) *argmax = yv;
  return c.dot(yv);
}

}  // namespace robinv
