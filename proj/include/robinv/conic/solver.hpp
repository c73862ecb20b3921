#pragma once

#include "robinv/conic/program.hpp"
#include "robinv/conic/sdpa.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace robinv::conic {

enum class Status { optimal, infeasible, unbounded, numerical_failure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

struct SolverOptions {
  double tol_gap = 1e-8;
  double tol_feas = 1e-8;
  int max_iter = 200;
  double reduced_accuracy = 100.0;  // a stalled run within this factor of the tolerances is accepted
  bool verbose = false;
  std::string dump_path;  // writes the program in SDPA sparse format when non-empty
};

struct Solution {
  Status status = Status::numerical_failure;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double dual_objective = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::infinity();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool reduced = false;  // accepted at reduced accuracy

  bool ok() const { return status == Status::optimal; }
  double value(const LinExpr& e) const { return e.value(x); }
  Eigen::MatrixXd value(const AffMat& m) const { return m.value(x); }
  Eigen::VectorXd value(const std::vector<LinExpr>& v) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i].value(x);
    return r;
  }
};

class SolverError : public std::runtime_error {
 public:
  SolverError(Status s, const std::string& what)
      : std::runtime_error(what + ": solver status " + to_string(s)), status(s) {}
  Status status;
};

namespace detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

struct PsdEntry {
  int r, c;  // r >= c
  double v;
};

struct PsdBlock {
  int dim = 0;
  MatrixXd h;
  std::vector<int> vars;
  std::vector<std::vector<PsdEntry>> cols;
};

struct StdForm {
  int n = 0;
  VectorXd c;
  double c0 = 0.0;
  MatrixXd A;
  VectorXd b;
  int nl = 0;
  std::vector<int> soc_dims;
  std::vector<int> soc_offsets;
  SpMat G;  // LP and SOC rows
  VectorXd h;
  std::vector<PsdBlock> psd;
  std::vector<SpMat> soc_gram;  // G_k' G_k per SOC block
  std::vector<SpMat> soc_rows;  // G_k per SOC block
  int degree() const {
    int d = nl + static_cast<int>(soc_dims.size());
    for (const auto& p : psd) d += p.dim;
    return d;
  }
};

struct ConeVec {
  VectorXd l;
  std::vector<MatrixXd> S;
};

inline double dot(const ConeVec& a, const ConeVec& b) {
  double s = a.l.dot(b.l);
  for (size_t k = 0; k < a.S.size(); ++k) s += (a.S[k].array() * b.S[k].array()).sum();
  return s;
}
inline double norm(const ConeVec& a) { return std::sqrt(dot(a, a)); }
inline void axpy(double a, const ConeVec& x, ConeVec& y) {
  y.l += a * x.l;
  for (size_t k = 0; k < y.S.size(); ++k) y.S[k] += a * x.S[k];
}
inline ConeVec scaled(const ConeVec& x, double a) {
  ConeVec r = x;
  r.l *= a;
  for (auto& m : r.S) m *= a;
  return r;
}
inline ConeVec add(const ConeVec& a, const ConeVec& b) {
  ConeVec r = a;
  axpy(1.0, b, r);
  return r;
}

inline MatrixXd lower_to_full(const std::vector<PsdEntry>& e, int dim) {
  MatrixXd m = MatrixXd::Zero(dim, dim);
  for (const auto& t : e) {
    m(t.r, t.c) += t.v;
    if (t.r != t.c) m(t.c, t.r) += t.v;
  }
  return m;
}

inline StdForm to_standard_form(const Program& prog) {
  StdForm f;
  f.n = prog.num_variables();
  f.c = VectorXd::Zero(f.n);
  for (const auto& t : prog.objective().terms) f.c(t.var) += t.coef;
  f.c0 = prog.objective().constant;

  const auto& eqs = prog.equalities();
  f.A = MatrixXd::Zero(static_cast<Eigen::Index>(eqs.size()), f.n);
  f.b = VectorXd::Zero(static_cast<Eigen::Index>(eqs.size()));
  for (size_t i = 0; i < eqs.size(); ++i) {
    for (const auto& t : eqs[i].terms) f.A(static_cast<Eigen::Index>(i), t.var) += t.coef;
    f.b(static_cast<Eigen::Index>(i)) = -eqs[i].constant;
  }

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> hv;
  int row = 0;
  auto push_row = [&](const LinExpr& e) {
    for (const auto& t : e.terms) trip.emplace_back(row, t.var, -t.coef);
    hv.push_back(e.constant);
    ++row;
  };
  for (const auto& e : prog.nonneg()) push_row(e);
  f.nl = row;
  for (const auto& s : prog.socs()) {
    f.soc_offsets.push_back(row);
    f.soc_dims.push_back(static_cast<int>(s.x.size()) + 1);
    push_row(s.t);
    for (const auto& e : s.x) push_row(e);
  }
  f.G.resize(row, f.n);
  f.G.setFromTriplets(trip.begin(), trip.end());
  f.G.makeCompressed();
  f.h = Eigen::Map<VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));

  for (size_t k = 0; k < f.soc_dims.size(); ++k) {
    SpMat rows = f.G.middleRows(f.soc_offsets[k], f.soc_dims[k]);
    f.soc_rows.push_back(rows);
    SpMat gram = SpMat(rows.transpose()) * rows;
    f.soc_gram.push_back(gram);
  }

  for (const auto& m : prog.psds()) {
    PsdBlock blk;
    blk.dim = m.rows();
    blk.h = MatrixXd::Zero(blk.dim, blk.dim);
    std::vector<std::vector<PsdEntry>> per_var;
    std::vector<int> slot(static_cast<size_t>(f.n), -1);
    for (int c = 0; c < blk.dim; ++c)
      for (int r = c; r < blk.dim; ++r) {
        const LinExpr& e = m(r, c);
        blk.h(r, c) = e.constant;
        blk.h(c, r) = e.constant;
        for (const auto& t : e.terms) {
          if (t.coef == 0.0) continue;
          int& s = slot[static_cast<size_t>(t.var)];
          if (s < 0) {
            s = static_cast<int>(blk.vars.size());
            blk.vars.push_back(t.var);
            per_var.emplace_back();
          }
          per_var[static_cast<size_t>(s)].push_back({r, c, -t.coef});
        }
      }
    blk.cols = std::move(per_var);
    f.psd.push_back(std::move(blk));
  }
  return f;
}

// Diagonal scalings with x = D x~, rows of each cone block scaled uniformly.
struct Equilibration {
  VectorXd D, Ea, Eg;
  std::vector<double> Ep;

  VectorXd dual_residual(const VectorXd& r) const { return r.cwiseQuotient(D); }
  VectorXd eq_residual(const VectorXd& r) const { return r.cwiseQuotient(Ea); }
  ConeVec cone_residual(const ConeVec& r) const {
    ConeVec u;
    u.l = r.l.cwiseQuotient(Eg);
    for (size_t b = 0; b < r.S.size(); ++b) u.S.push_back(r.S[b] / Ep[b]);
    return u;
  }
};

inline void rebuild_soc_blocks(StdForm& f) {
  f.soc_rows.clear();
  f.soc_gram.clear();
  for (size_t k = 0; k < f.soc_dims.size(); ++k) {
    SpMat rows = f.G.middleRows(f.soc_offsets[k], f.soc_dims[k]);
    f.soc_rows.push_back(rows);
    f.soc_gram.push_back(SpMat(rows.transpose()) * rows);
  }
}

inline Equilibration equilibrate(StdForm& f, int passes = 8) {
  Equilibration q;
  const int n = f.n;
  const auto na = f.A.rows();
  const auto ng = f.G.rows();
  q.D = VectorXd::Ones(n);
  q.Ea = VectorXd::Ones(na);
  q.Eg = VectorXd::Ones(ng);
  q.Ep.assign(f.psd.size(), 1.0);
  auto inv_sqrt = [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; };
  for (int pass = 0; pass < passes; ++pass) {
    VectorXd col = VectorXd::Zero(n);
    VectorXd ra = VectorXd::Zero(na), rg = VectorXd::Zero(ng);
    std::vector<double> rp(f.psd.size(), 0.0);
    for (Eigen::Index i = 0; i < na; ++i)
      for (int j = 0; j < n; ++j) {
        double a = std::abs(f.A(i, j));
        col(j) = std::max(col(j), a);
        ra(i) = std::max(ra(i), a);
      }
    for (int j = 0; j < f.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(f.G, j); it; ++it) {
        double a = std::abs(it.value());
        col(j) = std::max(col(j), a);
        rg(it.row()) = std::max(rg(it.row()), a);
      }
    for (size_t b = 0; b < f.psd.size(); ++b)
      for (size_t k = 0; k < f.psd[b].vars.size(); ++k)
        for (const auto& e : f.psd[b].cols[k]) {
          double a = std::abs(e.v);
          col(f.psd[b].vars[k]) = std::max(col(f.psd[b].vars[k]), a);
          rp[b] = std::max(rp[b], a);
        }
    for (size_t k = 0; k < f.soc_dims.size(); ++k) {
      double m = rg.segment(f.soc_offsets[k], f.soc_dims[k]).maxCoeff();
      rg.segment(f.soc_offsets[k], f.soc_dims[k]).setConstant(m);
    }
    VectorXd dc(n), da(na), dg(ng);
    for (int j = 0; j < n; ++j) dc(j) = inv_sqrt(col(j));
    for (Eigen::Index i = 0; i < na; ++i) da(i) = inv_sqrt(ra(i));
    for (Eigen::Index i = 0; i < ng; ++i) dg(i) = inv_sqrt(rg(i));
    if ((dc.array() - 1.0).abs().maxCoeff() < 1e-3 && (na == 0 || (da.array() - 1.0).abs().maxCoeff() < 1e-3) &&
        (ng == 0 || (dg.array() - 1.0).abs().maxCoeff() < 1e-3))
      break;
    if (na > 0) f.A = da.asDiagonal() * f.A * dc.asDiagonal();
    f.G = dg.asDiagonal() * f.G * dc.asDiagonal();
    for (size_t b = 0; b < f.psd.size(); ++b) {
      double e = inv_sqrt(rp[b]);
      for (size_t k = 0; k < f.psd[b].vars.size(); ++k)
        for (auto& t : f.psd[b].cols[k]) t.v *= e * dc(f.psd[b].vars[k]);
      q.Ep[b] *= e;
    }
    q.D = q.D.cwiseProduct(dc);
    q.Ea = q.Ea.cwiseProduct(da);
    q.Eg = q.Eg.cwiseProduct(dg);
  }
  f.G.makeCompressed();
  f.c = f.c.cwiseProduct(q.D);
  f.b = f.b.cwiseProduct(q.Ea);
  f.h = f.h.cwiseProduct(q.Eg);
  for (size_t b = 0; b < f.psd.size(); ++b) f.psd[b].h *= q.Ep[b];
  rebuild_soc_blocks(f);
  return q;
}

class Cones {
 public:
  explicit Cones(const StdForm& f) : f_(f) {}

  ConeVec zeros() const {
    ConeVec v;
    v.l = VectorXd::Zero(f_.G.rows());
    for (const auto& p : f_.psd) v.S.push_back(MatrixXd::Zero(p.dim, p.dim));
    return v;
  }

  ConeVec identity() const {
    ConeVec v = zeros();
    v.l.head(f_.nl).setOnes();
    for (int off : f_.soc_offsets) v.l(off) = 1.0;
    for (auto& m : v.S) m.setIdentity();
    return v;
  }

  ConeVec Gx(const VectorXd& x) const {
    ConeVec v;
    v.l = f_.G * x;
    for (const auto& p : f_.psd) {
      MatrixXd m = MatrixXd::Zero(p.dim, p.dim);
      for (size_t k = 0; k < p.vars.size(); ++k) {
        double xv = x(p.vars[k]);
        if (xv == 0.0) continue;
        for (const auto& e : p.cols[k]) {
          m(e.r, e.c) += xv * e.v;
          if (e.r != e.c) m(e.c, e.r) += xv * e.v;
        }
      }
      v.S.push_back(std::move(m));
    }
    return v;
  }

  VectorXd Gtz(const ConeVec& z) const {
    VectorXd r = f_.G.transpose() * z.l;
    for (size_t b = 0; b < f_.psd.size(); ++b) {
      const auto& p = f_.psd[b];
      const MatrixXd& Z = z.S[b];
      for (size_t k = 0; k < p.vars.size(); ++k) {
        double s = 0.0;
        for (const auto& e : p.cols[k]) s += e.v * (e.r == e.c ? Z(e.r, e.c) : Z(e.r, e.c) + Z(e.c, e.r));
        r(p.vars[k]) += s;
      }
    }
    return r;
  }

  ConeVec h() const {
    ConeVec v;
    v.l = f_.h;
    for (const auto& p : f_.psd) v.S.push_back(p.h);
    return v;
  }

  // Smallest alpha with x + alpha e in the cone (x arbitrary).
  double shift_needed(const ConeVec& x) const {
    double a = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < f_.nl; ++i) a = std::max(a, -x.l(i));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], d = f_.soc_dims[k];
      a = std::max(a, x.l.segment(o + 1, d - 1).norm() - x.l(o));
    }
    for (const auto& m : x.S) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
      a = std::max(a, -es.eigenvalues()(0));
    }
    return a;
  }

  // Largest alpha with x + alpha d in the cone; x interior and (for PSD) diagonal.
  double max_step(const ConeVec& x, const ConeVec& d) const {
    double amax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < f_.nl; ++i)
      if (d.l(i) < 0.0) amax = std::min(amax, -x.l(i) / d.l(i));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      double x0 = x.l(o), d0 = d.l(o);
      auto x1 = x.l.segment(o + 1, n - 1);
      auto d1 = d.l.segment(o + 1, n - 1);
      double qa = d0 * d0 - d1.squaredNorm();
      double qb = 2.0 * (x0 * d0 - x1.dot(d1));
      double qc = x0 * x0 - x1.squaredNorm();
      amax = std::min(amax, smallest_positive_root(qa, qb, qc));
      if (d0 < 0.0) amax = std::min(amax, -x0 / d0);
    }
    for (size_t b = 0; b < x.S.size(); ++b) {
      VectorXd isq = x.S[b].diagonal().cwiseSqrt().cwiseInverse();
      MatrixXd m = isq.asDiagonal() * d.S[b] * isq.asDiagonal();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
      double lmin = es.eigenvalues()(0);
      if (lmin < 0.0) amax = std::min(amax, -1.0 / lmin);
    }
    return amax;
  }

  // x o y
  ConeVec product(const ConeVec& x, const ConeVec& y) const {
    ConeVec r;
    r.l = VectorXd(x.l.size());
    r.l.head(f_.nl) = x.l.head(f_.nl).cwiseProduct(y.l.head(f_.nl));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l(o) = x.l.segment(o, n).dot(y.l.segment(o, n));
      r.l.segment(o + 1, n - 1) = x.l(o) * y.l.segment(o + 1, n - 1) + y.l(o) * x.l.segment(o + 1, n - 1);
    }
    for (size_t b = 0; b < x.S.size(); ++b) {
      MatrixXd p = x.S[b] * y.S[b];
      r.S.push_back(0.5 * (p + p.transpose()));
    }
    return r;
  }

  // Solves lambda o v = u, lambda the scaled point (diagonal PSD blocks).
  ConeVec inv_product(const ConeVec& lam, const ConeVec& u) const {
    ConeVec v;
    v.l = VectorXd(u.l.size());
    v.l.head(f_.nl) = u.l.head(f_.nl).cwiseQuotient(lam.l.head(f_.nl));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      double l0 = lam.l(o);
      auto l1 = lam.l.segment(o + 1, n - 1);
      double det = l0 * l0 - l1.squaredNorm();
      double v0 = (l0 * u.l(o) - l1.dot(u.l.segment(o + 1, n - 1))) / det;
      v.l(o) = v0;
      v.l.segment(o + 1, n - 1) = (u.l.segment(o + 1, n - 1) - v0 * l1) / l0;
    }
    for (size_t b = 0; b < u.S.size(); ++b) {
      const VectorXd d = lam.S[b].diagonal();
      MatrixXd m = u.S[b];
      for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i) m(i, j) *= 2.0 / (d(i) + d(j));
      v.S.push_back(std::move(m));
    }
    return v;
  }

  const StdForm& form() const { return f_; }

 private:
  static double smallest_positive_root(double a, double b, double c) {
    const double inf = std::numeric_limits<double>::infinity();
    if (std::abs(a) < 1e-300) {
      if (b < 0.0) return -c / b;
      return inf;
    }
    double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return inf;
    double sq = std::sqrt(disc);
    double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double r1 = q / a;
    double r2 = (q != 0.0) ? c / q : inf;
    double best = inf;
    if (r1 > 0.0) best = std::min(best, r1);
    if (r2 > 0.0) best = std::min(best, r2);
    return best;
  }

  const StdForm& f_;
};

// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
class Scaling {
 public:
  Scaling(const StdForm& f, const ConeVec& s, const ConeVec& z) : f_(f) {
    ok_ = true;
    const int nl = f.nl;
    w_ = (s.l.head(nl).cwiseQuotient(z.l.head(nl))).cwiseSqrt();
    lambda_.l = VectorXd(s.l.size());
    lambda_.l.head(nl) = s.l.head(nl).cwiseProduct(z.l.head(nl)).cwiseSqrt();
    for (size_t k = 0; k < f.soc_dims.size(); ++k) {
      int o = f.soc_offsets[k], n = f.soc_dims[k];
      VectorXd sk = s.l.segment(o, n), zk = z.l.segment(o, n);
      double sn = jnorm(sk), zn = jnorm(zk);
      if (!(sn > 0.0) || !(zn > 0.0)) {
        ok_ = false;
        sn = std::max(sn, 1e-300);
        zn = std::max(zn, 1e-300);
      }
      VectorXd sb = sk / sn, zb = zk / zn;
      double gamma = std::sqrt(std::max(0.5 * (1.0 + sb.dot(zb)), 1e-300));
      VectorXd wb = sb;
      wb(0) += zb(0);
      wb.tail(n - 1) -= zb.tail(n - 1);
      wb /= 2.0 * gamma;
      VectorXd v = wb;
      v(0) += 1.0;
      v /= std::sqrt(2.0 * (wb(0) + 1.0));
      double beta = std::sqrt(sn / zn);
      soc_beta_.push_back(beta);
      soc_v_.push_back(v);
      lambda_.l.segment(o, n) = apply_soc_W(k, zk);
    }
    for (size_t b = 0; b < f.psd.size(); ++b) {
      Eigen::LLT<MatrixXd> ls(s.S[b]), lz(z.S[b]);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) {
        ok_ = false;
        int d = f.psd[b].dim;
        R_.push_back(MatrixXd::Identity(d, d));
        Rinv_.push_back(MatrixXd::Identity(d, d));
        lambda_.S.push_back(MatrixXd::Identity(d, d));
        continue;
      }
      MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      VectorXd sv = svd.singularValues();
      if (sv.minCoeff() <= 0.0) ok_ = false;
      VectorXd isq = sv.cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
      MatrixXd R = Ls * svd.matrixV() * isq.asDiagonal();
      MatrixXd Rinv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
      R_.push_back(std::move(R));
      Rinv_.push_back(std::move(Rinv));
      lambda_.S.push_back(sv.asDiagonal());
    }
  }

  bool ok() const { return ok_ && lambda_.l.allFinite(); }
  const ConeVec& lambda() const { return lambda_; }

  ConeVec W(const ConeVec& z) const {
    ConeVec r;
    r.l = VectorXd(z.l.size());
    r.l.head(f_.nl) = w_.cwiseProduct(z.l.head(f_.nl));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l.segment(o, n) = apply_soc_W(k, z.l.segment(o, n));
    }
    for (size_t b = 0; b < z.S.size(); ++b) r.S.push_back(R_[b].transpose() * z.S[b] * R_[b]);
    return r;
  }

  // W^{-T} s
  ConeVec WinvT(const ConeVec& s) const {
    ConeVec r;
    r.l = VectorXd(s.l.size());
    r.l.head(f_.nl) = s.l.head(f_.nl).cwiseQuotient(w_);
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l.segment(o, n) = apply_soc_Winv(k, s.l.segment(o, n));
    }
    for (size_t b = 0; b < s.S.size(); ++b) r.S.push_back(Rinv_[b] * s.S[b] * Rinv_[b].transpose());
    return r;
  }

  // W^{-1} u
  ConeVec Winv(const ConeVec& u) const {
    ConeVec r;
    r.l = VectorXd(u.l.size());
    r.l.head(f_.nl) = u.l.head(f_.nl).cwiseQuotient(w_);
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l.segment(o, n) = apply_soc_Winv(k, u.l.segment(o, n));
    }
    for (size_t b = 0; b < u.S.size(); ++b) r.S.push_back(Rinv_[b].transpose() * u.S[b] * Rinv_[b]);
    return r;
  }

  // W^T u
  ConeVec WT(const ConeVec& u) const {
    ConeVec r;
    r.l = VectorXd(u.l.size());
    r.l.head(f_.nl) = w_.cwiseProduct(u.l.head(f_.nl));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l.segment(o, n) = apply_soc_W(k, u.l.segment(o, n));
    }
    for (size_t b = 0; b < u.S.size(); ++b) r.S.push_back(R_[b] * u.S[b] * R_[b].transpose());
    return r;
  }

  // (W^T W)^{-1} u
  ConeVec WtWinv(const ConeVec& u) const {
    ConeVec r;
    r.l = VectorXd(u.l.size());
    r.l.head(f_.nl) = u.l.head(f_.nl).cwiseQuotient(w_.cwiseProduct(w_));
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int o = f_.soc_offsets[k], n = f_.soc_dims[k];
      r.l.segment(o, n) = apply_soc_Winv(k, apply_soc_Winv(k, u.l.segment(o, n)));
    }
    for (size_t b = 0; b < u.S.size(); ++b) {
      MatrixXd Q = Rinv_[b].transpose() * Rinv_[b];
      r.S.push_back(Q * u.S[b] * Q);
    }
    return r;
  }

  // G' (W^T W)^{-1} G
  MatrixXd normal_matrix() const {
    const int n = f_.n;
    MatrixXd H = MatrixXd::Zero(n, n);
    if (f_.nl > 0) {
      VectorXd d = w_.cwiseInverse();
      SpMat Gl = f_.G.topRows(f_.nl);
      SpMat DG = d.asDiagonal() * Gl;
      H += MatrixXd(SpMat(DG.transpose()) * DG);
    }
    for (size_t k = 0; k < f_.soc_dims.size(); ++k) {
      int n_k = f_.soc_dims[k];
      const VectorXd& v = soc_v_[k];
      VectorXd a = v;
      a.tail(n_k - 1) *= -1.0;
      const SpMat& Gk = f_.soc_rows[k];
      VectorXd ga = Gk.transpose() * a;
      VectorXd gv = Gk.transpose() * v;
      double b2 = soc_beta_[k] * soc_beta_[k];
      MatrixXd upd = (4.0 * a.squaredNorm()) * ga * ga.transpose() - 2.0 * ga * gv.transpose() - 2.0 * gv * ga.transpose();
      H += (upd + MatrixXd(f_.soc_gram[k])) / b2;
    }
    for (size_t b = 0; b < f_.psd.size(); ++b) {
      const auto& p = f_.psd[b];
      const int d = p.dim;
      MatrixXd Q = Rinv_[b].transpose() * Rinv_[b];
      const size_t nv = p.vars.size();
      MatrixXd M(d, d);
      for (size_t i = 0; i < nv; ++i) {
        const auto& Fi = p.cols[i];
        if (static_cast<int>(Fi.size()) * 2 < d) {
          M.setZero();
          for (const auto& e : Fi) {
            if (e.r == e.c) {
              M.noalias() += e.v * Q.col(e.r) * Q.col(e.r).transpose();
            } else {
              M.noalias() += e.v * Q.col(e.r) * Q.col(e.c).transpose();
              M.noalias() += e.v * Q.col(e.c) * Q.col(e.r).transpose();
            }
          }
        } else {
          MatrixXd F = lower_to_full(Fi, d);
          M.noalias() = Q * F * Q;
        }
        for (size_t j = i; j < nv; ++j) {
          double s = 0.0;
          for (const auto& e : p.cols[j]) s += e.v * (e.r == e.c ? M(e.r, e.c) : 2.0 * M(e.r, e.c));
          H(p.vars[i], p.vars[j]) += s;
          if (j != i) H(p.vars[j], p.vars[i]) += s;
        }
      }
    }
    return H;
  }

 private:
  static double jnorm(const VectorXd& u) {
    double q = u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
    return q > 0.0 ? std::sqrt(q) : 0.0;
  }

  VectorXd apply_soc_W(size_t k, const VectorXd& z) const {
    const VectorXd& v = soc_v_[k];
    VectorXd jz = z;
    jz.tail(z.size() - 1) *= -1.0;
    return soc_beta_[k] * (2.0 * v.dot(z) * v - jz);
  }

  VectorXd apply_soc_Winv(size_t k, const VectorXd& s) const {
    VectorXd a = soc_v_[k];
    a.tail(a.size() - 1) *= -1.0;
    VectorXd js = s;
    js.tail(s.size() - 1) *= -1.0;
    return (2.0 * a.dot(s) * a - js) / soc_beta_[k];
  }

  const StdForm& f_;
  bool ok_ = true;
  VectorXd w_;
  std::vector<double> soc_beta_;
  std::vector<VectorXd> soc_v_;
  std::vector<MatrixXd> R_, Rinv_;
  ConeVec lambda_;
};

// Solves A'dy + G'dz = p, A dx = q, G dx - W'W dz = t.
class KktSolver {
 public:
  KktSolver(const StdForm& f, const Cones& cones, const Scaling& sc) : f_(f), cones_(cones), sc_(sc) {
    const int n = f.n;
    double rows = static_cast<double>(f.G.rows());
    for (const auto& b : f.psd) rows += 0.5 * b.dim * (b.dim + 1.0);
    if (rows * n * n <= kQrBudget && rows >= n)
      factor_qr();
    else
      factor_normal();
    if (f.A.rows() > 0 && ok_) {
      HiAt_ = hsolve(f.A.transpose());
      MatrixXd S = f.A * HiAt_;
      double sreg = 1e-13 * std::max(1.0, S.diagonal().maxCoeff());
      S.diagonal().array() += sreg;
      sllt_.compute(S);
      ok_ = sllt_.info() == Eigen::Success;
    }
  }

  bool ok() const { return ok_; }

  // Also returns the scaled step wdz = W dz, computed without forming W W^{-1}.
  void solve(const VectorXd& p, const VectorXd& q, const ConeVec& t, VectorXd& dx, VectorXd& dy, ConeVec& dz,
             ConeVec& wdz) const {
    solve_once(p, q, t, dx, dy, dz, wdz);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 6; ++it) {
      VectorXd r1 = p - f_.A.transpose() * dy - cones_.Gtz(dz);
      VectorXd r2 = q - f_.A * dx;
      ConeVec gdx = cones_.Gx(dx);
      ConeVec wwz = sc_.WT(wdz);
      ConeVec r3 = t;
      axpy(-1.0, gdx, r3);
      axpy(1.0, wwz, r3);
      double rn = r1.norm() + r2.norm() + norm(r3);
      if (!(rn > 1e-15) || rn > 0.5 * prev) break;
      prev = rn;
      VectorXd ex, ey;
      ConeVec ez, ewz;
      solve_once(r1, r2, r3, ex, ey, ez, ewz);
      dx += ex;
      dy += ey;
      axpy(1.0, ez, dz);
      axpy(1.0, ewz, wdz);
    }
  }

 private:
  void solve_once(const VectorXd& p, const VectorXd& q, const ConeVec& t, VectorXd& dx, VectorXd& dy, ConeVec& dz,
                  ConeVec& wdz) const {
    ConeVec wt = sc_.WtWinv(t);
    VectorXd r1 = p + cones_.Gtz(wt);
    if (f_.A.rows() > 0) {
      VectorXd hr = hsolve(r1);
      dy = sllt_.solve(f_.A * hr - q);
      dx = hsolve(r1 - f_.A.transpose() * dy);
    } else {
      dy = VectorXd(0);
      dx = hsolve(r1);
    }
    ConeVec g = cones_.Gx(dx);
    axpy(-1.0, t, g);
    wdz = sc_.WinvT(g);
    dz = sc_.Winv(wdz);
  }

  static constexpr double kQrBudget = 2e8;

  // Upper factor U with U'U = D G'(W'W)^{-1} G D, D = dinv.
  void factor_normal() {
    const int n = f_.n;
    MatrixXd H = sc_.normal_matrix();
    double top = 0.0;
    for (int i = 0; i < n; ++i) top = std::max(top, H(i, i));
    dinv_ = VectorXd(n);
    for (int i = 0; i < n; ++i) dinv_(i) = 1.0 / std::sqrt(std::max(H(i, i), 1e-14 * std::max(top, 1e-300)));
    MatrixXd Hs = dinv_.asDiagonal() * H * dinv_.asDiagonal();
    Eigen::LLT<MatrixXd> llt;
    double reg = 1e-13;
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd Hr = Hs;
      Hr.diagonal().array() += reg;
      llt.compute(Hr);
      if (llt.info() == Eigen::Success) break;
      reg *= 100.0;
    }
    ok_ = llt.info() == Eigen::Success;
    if (ok_) U_ = llt.matrixU();
  }

  // Same factor from a QR decomposition of the scaled constraint matrix W^{-T} G.
  void factor_qr() {
    const int n = f_.n;
    Eigen::Index rows = f_.G.rows();
    for (const auto& b : f_.psd) rows += static_cast<Eigen::Index>(b.dim) * (b.dim + 1) / 2;
    MatrixXd Gs(rows, n);
    const double r2 = std::sqrt(2.0);
    VectorXd ej = VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
      ej(j) = 1.0;
      ConeVec c = sc_.WinvT(cones_.Gx(ej));
      ej(j) = 0.0;
      Eigen::Index r = c.l.size();
      Gs.col(j).head(r) = c.l;
      for (const auto& m : c.S)
        for (int cc = 0; cc < m.cols(); ++cc)
          for (int rr = cc; rr < m.rows(); ++rr) Gs(r++, j) = rr == cc ? m(rr, cc) : r2 * m(rr, cc);
    }
    VectorXd cn = Gs.colwise().norm();
    const double top = std::max(cn.maxCoeff(), 1e-300);
    dinv_ = VectorXd(n);
    for (int i = 0; i < n; ++i) dinv_(i) = 1.0 / std::max(cn(i), 1e-7 * top);
    Gs = Gs * dinv_.asDiagonal();
    Eigen::HouseholderQR<MatrixXd> qr(Gs);
    U_ = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    double dmax = U_.diagonal().cwiseAbs().maxCoeff();
    double dmin = U_.diagonal().cwiseAbs().minCoeff();
    if (!(dmin > 1e-13 * dmax)) {
      factor_normal();
      return;
    }
    ok_ = U_.allFinite();
  }

  MatrixXd hsolve(const MatrixXd& r) const {
    MatrixXd v = dinv_.asDiagonal() * r;
    U_.triangularView<Eigen::Upper>().transpose().solveInPlace(v);
    U_.triangularView<Eigen::Upper>().solveInPlace(v);
    return dinv_.asDiagonal() * v;
  }

  const StdForm& f_;
  const Cones& cones_;
  const Scaling& sc_;
  VectorXd dinv_;
  MatrixXd U_;
  MatrixXd HiAt_;
  Eigen::LLT<MatrixXd> sllt_;
  bool ok_ = false;
};

inline Solution solve_trivial(const StdForm& f) {
  Solution sol;
  sol.x = VectorXd::Zero(f.n);
  sol.iterations = 0;
  bool feasible = true;
  for (int i = 0; i < f.nl; ++i)
    if (f.h(i) < -1e-12) feasible = false;
  for (size_t k = 0; k < f.soc_dims.size(); ++k) {
    int o = f.soc_offsets[k], n = f.soc_dims[k];
    if (f.h.segment(o + 1, n - 1).norm() > f.h(o) + 1e-12) feasible = false;
  }
  for (const auto& p : f.psd)
    if (p.dim > 0) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.h, Eigen::EigenvaluesOnly);
      if (es.eigenvalues()(0) < -1e-12) feasible = false;
    }
  if (f.b.size() > 0 && f.b.norm() > 1e-12) feasible = false;
  sol.status = feasible ? Status::optimal : Status::infeasible;
  sol.objective = sol.dual_objective = f.c0;
  sol.gap = 0.0;
  sol.primal_residual = sol.dual_residual = 0.0;
  return sol;
}

}  // namespace detail

inline Solution solve(const Program& prog, const SolverOptions& opt = {}) {
  using namespace detail;
  if (!opt.dump_path.empty()) {
    std::ofstream os(opt.dump_path);
    write_sdpa(prog, os);
  }
  StdForm f = to_standard_form(prog);
  const bool no_cones = f.G.rows() == 0 && f.psd.empty();
  if (f.n == 0 || no_cones) {
    if (f.n == 0) return solve_trivial(f);
    Solution sol;
    sol.x = VectorXd::Zero(f.n);
    if (f.A.rows() > 0) sol.x = f.A.completeOrthogonalDecomposition().solve(f.b);
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(f.A.transpose());
    VectorXd y = f.A.rows() > 0 ? VectorXd(cod.solve(-f.c)) : VectorXd(0);
    double dres = (f.A.rows() > 0 ? VectorXd(f.A.transpose() * y + f.c) : f.c).norm();
    double pres = f.A.rows() > 0 ? (f.A * sol.x - f.b).norm() : 0.0;
    sol.objective = f.c.dot(sol.x) + f.c0;
    sol.dual_objective = sol.objective;
    sol.gap = 0.0;
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    if (pres > opt.tol_feas * std::max(1.0, f.b.norm()))
      sol.status = Status::infeasible;
    else if (dres > opt.tol_feas * std::max(1.0, f.c.norm()))
      sol.status = Status::unbounded;
    else
      sol.status = Status::optimal;
    return sol;
  }

  const double resx0 = std::max(1.0, f.c.norm());
  const double resy0 = std::max(1.0, f.b.norm());
  double resz0 = f.h.squaredNorm();
  for (const auto& blk : f.psd) resz0 += blk.h.squaredNorm();
  resz0 = std::max(1.0, std::sqrt(resz0));
  const Equilibration eq = equilibrate(f);

  Cones cones(f);
  const int n = f.n;
  const int p = static_cast<int>(f.A.rows());
  const double deg = f.degree();
  const ConeVec hvec = cones.h();
  const ConeVec e = cones.identity();

  VectorXd x, y;
  ConeVec s, z;
  {
    ConeVec ones = e;
    ConeVec zero_s = cones.zeros();
    Scaling id(f, ones, ones);
    KktSolver kkt(f, cones, id);
    if (!kkt.ok()) {
      Solution sol;
      sol.status = Status::numerical_failure;
      sol.x = VectorXd::Zero(n);
      return sol;
    }
    VectorXd dx, dy;
    ConeVec dz, wdz;
    kkt.solve(VectorXd::Zero(n), f.b, hvec, dx, dy, dz, wdz);
    x = dx;
    s = scaled(dz, -1.0);
    kkt.solve(-f.c, VectorXd::Zero(p), zero_s, dx, dy, dz, wdz);
    y = dy;
    z = dz;
    double ap = cones.shift_needed(s);
    if (ap >= -1e-8 * std::max(1.0, norm(s))) axpy(1.0 + std::max(ap, 0.0), e, s);
    double ad = cones.shift_needed(z);
    if (ad >= -1e-8 * std::max(1.0, norm(z))) axpy(1.0 + std::max(ad, 0.0), e, z);
  }
  double tau = 1.0, kappa = 1.0;

  Solution best;
  best.x = eq.D.cwiseProduct(x);
  best.status = Status::numerical_failure;
  double best_merit = std::numeric_limits<double>::infinity();

  Solution sol;
  int small_steps = 0;
  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    VectorXd rx = (p > 0 ? VectorXd(f.A.transpose() * y) : VectorXd::Zero(n)) + cones.Gtz(z) + tau * f.c;
    VectorXd ry = tau * f.b - (p > 0 ? VectorXd(f.A * x) : VectorXd(0));
    ConeVec rz = add(s, cones.Gx(x));
    axpy(-tau, hvec, rz);
    const double cx = f.c.dot(x);
    const double by = p > 0 ? f.b.dot(y) : 0.0;
    const double hz = dot(hvec, z);
    const double rt = kappa + cx + by + hz;
    const double sz = dot(s, z);
    const double mu = (sz + tau * kappa) / (deg + 1.0);

    const double pobj = cx / tau;
    const double dobj = -(by + hz) / tau;
    const double gap = sz / (tau * tau);
    const double pres =
        std::max(p > 0 ? eq.eq_residual(ry).norm() / tau / resy0 : 0.0, norm(eq.cone_residual(rz)) / tau / resz0);
    const double dres = eq.dual_residual(rx).norm() / tau / resx0;

    sol.x = eq.D.cwiseProduct(x) / tau;
    sol.objective = pobj + f.c0;
    sol.dual_objective = dobj + f.c0;
    sol.gap = gap;
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.iterations = iter;

    if (opt.verbose)
      std::fprintf(stderr, "%3d pobj % .8e dobj % .8e gap %.2e pres %.2e dres %.2e tau %.2e kappa %.2e\n", iter,
                   pobj, dobj, gap, pres, dres, tau, kappa);

    const double gap_scale = std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));
    if (pres <= opt.tol_feas && dres <= opt.tol_feas && gap <= opt.tol_gap * gap_scale) {
      sol.status = Status::optimal;
      return sol;
    }
    double merit = std::max({pres / opt.tol_feas, dres / opt.tol_feas, gap / (opt.tol_gap * gap_scale)});
    if (merit < best_merit) {
      best_merit = merit;
      best = sol;
    }

    // Infeasibility certificates.
    if (by + hz < 0.0) {
      VectorXd gz = (p > 0 ? VectorXd(f.A.transpose() * y) : VectorXd::Zero(n)) + cones.Gtz(z);
      double pinf = eq.dual_residual(gz).norm() / resx0 / (-(by + hz));
      if (pinf <= opt.tol_feas) {
        sol.status = Status::infeasible;
        sol.x = eq.D.cwiseProduct(x);
        return sol;
      }
    }
    if (cx < 0.0) {
      ConeVec gs = add(s, cones.Gx(x));
      double ax = p > 0 ? eq.eq_residual(f.A * x).norm() : 0.0;
      double dinf = std::max(ax / resy0, norm(eq.cone_residual(gs)) / resz0) / (-cx);
      if (dinf <= opt.tol_feas) {
        sol.status = Status::unbounded;
        sol.x = eq.D.cwiseProduct(x);
        return sol;
      }
    }
    if (iter == opt.max_iter) break;

    Scaling sc(f, s, z);
    if (!sc.ok()) break;
    KktSolver kkt(f, cones, sc);
    if (!kkt.ok()) break;
    const ConeVec& lam = sc.lambda();

    VectorXd vx, vy;
    ConeVec vz, wvz;
    kkt.solve(-f.c, f.b, hvec, vx, vy, vz, wvz);
    const double vden = f.c.dot(vx) + (p > 0 ? f.b.dot(vy) : 0.0) + dot(hvec, vz) - kappa / tau;

    ConeVec lam2 = cones.product(lam, lam);
    auto direction = [&](double d, const ConeVec& rs, double rk, VectorXd& dx, VectorXd& dy, ConeVec& dz, ConeVec& wdz,
                         ConeVec& ds, double& dtau, double& dkappa) {
      ConeVec lrs = cones.inv_product(lam, rs);
      ConeVec t = scaled(rz, -d);
      axpy(-1.0, sc.WT(lrs), t);
      VectorXd ux, uy;
      ConeVec uz, wuz;
      kkt.solve(-d * rx, d * ry, t, ux, uy, uz, wuz);
      double unum = f.c.dot(ux) + (p > 0 ? f.b.dot(uy) : 0.0) + dot(hvec, uz);
      dtau = (-d * rt - rk / tau - unum) / vden;
      dx = ux + dtau * vx;
      dy = uy + dtau * vy;
      dz = uz;
      axpy(dtau, vz, dz);
      wdz = wuz;
      axpy(dtau, wvz, wdz);
      dkappa = (rk - kappa * dtau) / tau;
      ds = lrs;
      axpy(-1.0, wdz, ds);  // scaled ds
    };
    auto step_length = [&](const ConeVec& dss, const ConeVec& dzs, double dtau, double dkappa) {
      double a = std::min(cones.max_step(lam, dss), cones.max_step(lam, dzs));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // Predictor.
    VectorXd dxa, dya;
    ConeVec dza, dzas, dsa;
    double dtaua, dkappaa;
    direction(1.0, scaled(lam2, -1.0), -tau * kappa, dxa, dya, dza, dzas, dsa, dtaua, dkappaa);
    double aa = std::min(1.0, step_length(dsa, dzas, dtaua, dkappaa));
    double sigma = std::pow(1.0 - aa, 3);

    // Corrector.
    ConeVec rs = scaled(lam2, -1.0);
    axpy(-1.0, cones.product(dsa, dzas), rs);
    axpy(sigma * mu, e, rs);
    double rk = -tau * kappa - dtaua * dkappaa + sigma * mu;
    VectorXd dx, dy;
    ConeVec dz, dzs, dss;
    double dtau, dkappa;
    direction(1.0 - sigma, rs, rk, dx, dy, dz, dzs, dss, dtau, dkappa);
    double amax = step_length(dss, dzs, dtau, dkappa);
    double alpha = std::min(1.0, 0.99 * amax);
    if (!std::isfinite(alpha) || alpha <= 0.0) break;

    x += alpha * dx;
    if (p > 0) y += alpha * dy;
    axpy(alpha, dz, z);
    axpy(alpha, sc.WT(dss), s);
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite()) break;

    if (alpha < 1e-8) {
      if (++small_steps >= 3) break;
    } else {
      small_steps = 0;
    }
  }
  best.status = Status::numerical_failure;
  if (best_merit <= opt.reduced_accuracy) {
    best.status = Status::optimal;
    best.reduced = true;
  }
  return best;
}

inline Solution solve_or_throw(const Program& prog, const SolverOptions& opt, const std::string& what) {
  Solution s = solve(prog, opt);
  if (s.status != Status::optimal) throw SolverError(s.status, what);
  return s;
}

}  // namespace robinv::conic

