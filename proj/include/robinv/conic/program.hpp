#pragma once

#include "robinv/conic/expression.hpp"

#include <string>
#include <vector>

namespace robinv::conic {

struct SocConstraint {
  LinExpr t;
  std::vector<LinExpr> x;
};

// min c'x subject to affine equalities, e >= 0, ||x|| <= t and M(x) PSD.
class Program {
 public:
  int num_variables() const { return nvars_; }

  LinExpr new_var() { return LinExpr::variable(nvars_++); }

  LinExpr new_nonneg() {
    LinExpr v = new_var();
    add_nonneg(v);
    return v;
  }

  std::vector<LinExpr> new_vars(int n) {
    std::vector<LinExpr> v;
    v.reserve(n);
    for (int i = 0; i < n; ++i) v.push_back(new_var());
    return v;
  }

  std::vector<LinExpr> new_nonnegs(int n) {
    std::vector<LinExpr> v;
    v.reserve(n);
    for (int i = 0; i < n; ++i) v.push_back(new_nonneg());
    return v;
  }

  AffMat new_matrix(int rows, int cols) {
    AffMat m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = new_var();
    return m;
  }

  AffMat new_sym_matrix(int n) {
    AffMat m(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = j; i < n; ++i) {
        m(i, j) = new_var();
        m(j, i) = m(i, j);
      }
    return m;
  }

  AffMat new_psd_matrix(int n) {
    AffMat m = new_sym_matrix(n);
    add_psd(m);
    return m;
  }

  void add_nonneg(LinExpr e) {
    e.compress();
    nonneg_.push_back(std::move(e));
  }
  // a <= b
  void add_le(const LinExpr& a, const LinExpr& b) { add_nonneg(b - a); }
  void add_eq(LinExpr e) {
    e.compress();
    eq_.push_back(std::move(e));
  }
  void add_eq(const LinExpr& a, const LinExpr& b) { add_eq(a - b); }

  void add_soc(LinExpr t, std::vector<LinExpr> x) {
    t.compress();
    for (auto& e : x) e.compress();
    soc_.push_back({std::move(t), std::move(x)});
  }

  // Requires m symmetric in value; only the lower triangle is read.
  void add_psd(AffMat m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("add_psd: matrix must be square");
    if (m.rows() == 0) return;
    m.compress();
    psd_.push_back(std::move(m));
  }

  void minimize(LinExpr obj) {
    obj.compress();
    objective_ = std::move(obj);
  }

  const LinExpr& objective() const { return objective_; }
  const std::vector<LinExpr>& nonneg() const { return nonneg_; }
  const std::vector<LinExpr>& equalities() const { return eq_; }
  const std::vector<SocConstraint>& socs() const { return soc_; }
  const std::vector<AffMat>& psds() const { return psd_; }

 private:
  int nvars_ = 0;
  LinExpr objective_;
  std::vector<LinExpr> nonneg_;
  std::vector<LinExpr> eq_;
  std::vector<SocConstraint> soc_;
  std::vector<AffMat> psd_;
};

// Assembles [[A, B], [B', D]] as a single PSD constraint.
inline AffMat build_lmi_block(const AffMat& a, const AffMat& b, const AffMat& d) {
  if (a.rows() != b.rows() || d.rows() != b.cols())
    throw std::invalid_argument("build_lmi_block: inconsistent block sizes");
  return assemble({{a, b}, {b.transpose(), d}});
}

}  // namespace robinv::conic
