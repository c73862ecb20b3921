#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace robinv::conic {

struct Term {
  int var;
  double coef;
};

// Affine scalar expression: constant + sum coef * x[var].
class LinExpr {
 public:
  double constant = 0.0;
  std::vector<Term> terms;

  LinExpr() = default;
  LinExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)

  static LinExpr variable(int v, double coef = 1.0) {
    LinExpr e;
    e.terms.push_back({v, coef});
    return e;
  }

  bool is_zero() const { return constant == 0.0 && terms.empty(); }
  bool is_constant() const { return terms.empty(); }

  LinExpr& operator+=(const LinExpr& o) {
    constant += o.constant;
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) {
    constant -= o.constant;
    terms.reserve(terms.size() + o.terms.size());
    for (const auto& t : o.terms) terms.push_back({t.var, -t.coef});
    return *this;
  }
  LinExpr& operator*=(double a) {
    constant *= a;
    for (auto& t : terms) t.coef *= a;
    return *this;
  }
  void add_scaled(const LinExpr& o, double a) {
    if (a == 0.0) return;
    constant += a * o.constant;
    terms.reserve(terms.size() + o.terms.size());
    for (const auto& t : o.terms) terms.push_back({t.var, a * t.coef});
  }

  // Merge duplicate variables and drop zero coefficients.
  void compress() {
    if (terms.size() < 2) {
      if (terms.size() == 1 && terms[0].coef == 0.0) terms.clear();
      return;
    }
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
    size_t w = 0;
    for (size_t r = 0; r < terms.size();) {
      int v = terms[r].var;
      double c = 0.0;
      while (r < terms.size() && terms[r].var == v) c += terms[r++].coef;
      if (c != 0.0) terms[w++] = {v, c};
    }
    terms.resize(w);
  }

  double value(const Eigen::VectorXd& x) const {
    double s = constant;
    for (const auto& t : terms) s += t.coef * x(t.var);
    return s;
  }
};

inline LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
inline LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
inline LinExpr operator-(LinExpr a) { return a *= -1.0; }
inline LinExpr operator*(double s, LinExpr a) { return a *= s; }
inline LinExpr operator*(LinExpr a, double s) { return a *= s; }

inline LinExpr sum(const std::vector<LinExpr>& v) {
  LinExpr s;
  for (const auto& e : v) s += e;
  s.compress();
  return s;
}

// Matrix whose entries are affine expressions. Column-major storage.
class AffMat {
 public:
  AffMat() = default;
  AffMat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols) {}

  static AffMat constant(const Eigen::MatrixXd& m) {
    AffMat a(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int j = 0; j < a.cols_; ++j)
      for (int i = 0; i < a.rows_; ++i) a(i, j).constant = m(i, j);
    return a;
  }

  // e * M, entrywise.
  static AffMat scaled(const LinExpr& e, const Eigen::MatrixXd& m) {
    AffMat a(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    a.add_scaled(e, m);
    return a;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  LinExpr& operator()(int i, int j) { return data_[static_cast<size_t>(j) * rows_ + i]; }
  const LinExpr& operator()(int i, int j) const { return data_[static_cast<size_t>(j) * rows_ + i]; }

  void add_scaled(const LinExpr& e, const Eigen::MatrixXd& m) {
    if (m.rows() != rows_ || m.cols() != cols_) throw std::invalid_argument("AffMat::add_scaled: shape mismatch");
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i)
        if (m(i, j) != 0.0) (*this)(i, j).add_scaled(e, m(i, j));
  }

  AffMat transpose() const {
    AffMat t(cols_, rows_);
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  AffMat block(int r0, int c0, int nr, int nc) const {
    AffMat b(nr, nc);
    for (int j = 0; j < nc; ++j)
      for (int i = 0; i < nr; ++i) b(i, j) = (*this)(r0 + i, c0 + j);
    return b;
  }

  void set_block(int r0, int c0, const AffMat& b) {
    for (int j = 0; j < b.cols(); ++j)
      for (int i = 0; i < b.rows(); ++i) (*this)(r0 + i, c0 + j) = b(i, j);
  }

  void compress() {
    for (auto& e : data_) e.compress();
  }

  AffMat& operator+=(const AffMat& o) {
    check_same(o);
    for (size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  AffMat& operator-=(const AffMat& o) {
    check_same(o);
    for (size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  AffMat& operator*=(double s) {
    for (auto& e : data_) e *= s;
    return *this;
  }
  AffMat& operator+=(const Eigen::MatrixXd& m) {
    if (m.rows() != rows_ || m.cols() != cols_) throw std::invalid_argument("AffMat: shape mismatch");
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) (*this)(i, j).constant += m(i, j);
    return *this;
  }

  Eigen::MatrixXd value(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd v(rows_, cols_);
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) v(i, j) = (*this)(i, j).value(x);
    return v;
  }

  std::vector<LinExpr> flatten() const { return data_; }

 private:
  void check_same(const AffMat& o) const {
    if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("AffMat: shape mismatch");
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<LinExpr> data_;
};

inline AffMat operator+(AffMat a, const AffMat& b) { return a += b; }
inline AffMat operator-(AffMat a, const AffMat& b) { return a -= b; }
inline AffMat operator*(double s, AffMat a) { return a *= s; }

// C * X
inline AffMat operator*(const Eigen::MatrixXd& c, const AffMat& x) {
  if (c.cols() != x.rows()) throw std::invalid_argument("AffMat product: shape mismatch");
  AffMat r(static_cast<int>(c.rows()), x.cols());
  for (int j = 0; j < x.cols(); ++j)
    for (int k = 0; k < x.rows(); ++k) {
      const LinExpr& e = x(k, j);
      if (e.is_zero()) continue;
      for (int i = 0; i < c.rows(); ++i)
        if (c(i, k) != 0.0) r(i, j).add_scaled(e, c(i, k));
    }
  r.compress();
  return r;
}

// X * C
inline AffMat operator*(const AffMat& x, const Eigen::MatrixXd& c) {
  if (x.cols() != c.rows()) throw std::invalid_argument("AffMat product: shape mismatch");
  AffMat r(x.rows(), static_cast<int>(c.cols()));
  for (int k = 0; k < x.cols(); ++k)
    for (int i = 0; i < x.rows(); ++i) {
      const LinExpr& e = x(i, k);
      if (e.is_zero()) continue;
      for (int j = 0; j < c.cols(); ++j)
        if (c(k, j) != 0.0) r(i, j).add_scaled(e, c(k, j));
    }
  r.compress();
  return r;
}

// Assemble a block matrix. Empty (0x0) entries are treated as zero blocks
// sized by their row / column neighbours.
inline AffMat assemble(const std::vector<std::vector<AffMat>>& blocks) {
  const size_t br = blocks.size();
  if (br == 0) return AffMat();
  const size_t bc = blocks[0].size();
  std::vector<int> rh(br, -1), cw(bc, -1);
  for (size_t i = 0; i < br; ++i) {
    if (blocks[i].size() != bc) throw std::invalid_argument("assemble: ragged block grid");
    for (size_t j = 0; j < bc; ++j) {
      const AffMat& b = blocks[i][j];
      if (b.rows() == 0 && b.cols() == 0) continue;
      if (rh[i] >= 0 && rh[i] != b.rows()) throw std::invalid_argument("assemble: row height mismatch");
      if (cw[j] >= 0 && cw[j] != b.cols()) throw std::invalid_argument("assemble: column width mismatch");
      rh[i] = b.rows();
      cw[j] = b.cols();
    }
  }
  int nr = 0, nc = 0;
  for (auto h : rh) {
    if (h < 0) throw std::invalid_argument("assemble: undetermined row height");
    nr += h;
  }
  for (auto w : cw) {
    if (w < 0) throw std::invalid_argument("assemble: undetermined column width");
    nc += w;
  }
  AffMat out(nr, nc);
  int r0 = 0;
  for (size_t i = 0; i < br; ++i) {
    int c0 = 0;
    for (size_t j = 0; j < bc; ++j) {
      const AffMat& b = blocks[i][j];
      if (b.rows() > 0 || b.cols() > 0) out.set_block(r0, c0, b);
      c0 += cw[j];
    }
    r0 += rh[i];
  }
  return out;
}

inline LinExpr trace(const AffMat& m) {
  LinExpr s;
  for (int i = 0; i < std::min(m.rows(), m.cols()); ++i) s += m(i, i);
  s.compress();
  return s;
}

// <C, X> = sum_ij C_ij X_ij
inline LinExpr inner(const Eigen::MatrixXd& c, const AffMat& x) {
  LinExpr s;
  for (int j = 0; j < x.cols(); ++j)
    for (int i = 0; i < x.rows(); ++i)
      if (c(i, j) != 0.0) s.add_scaled(x(i, j), c(i, j));
  s.compress();
  return s;
}

}  // namespace robinv::conic
