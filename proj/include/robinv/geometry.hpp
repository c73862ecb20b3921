#pragma once

#include "robinv/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace robinv {

enum class BaseKind { box, pball, simplex };

inline const char* to_string(BaseKind k) {
  switch (k) {
    case BaseKind::box: return "box";
    case BaseKind::pball: return "p-ball";
    case BaseKind::simplex: return "simplex";
  }
  return "?";
}

// Convex compact monotone set in R^K_+ with nonempty interior.
//   box:     0 <= t_k <= s_k
//   pball:   t >= 0, || t / s ||_{p/2} <= 1   (p >= 2, p = inf allowed)
//   simplex: t >= 0, sum_k t_k / s_k <= 1
struct BaseSet {
  BaseKind kind = BaseKind::box;
  int K = 1;
  double p = 2.0;
  VectorXd scale;  // empty means all ones

  static BaseSet box(int K) { return {BaseKind::box, K, 2.0, VectorXd()}; }
  static BaseSet pball(int K, double p) { return {BaseKind::pball, K, p, VectorXd()}; }
  static BaseSet simplex(const VectorXd& s) { return {BaseKind::simplex, static_cast<int>(s.size()), 2.0, s}; }

  VectorXd scales() const { return scale.size() == 0 ? VectorXd::Ones(K) : scale; }

  // Exponent q = p/2 of the norm defining the p-ball.
  double q() const { return std::isinf(p) ? std::numeric_limits<double>::infinity() : p / 2.0; }

  void check() const {
    require(K >= 1, "BaseSet: K must be positive");
    require(scale.size() == 0 || scale.size() == K, "BaseSet: scale has wrong length");
    require(scale.size() == 0 || scale.minCoeff() > 0.0, "BaseSet: scale entries must be positive");
    if (kind == BaseKind::pball) require(p >= 2.0, "BaseSet: p-ball requires p >= 2");
  }

  // phi(y) = max_{t in set} t'y
  double support(const VectorXd& y) const {
    require(y.size() == K, "BaseSet::support: dimension mismatch");
    VectorXd sy = scales().cwiseProduct(y.cwiseMax(0.0));
    switch (kind) {
      case BaseKind::box: return sy.sum();
      case BaseKind::simplex: return sy.maxCoeff();
      case BaseKind::pball: {
        double qq = q();
        if (std::isinf(qq)) return sy.sum();
        if (qq == 1.0) return sy.maxCoeff();
        double r = qq / (qq - 1.0);
        return std::pow(sy.array().pow(r).sum(), 1.0 / r);
      }
    }
    return 0.0;
  }

  // Minkowski gauge of the set on R^K_+ (negative entries are clipped).
  double gauge(const VectorXd& t) const {
    require(t.size() == K, "BaseSet::gauge: dimension mismatch");
    VectorXd u = t.cwiseMax(0.0).cwiseQuotient(scales());
    switch (kind) {
      case BaseKind::box: return u.maxCoeff();
      case BaseKind::simplex: return u.sum();
      case BaseKind::pball: {
        double qq = q();
        if (std::isinf(qq)) return u.maxCoeff();
        return std::pow(u.array().pow(qq).sum(), 1.0 / qq);
      }
    }
    return 0.0;
  }

  bool contains(const VectorXd& t, double tol = 1e-12) const {
    if (t.minCoeff() < -tol) return false;
    return gauge(t) <= 1.0 + tol;
  }

  // An interior-ish point with unit gauge, used for sampling.
  VectorXd max_point() const {
    VectorXd s = scales();
    switch (kind) {
      case BaseKind::box: return s;
      case BaseKind::simplex: return s / static_cast<double>(K);
      case BaseKind::pball: {
        double qq = q();
        if (std::isinf(qq)) return s;
        return s * std::pow(static_cast<double>(K), -1.0 / qq);
      }
    }
    return s;
  }
};

// X = { P y : exists t in base, y' T_k y <= t_k }.
struct EllitopeSpec {
  std::vector<MatrixXd> T;
  BaseSet base;
  std::optional<MatrixXd> P;

  int N() const { return T.empty() ? 0 : static_cast<int>(T[0].rows()); }
  int n() const { return P ? static_cast<int>(P->rows()) : N(); }
  int K() const { return static_cast<int>(T.size()); }
  bool basic() const { return !P.has_value(); }

  static EllitopeSpec unit_ball(int n) { return {{MatrixXd::Identity(n, n)}, BaseSet::box(1), std::nullopt}; }
  static EllitopeSpec ellipsoid(const MatrixXd& T) { return {{T}, BaseSet::box(1), std::nullopt}; }
  static EllitopeSpec unit_box(int n) {
    EllitopeSpec e;
    for (int k = 0; k < n; ++k) {
      MatrixXd t = MatrixXd::Zero(n, n);
      t(k, k) = 1.0;
      e.T.push_back(t);
    }
    e.base = BaseSet::box(n);
    return e;
  }

  VectorXd quad_values(const VectorXd& y) const {
    VectorXd v(K());
    for (int k = 0; k < K(); ++k) v(k) = y.dot(T[k] * y);
    return v;
  }
};

// Y = { P y : exists r in base, S_i[y]^2 <= r_i I }, S_i[y] = sum_j y_j S[i][j].
struct SpectratopeSpec {
  std::vector<std::vector<MatrixXd>> S;
  BaseSet base;
  std::optional<MatrixXd> P;

  int N() const { return S.empty() ? 0 : static_cast<int>(S[0].size()); }
  int n() const { return P ? static_cast<int>(P->rows()) : N(); }
  int blocks() const { return static_cast<int>(S.size()); }
  int d(int i) const { return S[static_cast<size_t>(i)].empty() ? 0 : static_cast<int>(S[static_cast<size_t>(i)][0].rows()); }
  int D() const {
    int s = 0;
    for (int i = 0; i < blocks(); ++i) s += d(i);
    return s;
  }

  MatrixXd block_at(int i, const VectorXd& y) const {
    const auto& Si = S[static_cast<size_t>(i)];
    MatrixXd m = MatrixXd::Zero(d(i), d(i));
    for (int j = 0; j < N(); ++j)
      if (y(j) != 0.0) m += y(j) * Si[static_cast<size_t>(j)];
    return m;
  }

  // Lifted map: sum_{j,l} Y_jl S^{ij} S^{il}.
  MatrixXd lift(int i, const MatrixXd& Y) const {
    const auto& Si = S[static_cast<size_t>(i)];
    MatrixXd m = MatrixXd::Zero(d(i), d(i));
    for (int j = 0; j < N(); ++j) {
      MatrixXd acc = MatrixXd::Zero(d(i), d(i));
      for (int l = 0; l < N(); ++l)
        if (Y(j, l) != 0.0) acc += Y(j, l) * Si[static_cast<size_t>(l)];
      m += Si[static_cast<size_t>(j)] * acc;
    }
    return sym(m);
  }

  // Adjoint of the lifted map: [Tr(V S^{ij} S^{il})]_{jl}.
  MatrixXd lift_adjoint(int i, const MatrixXd& V) const {
    const auto& Si = S[static_cast<size_t>(i)];
    const int n = N();
    MatrixXd out(n, n);
    std::vector<MatrixXd> VS;
    VS.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) VS.push_back(V * Si[static_cast<size_t>(j)]);
    for (int j = 0; j < n; ++j)
      for (int l = j; l < n; ++l) {
        double t = (VS[static_cast<size_t>(j)].transpose().array() * Si[static_cast<size_t>(l)].array()).sum();
        out(j, l) = t;
        out(l, j) = t;
      }
    return out;
  }

  static SpectratopeSpec unit_ball(int n) {
    SpectratopeSpec s;
    s.base = BaseSet::box(1);
    s.S.emplace_back();
    for (int j = 0; j < n; ++j) {
      MatrixXd m = MatrixXd::Zero(n + 1, n + 1);
      m(0, j + 1) = 1.0;
      m(j + 1, 0) = 1.0;
      s.S[0].push_back(m);
    }
    return s;
  }
};

// Ellitope rewritten as a spectratope: T_k = C_k C_k' gives a 1x1 block when
// rank(T_k) = 1 and an arrow block [[0, u'], [u, 0]], u = C_k' y, otherwise.
inline SpectratopeSpec to_spectratope(const EllitopeSpec& e) {
  SpectratopeSpec s;
  s.base = e.base;
  s.P = e.P;
  const int N = e.N();
  for (const auto& T : e.T) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(T));
    const VectorXd& ev = es.eigenvalues();
    double top = std::max(ev.maxCoeff(), 0.0);
    std::vector<VectorXd> cols;
    for (int i = 0; i < ev.size(); ++i)
      if (ev(i) > 1e-12 * std::max(1.0, top)) cols.push_back(std::sqrt(ev(i)) * es.eigenvectors().col(i));
    std::vector<MatrixXd> blk;
    const int r = static_cast<int>(cols.size());
    if (r <= 1) {
      for (int j = 0; j < N; ++j) {
        MatrixXd m(1, 1);
        m(0, 0) = r == 1 ? cols[0](j) : 0.0;
        blk.push_back(m);
      }
    } else {
      for (int j = 0; j < N; ++j) {
        MatrixXd m = MatrixXd::Zero(r + 1, r + 1);
        for (int c = 0; c < r; ++c) {
          m(0, c + 1) = cols[static_cast<size_t>(c)](j);
          m(c + 1, 0) = cols[static_cast<size_t>(c)](j);
        }
        blk.push_back(m);
      }
    }
    s.S.push_back(std::move(blk));
  }
  return s;
}

// ||v|| = max_l || R_l^{1/2} v ||_2
struct ErrorNorm {
  std::vector<MatrixXd> R;
  std::vector<MatrixXd> R_sqrt;

  ErrorNorm() = default;
  explicit ErrorNorm(std::vector<MatrixXd> r) : R(std::move(r)) {
    for (auto& m : R) {
      m = sym(m);
      R_sqrt.push_back(psd_sqrt(m));
    }
  }
  static ErrorNorm euclidean(int nu) { return ErrorNorm({MatrixXd::Identity(nu, nu)}); }

  int L() const { return static_cast<int>(R.size()); }
  int nu() const { return R.empty() ? 0 : static_cast<int>(R[0].rows()); }

  double operator()(const VectorXd& v) const {
    double m = 0.0;
    for (const auto& s : R_sqrt) m = std::max(m, (s * v).norm());
    return m;
  }
};

struct Diagnostics {
  bool valid = true;
  std::vector<std::string> issues;
  double identity_residual = 0.0;

  void fail(const std::string& s) {
    valid = false;
    issues.push_back(s);
  }
  std::string summary() const {
    std::ostringstream os;
    for (const auto& s : issues) os << s << "; ";
    return os.str();
  }
};

inline void validate_base(const BaseSet& b, Diagnostics& d) {
  if (b.K < 1) d.fail("base: K must be positive");
  if (b.scale.size() != 0 && b.scale.size() != b.K) d.fail("base: scale length differs from K");
  if (b.scale.size() != 0 && b.scale.size() == b.K && b.scale.minCoeff() <= 0.0) d.fail("base: non-positive scale");
  if (b.kind == BaseKind::pball && !(b.p >= 2.0)) d.fail("base: p-ball needs p >= 2");
}

inline Diagnostics validate(const EllitopeSpec& e) {
  Diagnostics d;
  validate_base(e.base, d);
  if (e.T.empty()) {
    d.fail("ellitope: no matrices");
    return d;
  }
  if (e.base.K != e.K()) d.fail("ellitope: base dimension differs from number of matrices");
  const int N = e.N();
  MatrixXd sum = MatrixXd::Zero(N, N);
  for (int k = 0; k < e.K(); ++k) {
    const MatrixXd& T = e.T[static_cast<size_t>(k)];
    if (T.rows() != N || T.cols() != N) {
      d.fail("ellitope: T_" + std::to_string(k) + " has wrong shape");
      continue;
    }
    if (!T.allFinite()) d.fail("ellitope: T_" + std::to_string(k) + " not finite");
    if ((T - T.transpose()).norm() > 1e-10 * std::max(1.0, T.norm())) d.fail("ellitope: T_" + std::to_string(k) + " not symmetric");
    double lmin = lambda_min(T);
    if (lmin < -1e-10) d.fail("ellitope: T_" + std::to_string(k) + " not PSD (min eigenvalue " + std::to_string(lmin) + ")");
    sum += T;
  }
  if (d.valid && lambda_min(sum) <= 1e-10) d.fail("ellitope: sum of T_k is not positive definite");
  if (e.P && e.P->cols() != N) d.fail("ellitope: P has wrong number of columns");
  return d;
}

// Copy with T_k symmetrized and eigenvalues in [-1e-10, 0) clipped; throws when invalid.
inline EllitopeSpec checked(const EllitopeSpec& e) {
  Diagnostics d = validate(e);
  if (!d.valid) throw std::invalid_argument(d.summary());
  EllitopeSpec c = e;
  for (auto& T : c.T) T = lambda_min(T) < 0.0 ? psd_clip(T) : sym(T);
  return c;
}

// Same set with sum_k T_k = I, the change of variables folded into P.
inline EllitopeSpec whitened(const EllitopeSpec& e) {
  EllitopeSpec c = checked(e);
  MatrixXd sum = MatrixXd::Zero(c.N(), c.N());
  for (const auto& T : c.T) sum += T;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sum);
  MatrixXd W = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  for (auto& T : c.T) T = sym(W * T * W);
  c.P = c.P ? MatrixXd(*c.P * W) : W;
  return c;
}

inline Diagnostics validate(const SpectratopeSpec& s, unsigned seed = 1) {
  Diagnostics d;
  validate_base(s.base, d);
  if (s.S.empty()) {
    d.fail("spectratope: no blocks");
    return d;
  }
  if (s.base.K != s.blocks()) d.fail("spectratope: base dimension differs from number of blocks");
  const int N = s.N();
  for (int i = 0; i < s.blocks(); ++i) {
    if (static_cast<int>(s.S[static_cast<size_t>(i)].size()) != N) {
      d.fail("spectratope: block " + std::to_string(i) + " has wrong number of matrices");
      return d;
    }
    for (int j = 0; j < N; ++j) {
      const MatrixXd& m = s.S[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (m.rows() != s.d(i) || m.cols() != s.d(i)) d.fail("spectratope: S^{" + std::to_string(i) + "," + std::to_string(j) + "} wrong shape");
      else if ((m - m.transpose()).norm() > 1e-10 * std::max(1.0, m.norm()))
        d.fail("spectratope: S^{" + std::to_string(i) + "," + std::to_string(j) + "} not symmetric");
    }
  }
  if (!d.valid) return d;
  MatrixXd gram = MatrixXd::Zero(N, N);
  for (int i = 0; i < s.blocks(); ++i)
    for (int j = 0; j < N; ++j)
      for (int l = j; l < N; ++l) {
        double t = (s.S[static_cast<size_t>(i)][static_cast<size_t>(j)].array() * s.S[static_cast<size_t>(i)][static_cast<size_t>(l)].array()).sum();
        gram(j, l) += t;
        if (l != j) gram(l, j) += t;
      }
  if (lambda_min(gram) <= 1e-10 * std::max(1.0, lambda_max(gram))) d.fail("spectratope: sum_i S_i^2[y] is not positive definite");

  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    MatrixXd Y = MatrixXd::Zero(N, N);
    std::vector<VectorXd> gs;
    for (int r = 0; r < 3; ++r) {
      VectorXd v(N);
      for (int j = 0; j < N; ++j) v(j) = nd(g);
      Y += v * v.transpose();
      gs.push_back(v);
    }
    for (int i = 0; i < s.blocks(); ++i) {
      MatrixXd lhs = s.lift(i, Y);
      MatrixXd rhs = MatrixXd::Zero(s.d(i), s.d(i));
      for (const auto& v : gs) {
        MatrixXd b = s.block_at(i, v);
        rhs += b * b;
      }
      worst = std::max(worst, (lhs - rhs).norm() / std::max(1.0, rhs.norm()));
    }
  }
  d.identity_residual = worst;
  if (worst > 1e-10) d.fail("spectratope: lifted identity residual " + std::to_string(worst));
  if (s.P && s.P->cols() != N) d.fail("spectratope: P has wrong number of columns");
  return d;
}

namespace detail {

// Bisection on s for membership of y / s; v holds the quadratic values at y.
inline double radial_gauge(const BaseSet& base, const VectorXd& v) {
  if (v.maxCoeff() <= 0.0) return 0.0;
  auto member = [&](double s) { return base.contains(v / (s * s), 0.0); };
  double lo = 0.0, hi = 1.0;
  if (member(hi)) {
    while (hi > 1e-150 && member(0.5 * hi)) hi *= 0.5;
    lo = 0.5 * hi;
  } else {
    while (!member(hi) && hi < 1e150) {
      lo = hi;
      hi *= 2.0;
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    if (member(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace detail

// Minkowski function of a basic ellitope at y.
inline double gauge(const VectorXd& y, const EllitopeSpec& e) {
  require(y.size() == e.N(), "gauge: dimension mismatch");
  return detail::radial_gauge(e.base, e.quad_values(y));
}

// Minkowski function of a basic spectratope at y.
inline double gauge(const VectorXd& y, const SpectratopeSpec& s) {
  require(y.size() == s.N(), "gauge: dimension mismatch");
  VectorXd v(s.blocks());
  for (int i = 0; i < s.blocks(); ++i) {
    double nrm = spectral_norm(s.block_at(i, y));
    v(i) = nrm * nrm;
  }
  return detail::radial_gauge(s.base, v);
}

inline bool contains(const EllitopeSpec& e, const VectorXd& y, double tol = 1e-9) { return gauge(y, e) <= 1.0 + tol; }
inline bool contains(const SpectratopeSpec& s, const VectorXd& y, double tol = 1e-9) { return gauge(y, s) <= 1.0 + tol; }

// Random point on the relative boundary of a basic ellitope.
template <class Rng>
VectorXd sample_boundary(const EllitopeSpec& e, Rng& g) {
  std::normal_distribution<double> nd;
  VectorXd y(e.N());
  for (int i = 0; i < e.N(); ++i) y(i) = nd(g);
  double s = gauge(y, e);
  return s > 0.0 ? VectorXd(y / s) : y;
}

}  // namespace robinv
