#pragma once

#include "robinv/modeling.hpp"

#include <cstdint>
#include <random>

namespace robinv {

struct QuadMaxBound {
  double value = 0.0;
  VectorXd lambda;
  double residual = 0.0;  // min eigenvalue of sum_k lambda_k T_k - C
  int iterations = 0;
};

inline double quadmax_tightness(int K) { return 3.0 * std::log(std::sqrt(3.0) * K); }

// min phi(lambda) s.t. lambda >= 0, sum_k lambda_k T_k >= C.  Upper bound on max_{x in X} x'Cx.
inline QuadMaxBound opt_upper(const MatrixXd& C, const EllitopeSpec& X, const conic::SolverOptions& opt = {}) {
  EllitopeSpec Y = checked(X);
  MatrixXd Cy = Y.P ? MatrixXd(Y.P->transpose() * sym(C) * *Y.P) : sym(C);
  require_shape(Cy, Y.N(), Y.N(), "opt_upper: C");
  Program prog;
  auto lam = prog.new_nonnegs(Y.K());
  AffMat lmi = weighted_sum(lam, Y.T);
  lmi += -Cy;
  prog.add_psd(lmi);
  prog.minimize(support_bound(prog, Y.base, lam));
  auto sol = conic::solve_or_throw(prog, opt, "opt_upper");
  QuadMaxBound r;
  r.lambda = sol.value(lam).cwiseMax(0.0);
  r.value = Y.base.support(r.lambda);
  MatrixXd S = -Cy;
  for (int k = 0; k < Y.K(); ++k) S += r.lambda(k) * Y.T[static_cast<size_t>(k)];
  r.residual = lambda_min(S);
  r.iterations = sol.iterations;
  return r;
}

struct QuadMaxLower {
  double value = 0.0;
  VectorXd x;
};

// Randomized lower bound: radial-projection gradient ascent from random starts, in whitened coordinates.
inline QuadMaxLower opt_bruteforce(const MatrixXd& C, const EllitopeSpec& X, int n_starts = 1000, std::uint64_t seed = 1) {
  EllitopeSpec Y = whitened(X);
  MatrixXd Cy = Y.P ? MatrixXd(Y.P->transpose() * sym(C) * *Y.P) : sym(C);
  const int N = Y.N();
  auto f = [&](const VectorXd& y) { return y.dot(Cy * y); };
  auto project = [&](const VectorXd& y) -> VectorXd {
    double g = gauge(y, Y);
    return g > 0.0 ? VectorXd(y / g) : y;
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  QuadMaxLower best;
  best.x = VectorXd::Zero(N);
  best.value = 0.0;
  const double cn = std::max(spectral_norm(Cy), 1e-300);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Cy);
  for (int s = 0; s < n_starts; ++s) {
    VectorXd y(N);
    if (s == 0)
      y = es.eigenvectors().col(N - 1);
    else
      for (int i = 0; i < N; ++i) y(i) = nd(rng);
    y = project(y);
    double fy = f(y);
    double step = 1.0 / cn;
    for (int it = 0; it < 500 && step > 1e-12 / cn; ++it) {
      VectorXd cand = project(y + step * (2.0 * Cy * y));
      double fc = f(cand);
      if (fc > fy + 1e-15 * std::abs(fy)) {
        double gain = fc - fy;
        y = cand;
        fy = fc;
        step *= 1.5;
        if (gain < 1e-13 * std::max(1.0, std::abs(fy))) break;
      } else {
        step *= 0.5;
      }
    }
    if (fy > best.value) {
      best.value = fy;
      best.x = Y.P ? VectorXd(*Y.P * y) : y;
    }
  }
  return best;
}

}  // namespace robinv
