#pragma once

#include "robinv/geometry.hpp"
#include "robinv/model.hpp"

#include <cmath>
#include <vector>

namespace robinv {

// Orthonormal DCT-II matrix: (O x)_i = c_i sum_j cos(pi (j + 1/2) i / n) x_j.
inline MatrixXd dct_matrix(int n) {
  require(n >= 1, "dct_matrix: n must be positive");
  MatrixXd O(n, n);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double c = std::sqrt((i == 0 ? 1.0 : 2.0) / n);
    for (int j = 0; j < n; ++j) O(i, j) = c * std::cos(pi * (j + 0.5) * i / n);
  }
  return O;
}

inline VectorXd gaussian_kernel(int length = 9, double width = 2.0) {
  require(length >= 1 && width > 0.0, "gaussian_kernel: bad parameters");
  VectorXd k(length);
  double c = 0.5 * (length - 1);
  for (int d = 0; d < length; ++d) k(d) = std::exp(-0.5 * (d - c) * (d - c) / (width * width));
  return k / k.sum();
}

struct DeconvScenario {
  UncertaintyModel model;
  EllitopeSpec X;
  ErrorNorm norm;
  VectorXd kernel;
};

// Convolution matrix (A x)_i = sum_d k_d x_{i-d}, zero outside [0, n).
inline MatrixXd convolution_matrix(const VectorXd& kernel, int m, int n) {
  MatrixXd A = MatrixXd::Zero(m, n);
  for (int i = 0; i < m; ++i)
    for (int d = 0; d < kernel.size(); ++d) {
      int j = i - d;
      if (j >= 0 && j < n) A(i, j) = kernel(d);
    }
  return A;
}

// X = { x : sum_i w_i [D x]_i^2 <= 1 }, D = O' the inverse DCT, w_i = i^2 by default, perturbation A_alpha = gamma * shift_alpha.
inline DeconvScenario build_deconv_model(int n, int m, int nu, const VectorXd& kernel, double gamma, double sigma = 1e-4,
                                         const VectorXd& weights = VectorXd()) {
  require(n >= 1 && m >= 1 && nu >= 1 && nu <= n, "build_deconv_model: need 1 <= nu <= n");
  require(kernel.size() >= 1 && gamma >= 0.0, "build_deconv_model: bad kernel or gamma");
  require(weights.size() == 0 || (weights.size() == n && weights.minCoeff() > 0.0), "build_deconv_model: weights must be n positive numbers");
  DeconvScenario s;
  s.kernel = kernel;
  s.model.A = convolution_matrix(kernel, m, n);
  s.model.B = MatrixXd::Identity(nu, n);
  s.model.sigma = sigma;
  if (gamma > 0.0)
    for (int a = 0; a < kernel.size(); ++a) {
      VectorXd e = VectorXd::Zero(kernel.size());
      e(a) = gamma;
      s.model.A_alpha.push_back(convolution_matrix(e, m, n));
    }
  MatrixXd O = dct_matrix(n);
  VectorXd w = weights;
  if (w.size() == 0) {
    w.resize(n);
    for (int i = 0; i < n; ++i) w(i) = static_cast<double>(i + 1) * (i + 1);
  }
  s.X = EllitopeSpec::ellipsoid(O * w.asDiagonal() * O.transpose());
  s.norm = ErrorNorm::euclidean(nu);
  return s;
}

inline DeconvScenario build_deconv_model(int n = 32, int m = 32, int nu = 16, double gamma = 0.01) {
  return build_deconv_model(n, m, nu, gaussian_kernel(), gamma);
}

// The smooth-signal model written over the unit Euclidean ball: x = F u, F = O' diag(1/i) O, u in the ball.
inline DeconvScenario build_deconv_ball_model(int n, int m, int nu, double gamma, double sigma = 1e-2) {
  DeconvScenario s = build_deconv_model(n, m, nu, gaussian_kernel(), gamma, sigma);
  MatrixXd O = dct_matrix(n);
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = 1.0 / (i + 1);
  s.model = fold_image(s.model, O * w.asDiagonal() * O.transpose());
  s.X = EllitopeSpec::unit_ball(n);
  return s;
}

}  // namespace robinv
