#pragma once

#include "robinv/linalg.hpp"

#include <cmath>

#include <string>
#include <vector>

namespace robinv {

// omega = A[eta] x + sigma xi,  A[eta] = A + sum_alpha eta_alpha A_alpha,  estimate B x.
struct UncertaintyModel {
  MatrixXd A;
  std::vector<MatrixXd> A_alpha;
  MatrixXd B;
  double sigma = 0.0;
  std::string noise_law = "gaussian";
  std::string perturbation_law = "gaussian";
  double noise_dof = 3.0;
  double perturbation_dof = 3.0;
  double erasure_gamma = 0.0;
  double erasure_rho = 0.0;

  int m() const { return static_cast<int>(A.rows()); }
  int n() const { return static_cast<int>(A.cols()); }
  int nu() const { return static_cast<int>(B.rows()); }
  int q() const { return static_cast<int>(A_alpha.size()); }

  MatrixXd perturbed(const VectorXd& eta) const {
    MatrixXd M = A;
    for (int a = 0; a < q(); ++a) M += eta(a) * A_alpha[static_cast<size_t>(a)];
    return M;
  }

  void check() const {
    require(A.rows() > 0 && A.cols() > 0, "model: A is empty");
    require(B.cols() == A.cols(), "model: B must have as many columns as A");
    for (const auto& Aa : A_alpha) require_shape(Aa, A.rows(), A.cols(), "model: A_alpha");
    require(sigma >= 0.0 && std::isfinite(sigma), "model: sigma must be nonnegative");
    require(A.allFinite() && B.allFinite(), "model: non-finite entries");
  }
};

// Folds x = P y into the model matrices.
inline UncertaintyModel fold_image(const UncertaintyModel& m, const MatrixXd& P) {
  UncertaintyModel r = m;
  r.A = m.A * P;
  r.B = m.B * P;
  for (auto& Aa : r.A_alpha) Aa = Aa * P;
  return r;
}

}  // namespace robinv
