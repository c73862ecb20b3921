#include "robinv/deconv.hpp"
#include "robinv/linear_estimator.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace robinv;

namespace {

UncertaintyModel identity_model(int n, double sigma = 0.0) {
  UncertaintyModel m;
  m.A = MatrixXd::Identity(n, n);
  m.B = MatrixXd::Identity(n, n);
  m.sigma = sigma;
  return m;
}

UncertaintyModel random_model(int m, int n, int nu, int q, double gamma, double sigma, unsigned seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  auto rnd = [&](int r, int c) {
    MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = nd(g);
    return M;
  };
  UncertaintyModel u;
  u.A = rnd(m, n) / std::sqrt(static_cast<double>(n));
  u.B = rnd(nu, n) / std::sqrt(static_cast<double>(n));
  u.sigma = sigma;
  for (int a = 0; a < q; ++a) u.A_alpha.push_back(gamma * rnd(m, n) / std::sqrt(static_cast<double>(n)));
  return u;
}

}  // namespace

TEST(RiskBoundLinear, ExactIdentityHasZeroRisk) {
  auto m = identity_model(3);
  auto c = risk_bound_linear(MatrixXd::Identity(3, 3), m, EllitopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 0.05);
  EXPECT_NEAR(c.bound, 0.0, 1e-6);
}

TEST(RiskBoundLinear, ZeroEstimatorOnBallIsOne) {
  auto m = identity_model(3);
  auto c = risk_bound_linear(MatrixXd::Zero(3, 3), m, EllitopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 0.05);
  EXPECT_NEAR(c.bound, 1.0, 1e-6);
  EXPECT_GE(c.lmi_residual, -1e-7);
}

TEST(RiskBoundLinear, CertificateLmisArePsdAndMonotoneInSigma) {
  auto m = random_model(6, 5, 3, 2, 0.1, 0.05, 3);
  auto X = EllitopeSpec::unit_box(5);
  auto nrm = ErrorNorm({MatrixXd::Identity(3, 3), Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal()});
  MatrixXd H = 0.3 * MatrixXd::Ones(6, 3);
  auto c1 = risk_bound_linear(H, m, X, nrm, 0.05);
  EXPECT_GE(c1.lmi_residual, -1e-7);
  m.sigma = 0.2;
  auto c2 = risk_bound_linear(H, m, X, nrm, 0.05);
  EXPECT_GE(c2.bound, c1.bound - 1e-7);
  EXPECT_NEAR(c1.c_eps, 1.0 + std::sqrt(2.0 * std::log(2.0 * 2 / 0.05)), 1e-12);
}

TEST(RiskBoundLinear, RejectsBadInputs) {
  auto m = identity_model(3);
  EXPECT_THROW(risk_bound_linear(MatrixXd::Zero(2, 3), m, EllitopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 0.05),
               std::invalid_argument);
  EXPECT_THROW(risk_bound_linear(MatrixXd::Zero(3, 3), m, EllitopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 1.5),
               std::invalid_argument);
}

TEST(SynthesizeLinear, NoiselessIdentityIsExact) {
  auto r = synthesize_linear(identity_model(4), EllitopeSpec::unit_ball(4), ErrorNorm::euclidean(4), 0.05);
  EXPECT_LE(r.cert.bound, 1e-6);
}

TEST(SynthesizeLinear, ZeroTargetGivesZeroEstimator) {
  auto m = random_model(5, 4, 2, 1, 0.2, 0.1, 5);
  m.B.setZero();
  auto r = synthesize_linear(m, EllitopeSpec::unit_ball(4), ErrorNorm::euclidean(2), 0.05);
  EXPECT_LE(r.H.norm(), 1e-5);
  EXPECT_NEAR(r.cert.bound, 0.0, 1e-6);
}

TEST(SynthesizeLinear, CertificateMatchesSynthesisObjective) {
  auto m = random_model(7, 5, 3, 3, 0.1, 0.05, 11);
  auto r = synthesize_linear(m, EllitopeSpec::unit_box(5), ErrorNorm::euclidean(3), 0.05);
  EXPECT_NEAR(r.cert.bound, r.synthesis_objective, 1e-5 * std::max(1.0, r.cert.bound));
  EXPECT_GE(r.cert.lmi_residual, -1e-7);
}

TEST(SynthesizeLinear, RobustBeatsNominalUnderUncertainty) {
  auto m = random_model(8, 6, 3, 4, 0.3, 0.01, 17);
  auto X = EllitopeSpec::unit_ball(6);
  auto nrm = ErrorNorm::euclidean(3);
  UncertaintyModel nominal = m;
  nominal.A_alpha.clear();
  auto hn = synthesize_linear(nominal, X, nrm, 0.05);
  auto hr = synthesize_linear(m, X, nrm, 0.05);
  double nominal_under_uncertainty = risk_bound_linear(hn.H, m, X, nrm, 0.05).bound;
  EXPECT_LE(hr.cert.bound, nominal_under_uncertainty + 1e-6);
  EXPECT_LE(hn.cert.bound, hr.cert.bound + 1e-6);
}

TEST(SynthesizeLinear, DeconvolutionBoundDominatesMonteCarlo) {
  auto s = build_deconv_model(16, 16, 8, gaussian_kernel(), 0.01, 1e-4);
  auto r = synthesize_linear(s.model, s.X, s.norm, 0.05);
  ASSERT_TRUE(std::isfinite(r.cert.bound));
  std::vector<VectorXd> signals;
  std::mt19937_64 g(3);
  for (int i = 0; i < 3; ++i) signals.push_back(sample_boundary(s.X, g));
  MatrixXd H = r.H;
  Estimator est = [&](const std::vector<VectorXd>& obs) -> VectorXd { return H.transpose() * obs[0]; };
  McOptions o;
  o.n_draws = 300;
  auto mc = monte_carlo_risk(est, s.model, s.norm, signals, NoiseLaw::gaussian(), NoiseLaw::gaussian(), o);
  EXPECT_LE(mc.max_quantile(), r.cert.bound);
}

TEST(RiskBoundExpected, NoiseOnlyEqualsFrobenius) {
  const int m = 5;
  auto mod = identity_model(m, 1.0);
  auto c = risk_bound_expected(MatrixXd::Identity(m, m), 0, mod, EllitopeSpec::unit_ball(m), ErrorNorm::euclidean(m));
  EXPECT_NEAR(c.bound, std::sqrt(static_cast<double>(m)), 1e-6);
}

TEST(RiskBoundExpected, SynthesisImprovesOnZero) {
  auto m = random_model(6, 4, 2, 2, 0.1, 0.1, 23);
  auto X = EllitopeSpec::unit_ball(4);
  auto nrm = ErrorNorm::euclidean(2);
  auto r = synthesize_expected(0, m, X, nrm);
  double zero = risk_bound_expected(MatrixXd::Zero(6, 2), 0, m, X, nrm).bound;
  EXPECT_LE(r.cert.bound, zero + 1e-7);
  EXPECT_NEAR(r.cert.bound, r.synthesis_objective, 1e-5);
}

TEST(GeometricMedian, ScalarExample) {
  std::vector<VectorXd> pts{VectorXd::Constant(1, 0.0), VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 10.0)};
  EXPECT_NEAR(geometric_median(pts, MatrixXd::Identity(1, 1))(0), 1.0, 1e-8);
}

TEST(GeometricMedian, SinglePoint) {
  std::vector<VectorXd> pts{Eigen::Vector2d(3.0, -1.0)};
  EXPECT_LE((geometric_median(pts, MatrixXd::Identity(2, 2)) - pts[0]).norm(), 1e-15);
}

TEST(GeometricMedian, EquilateralTriangleCentroid) {
  const double h = std::sqrt(3.0) / 2.0;
  std::vector<VectorXd> pts{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.5, h)};
  VectorXd z = geometric_median(pts, MatrixXd::Identity(2, 2));
  EXPECT_NEAR(z(0), 0.5, 1e-7);
  EXPECT_NEAR(z(1), h / 3.0, 1e-7);
}

TEST(GeometricMedian, WeightedMetricAndNullDirections) {
  std::vector<VectorXd> pts{Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, 3.0), Eigen::Vector2d(10.0, 8.0)};
  MatrixXd M = Eigen::Vector2d(2.0, 0.0).asDiagonal();
  VectorXd z = geometric_median(pts, M);
  EXPECT_NEAR(z(0), 1.0, 1e-8);
  EXPECT_NEAR(z(1), 4.0, 1e-12);
}

TEST(GeometricMedian, OptimalityAgainstPerturbations) {
  std::mt19937_64 g(9);
  std::normal_distribution<double> nd;
  std::vector<VectorXd> pts;
  for (int k = 0; k < 15; ++k) pts.push_back(VectorXd::NullaryExpr(3, [&] { return nd(g); }));
  MatrixXd M = MatrixXd::Identity(3, 3);
  M(0, 1) = M(1, 0) = 0.3;
  VectorXd z = geometric_median(pts, M);
  auto f = [&](const VectorXd& w) {
    double s = 0.0;
    for (const auto& p : pts) s += (M * (p - w)).norm();
    return s;
  };
  for (int t = 0; t < 50; ++t) EXPECT_GE(f(z + 1e-4 * VectorXd::NullaryExpr(3, [&] { return nd(g); })), f(z) - 1e-10);
}

TEST(ReliableEstimate, SingleComponentReturnsMedian) {
  auto nrm = ErrorNorm::euclidean(2);
  MatrixXd H = MatrixXd::Identity(2, 2);
  std::vector<VectorXd> obs{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.1), Eigen::Vector2d(0.2, 0.9),
                            Eigen::Vector2d(0.4, 0.3)};
  auto r = reliable_estimate({H}, obs, {0.5}, nrm, 0.05);
  ASSERT_EQ(r.medians.size(), 1u);
  EXPECT_LE((r.w - r.medians[0]).norm(), 1e-14);
  EXPECT_FALSE(r.empty_intersection);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(ReliableEstimate, IntersectionOfTwoComponents) {
  auto nrm = ErrorNorm({Eigen::Vector2d(1.0, 0.0).asDiagonal(), Eigen::Vector2d(0.0, 1.0).asDiagonal()});
  MatrixXd H1 = MatrixXd::Identity(2, 2), H2 = MatrixXd::Identity(2, 2);
  H2(0, 0) = 3.0;
  std::vector<VectorXd> obs(40, Eigen::Vector2d(1.0, 2.0));
  auto r = reliable_estimate({H1, H2}, obs, {0.01, 0.01}, nrm, 0.05);
  EXPECT_FALSE(r.empty_intersection);
  EXPECT_NEAR(r.w(0), 1.0, 0.04 + 1e-6);
  EXPECT_NEAR(r.w(1), 2.0, 0.04 + 1e-6);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(reliable_min_repetitions(2, 0.05), 35);
}

TEST(ReliableEstimate, EmptyIntersectionFallsBackToZero) {
  auto nrm = ErrorNorm({MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)});
  MatrixXd H1 = MatrixXd::Identity(2, 2), H2 = -MatrixXd::Identity(2, 2);
  std::vector<VectorXd> obs(5, Eigen::Vector2d(5.0, 0.0));
  auto r = reliable_estimate({H1, H2}, obs, {0.1, 0.1}, nrm, 0.05);
  EXPECT_TRUE(r.empty_intersection);
  EXPECT_EQ(r.w.norm(), 0.0);
}

TEST(ColumnErasure, UnitSecondMomentAndZeroMean) {
  auto m = column_erasure_model(MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), 0.0, 0.5);
  EXPECT_NEAR(m.erasure_rho, 2.0, 1e-15);
  auto law = perturbation_law_of(m);
  std::mt19937_64 g(1);
  double s1 = 0.0, s2 = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    double e = law.draw(g);
    s1 += e;
    s2 += e * e;
  }
  EXPECT_NEAR(s1 / N, 0.0, 0.01);
  EXPECT_NEAR(s2 / N, 1.0, 1e-12);
}

TEST(ColumnErasure, PerturbedMatrixErasesColumns) {
  MatrixXd Abar = MatrixXd::Random(4, 3);
  auto m = column_erasure_model(Abar, MatrixXd::Identity(3, 3), 0.0, 0.3);
  auto law = perturbation_law_of(m);
  std::mt19937_64 g(4);
  for (int t = 0; t < 20; ++t) {
    VectorXd eta = law.sample(3, g);
    MatrixXd Ae = m.perturbed(eta);
    for (int j = 0; j < 3; ++j) {
      bool erased = Ae.col(j).norm() < 1e-12;
      bool kept = (Ae.col(j) - Abar.col(j)).norm() < 1e-12;
      EXPECT_TRUE(erased || kept);
    }
  }
  auto sg = column_erasure_model(Abar, MatrixXd::Identity(3, 3), 0.0, 0.5, ErasureCalibration::subgaussian);
  EXPECT_NEAR(sg.erasure_rho, 2.0, 1e-12);
}

TEST(Deconvolution, DctIsOrthonormal) {
  MatrixXd O = dct_matrix(12);
  EXPECT_LE((O * O.transpose() - MatrixXd::Identity(12, 12)).norm(), 1e-12);
  EXPECT_NEAR(O(0, 3), 1.0 / std::sqrt(12.0), 1e-15);
}

TEST(Deconvolution, ModelShapesAndSignalSetBoundary) {
  auto s = build_deconv_model(32, 32, 16, 0.01);
  EXPECT_EQ(s.model.q(), 9);
  EXPECT_EQ(s.model.nu(), 16);
  EXPECT_NEAR(s.kernel.sum(), 1.0, 1e-14);
  std::mt19937_64 g(2);
  VectorXd x = sample_boundary(s.X, g);
  VectorXd d = dct_matrix(32).transpose() * x;
  double v = 0.0;
  for (int i = 0; i < 32; ++i) v += (i + 1.0) * (i + 1.0) * d(i) * d(i);
  EXPECT_NEAR(v, 1.0, 1e-9);
  VectorXd eta = VectorXd::Zero(9);
  eta(2) = 1.0;
  MatrixXd Ap = s.model.perturbed(eta) - s.model.A;
  EXPECT_NEAR(Ap(5, 3), 0.01, 1e-15);
}
