#include "robinv/robust_uncertainty.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace robinv;

namespace {

const double kPi = std::acos(-1.0);

MatrixXd randn(int r, int c, std::mt19937_64& g) {
  std::normal_distribution<double> nd;
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(g);
  return M;
}

StructuredUncertainty random_uncertainty(int m, int n, int S, int T, std::mt19937_64& g) {
  StructuredUncertainty u;
  std::uniform_int_distribution<int> dim(1, 3);
  for (int s = 0; s < S; ++s) u.scalar.push_back(randn(m, n, g));
  for (int t = 0; t < T; ++t) u.general.push_back({randn(dim(g), m, g), randn(dim(g), n, g)});
  return u;
}

EllitopeSpec random_ellitope(int n, int kind, std::mt19937_64& g) {
  if (kind == 0) return EllitopeSpec::unit_ball(n);
  if (kind == 1) return EllitopeSpec::unit_box(n);
  MatrixXd C = randn(n, n, g);
  return EllitopeSpec::ellipsoid(C * C.transpose() + MatrixXd::Identity(n, n));
}

// 1x1-block spectratope describing the same set as a rank-one ellitope.
SpectratopeSpec scalar_blocks(const EllitopeSpec& e) {
  SpectratopeSpec s = to_spectratope(e);
  for (const auto& blk : s.S)
    for (const auto& m : blk) EXPECT_EQ(m.rows(), 1);
  return s;
}

EllitopeSpec rank_one_ellitope(int n, int K, std::mt19937_64& g) {
  EllitopeSpec e;
  MatrixXd C = randn(K, n, g);
  for (int k = 0; k < K; ++k) e.T.push_back(C.row(k).transpose() * C.row(k));
  e.base = BaseSet::box(K);
  return e;
}

}  // namespace

TEST(TightnessFactors, TableAndMonotone) {
  EXPECT_EQ(TightnessFactors::theta(0), 0.0);
  EXPECT_EQ(TightnessFactors::theta(1), 1.0);
  EXPECT_NEAR(TightnessFactors::theta(2), kPi / 2.0, 1e-15);
  EXPECT_NEAR(TightnessFactors::theta(3), 1.7348, 1e-12);
  EXPECT_EQ(TightnessFactors::theta(4), 2.0);
  EXPECT_NEAR(TightnessFactors::theta(9), 1.5 * kPi, 1e-12);
  for (int k = 0; k < 4; ++k) EXPECT_LE(TightnessFactors::theta(k), TightnessFactors::theta(k + 1));
  EXPECT_EQ(TightnessFactors::varkappa(1), 1.0);
  EXPECT_NEAR(TightnessFactors::varkappa(3), 2.5 * std::sqrt(std::log(6.0)), 1e-12);
  for (int J = 1; J < 50; ++J) {
    EXPECT_GE(TightnessFactors::varkappa(J), 1.0);
    EXPECT_GE(TightnessFactors::varsigma_bar(J), 1.0);
    EXPECT_GE(TightnessFactors::varsigma(J), 1.0);
  }
  EXPECT_NEAR(TightnessFactors::block_factor(0), kPi / 2.0, 1e-15);
  EXPECT_EQ(TightnessFactors::block_factor(2), 2.0);
}

TEST(StructuredUncertainty, InstanceAndKappa) {
  std::mt19937_64 g(1);
  StructuredUncertainty u;
  u.scalar.push_back(MatrixXd::Identity(3, 2));
  MatrixXd r1 = randn(3, 1, g) * randn(1, 2, g);
  u.scalar.push_back(r1);
  u.general.push_back({MatrixXd::Ones(1, 3), MatrixXd::Ones(2, 2)});
  u.check();
  EXPECT_EQ(u.kappa(), 2);
  VectorXd d(2);
  d << 0.5, -1.0;
  MatrixXd Del = MatrixXd::Constant(1, 2, 0.25);
  MatrixXd want = 0.5 * MatrixXd::Identity(3, 2) - r1 + MatrixXd::Ones(3, 1) * Del * MatrixXd::Ones(2, 2);
  EXPECT_LE((u.instance(d, {Del}) - want).norm(), 1e-12);
  StructuredUncertainty bad;
  bad.general.push_back({MatrixXd::Zero(1, 3), MatrixXd::Ones(1, 2)});
  EXPECT_THROW(bad.check(), std::invalid_argument);
}

TEST(ScenarioBound, ZeroScenario) {
  MatrixXd H = MatrixXd::Ones(3, 2);
  EXPECT_EQ(scenario_bound(H, std::vector<MatrixXd>{MatrixXd::Zero(3, 4)}, EllitopeSpec::unit_ball(4), ErrorNorm::euclidean(2)), 0.0);
  EXPECT_EQ(scenario_bound(H, std::vector<MatrixXd>{MatrixXd::Zero(3, 4)}, EllitopeSpec::unit_box(4), ErrorNorm::euclidean(2)), 0.0);
}

TEST(ScenarioBound, BallMatchesSvdAndDominatedScenario) {
  std::mt19937_64 g(2);
  MatrixXd H = randn(4, 3, g), D = randn(4, 5, g);
  MatrixXd Rm = randn(3, 3, g);
  ErrorNorm nrm({Rm * Rm.transpose() + MatrixXd::Identity(3, 3)});
  double want = spectral_norm(nrm.R_sqrt[0] * H.transpose() * D);
  double got = scenario_bound(H, std::vector<MatrixXd>{D}, EllitopeSpec::unit_ball(5), nrm);
  EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, want));
  double two = scenario_bound(H, std::vector<MatrixXd>{D, 0.5 * D}, EllitopeSpec::unit_ball(5), nrm);
  EXPECT_NEAR(two, got, 1e-12);
  std::vector<MatrixXd> A_alpha{D, MatrixXd::Zero(4, 5)};
  VectorXd e1(2), e2(2);
  e1 << 1.0, 3.0;
  e2 << 0.5, -2.0;
  EXPECT_NEAR(scenario_bound(H, {e1, e2}, A_alpha, EllitopeSpec::unit_ball(5), nrm), got, 1e-12);
}

TEST(ScenarioBound, LmiOnBoxDominatesVertexSearch) {
  std::mt19937_64 g(3);
  const int n = 4;
  MatrixXd H = randn(3, 2, g), D = randn(3, n, g);
  double bound = scenario_bound(H, std::vector<MatrixXd>{D}, EllitopeSpec::unit_box(n), ErrorNorm::euclidean(2));
  MatrixXd Mq = H.transpose() * D;
  double best = 0.0;
  for (int v = 0; v < (1 << n); ++v) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = (v >> i) & 1 ? 1.0 : -1.0;
    best = std::max(best, (Mq * x).norm());
  }
  EXPECT_GE(bound, best - 1e-7);
  EXPECT_LE(bound, 2.4 * std::sqrt(std::log(4.0 * n)) * best);
}

TEST(RobustNormBound, EmptyUncertainty) {
  StructuredUncertainty u;
  auto r = robust_norm_bound(u, EllitopeSpec::unit_ball(3), EllitopeSpec::unit_ball(2));
  EXPECT_EQ(r.value, 0.0);
}

TEST(RobustNormBound, IdentityGeneralBlock) {
  for (int d : {1, 3}) {
    StructuredUncertainty u;
    u.general.push_back({MatrixXd::Identity(d, d), MatrixXd::Identity(d, d)});
    auto r = robust_norm_bound(u, EllitopeSpec::unit_ball(d), EllitopeSpec::unit_ball(d));
    EXPECT_GE(r.value, 1.0 - 1e-6);
    EXPECT_LE(r.value, kPi / 2.0 * (1.0 + 1e-6));
    EXPECT_NEAR(r.factor, kPi / 2.0, 1e-12);
    double lo = robust_norm_oracle(u, EllitopeSpec::unit_ball(d), EllitopeSpec::unit_ball(d), 5);
    EXPECT_GE(lo, 1.0 - 1e-3);
    EXPECT_LE(lo, r.value + 1e-7);
  }
}

TEST(RobustNormBound, IdentityScalarBlock) {
  StructuredUncertainty u;
  u.scalar.push_back(MatrixXd::Identity(2, 2));
  auto r = robust_norm_bound(u, EllitopeSpec::unit_ball(2), EllitopeSpec::unit_ball(2));
  EXPECT_GE(r.value, 1.0 - 1e-6);
  EXPECT_LE(r.value, TightnessFactors::theta(4) * (1.0 + 1e-6));
  EXPECT_EQ(r.factor, 2.0);
  double lo = robust_norm_oracle(u, EllitopeSpec::unit_ball(2), EllitopeSpec::unit_ball(2), 5);
  EXPECT_NEAR(lo, 1.0, 1e-9);
}

TEST(RobustNormBound, Homogeneity) {
  std::mt19937_64 g(4);
  auto u = random_uncertainty(3, 4, 2, 1, g);
  auto X = EllitopeSpec::unit_box(4);
  auto B = EllitopeSpec::unit_ball(3);
  double base = robust_norm_bound(u, X, B).value;
  ASSERT_GT(base, 0.0);
  for (double c : {0.5, 2.0}) EXPECT_NEAR(robust_norm_bound(u.scaled(c), X, B).value, c * base, 1e-6 * c * base);
}

TEST(RobustNormBound, DominatesOracleOnRandomInstances) {
  std::mt19937_64 g(5);
  std::uniform_int_distribution<int> dm(2, 4), cnt(0, 2), kind(0, 2);
  for (int inst = 0; inst < 30; ++inst) {
    int m = dm(g), n = dm(g), S = cnt(g), T = cnt(g);
    if (S + T == 0) S = 1;
    auto u = random_uncertainty(m, n, S, T, g);
    auto X = random_ellitope(n, kind(g), g);
    auto B = random_ellitope(m, kind(g), g);
    auto r = robust_norm_bound(u, X, B);
    double lo = robust_norm_oracle(u, X, B, 6, static_cast<std::uint64_t>(inst));
    EXPECT_GT(lo, 0.0);
    EXPECT_LE(lo, r.value * (1.0 + 1e-6) + 1e-9) << "instance " << inst;
    EXPECT_LE(r.value, r.factor * lo * (1.0 + 1e-6)) << "instance " << inst;
  }
}

TEST(RobustNormOracle, ZeroAndScaling) {
  StructuredUncertainty none;
  EXPECT_EQ(robust_norm_oracle(none, EllitopeSpec::unit_ball(2), EllitopeSpec::unit_ball(2)), 0.0);
  std::mt19937_64 g(6);
  auto u = random_uncertainty(3, 3, 1, 1, g);
  auto X = EllitopeSpec::unit_ball(3);
  double a = robust_norm_oracle(u, X, X, 8, 3), b = robust_norm_oracle(u.scaled(2.0), X, X, 8, 3);
  EXPECT_NEAR(b, 2.0 * a, 1e-9 * b);
}

TEST(SnbBound, ZeroContrast) {
  std::mt19937_64 g(7);
  auto u = random_uncertainty(3, 4, 1, 1, g);
  EXPECT_EQ(snb_bound(MatrixXd::Zero(3, 2), u, EllitopeSpec::unit_ball(4), ErrorNorm::euclidean(2)), 0.0);
}

TEST(SnbBound, MatchesRobustNormOnInducedMatrix) {
  std::mt19937_64 g(8);
  const int m = 4, n = 3, nu = 2;
  MatrixXd H = randn(m, nu, g);
  StructuredUncertainty u;
  u.scalar.push_back(randn(m, n, g));
  auto X = EllitopeSpec::unit_ball(n);
  double s = snb_bound(H, u, X, ErrorNorm::euclidean(nu));
  StructuredUncertainty ind;
  ind.scalar.push_back(H.transpose() * u.scalar[0]);
  double r = robust_norm_bound(ind, X, EllitopeSpec::unit_ball(nu)).value;
  EXPECT_NEAR(s, r, 1e-6 * std::max(1.0, r));
  EXPECT_GE(s, spectral_norm(ind.scalar[0]) - 1e-7);
}

TEST(SnbBound, DominatesOracle) {
  std::mt19937_64 g(9);
  const int m = 4, n = 3, nu = 2;
  for (int inst = 0; inst < 5; ++inst) {
    MatrixXd H = randn(m, nu, g);
    auto u = random_uncertainty(m, n, 1, 1, g);
    auto X = EllitopeSpec::unit_box(n);
    MatrixXd R2 = randn(nu, nu, g);
    ErrorNorm nrm({MatrixXd::Identity(nu, nu), R2 * R2.transpose()});
    double s = snb_bound(H, u, X, nrm);
    double lo = 0.0;
    for (int l = 0; l < nrm.L(); ++l) {
      StructuredUncertainty ind;
      const MatrixXd& Rs = nrm.R_sqrt[static_cast<size_t>(l)];
      ind.scalar.push_back(Rs * H.transpose() * u.scalar[0]);
      ind.general.push_back({u.general[0].L * H * Rs, u.general[0].R});
      lo = std::max(lo, robust_norm_oracle(ind, X, EllitopeSpec::unit_ball(nu), 6, static_cast<std::uint64_t>(inst)));
    }
    EXPECT_GE(s, lo - 1e-7);
    EXPECT_LE(s, snb_factor(u, X) * lo * (1.0 + 1e-6));
  }
}

TEST(SynthesizeLinearUbb, NoUncertaintyNoNoise) {
  UncertaintyModel M;
  M.A = MatrixXd::Identity(3, 3);
  M.B = MatrixXd::Identity(3, 3);
  M.sigma = 0.0;
  auto e = synthesize_linear_ubb(M, StructuredUncertainty{}, EllitopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 0.05);
  EXPECT_LE(e.cert.bound, 1e-6);
  EXPECT_LE((e.H - MatrixXd::Identity(3, 3)).norm(), 1e-4);
}

TEST(SynthesizeLinearUbb, ZeroContrastIsBiasOnly) {
  std::mt19937_64 g(10);
  UncertaintyModel M;
  M.A = randn(4, 3, g);
  M.B = randn(2, 3, g);
  M.sigma = 0.1;
  auto u = random_uncertainty(4, 3, 1, 1, g);
  auto X = EllitopeSpec::unit_box(3);
  auto nrm = ErrorNorm::euclidean(2);
  auto c = risk_bound_linear_ubb(MatrixXd::Zero(4, 2), M, u, X, nrm, 0.05);
  EXPECT_EQ(c.noise, 0.0);
  EXPECT_EQ(c.snb, 0.0);
  EXPECT_NEAR(c.bound, c.bias, 1e-12);
  EXPECT_NEAR(c.bias, bias_bound(MatrixXd::Zero(4, 2), M, X, nrm), 1e-9);
  auto e = synthesize_linear_ubb(M, u, X, nrm, 0.05);
  EXPECT_LE(e.cert.bound, c.bound + 1e-6);
}

TEST(SynthesizeLinearUbb, AuditReproducesObjective) {
  std::mt19937_64 g(11);
  UncertaintyModel M;
  M.A = randn(5, 4, g);
  M.B = randn(2, 4, g);
  M.sigma = 0.05;
  M.A_alpha.push_back(0.05 * randn(5, 4, g));
  auto u = random_uncertainty(5, 4, 1, 1, g);
  u = u.scaled(0.1);
  MatrixXd R2 = randn(2, 2, g);
  ErrorNorm nrm({MatrixXd::Identity(2, 2), R2 * R2.transpose()});
  auto X = EllitopeSpec::unit_box(4);
  auto e = synthesize_linear_ubb(M, u, X, nrm, 0.05);
  EXPECT_NEAR(e.cert.bound, e.objective, 1e-5 * std::max(1.0, e.objective));
  EXPECT_NEAR(e.cert.c_eps, 1.0 + std::sqrt(2.0 * std::log(2.0 / 0.05)), 1e-12);
  EXPECT_LE(e.cert.bound, risk_bound_linear_ubb(MatrixXd::Zero(5, 2), M, u, X, nrm, 0.05).bound + 1e-6);
}

TEST(SynthesizeLinearUbb, BoundCoversWorstSampledError) {
  std::mt19937_64 g(12);
  UncertaintyModel M;
  M.A = randn(4, 3, g);
  M.B = randn(2, 3, g);
  M.sigma = 0.01;
  auto u = random_uncertainty(4, 3, 1, 1, g).scaled(0.2);
  auto X = EllitopeSpec::unit_ball(3);
  auto nrm = ErrorNorm::euclidean(2);
  auto e = synthesize_linear_ubb(M, u, X, nrm, 0.05);
  std::normal_distribution<double> nd;
  int exceed = 0;
  for (int t = 0; t < 200; ++t) {
    VectorXd x = sample_boundary(X, g);
    VectorXd d(1);
    d(0) = nd(g) > 0 ? 1.0 : -1.0;
    VectorXd a = detail::random_unit(static_cast<int>(u.general[0].L.rows()), g);
    VectorXd b = detail::random_unit(static_cast<int>(u.general[0].R.rows()), g);
    MatrixXd Aeta = M.A + u.instance(d, {a * b.transpose()});
    VectorXd xi(4);
    for (int i = 0; i < 4; ++i) xi(i) = nd(g);
    double err = (e.H.transpose() * (Aeta * x + M.sigma * xi) - M.B * x).norm();
    exceed += err > e.cert.bound;
  }
  EXPECT_LE(exceed, 10);
}

TEST(LinformBound, Trivial) {
  auto U = SpectratopeSpec::unit_ball(2);
  auto X = SpectratopeSpec::unit_ball(3);
  std::vector<MatrixXd> zero{MatrixXd::Zero(4, 3), MatrixXd::Zero(4, 3)};
  EXPECT_EQ(linform_bound(VectorXd::Ones(4), zero, U, X), 0.0);
  std::mt19937_64 g(13);
  std::vector<MatrixXd> A{randn(4, 3, g), randn(4, 3, g)};
  EXPECT_EQ(linform_bound(VectorXd::Zero(4), A, U, X), 0.0);
}

TEST(LinformBound, BallsBracketSampledMaximum) {
  std::mt19937_64 g(14);
  for (int q : {1, 3}) {
    std::vector<MatrixXd> A;
    for (int a = 0; a < q; ++a) A.push_back(randn(4, 3, g));
    VectorXd h = randn(4, 1, g);
    auto U = SpectratopeSpec::unit_ball(q);
    auto X = SpectratopeSpec::unit_ball(3);
    double b = linform_bound(h, A, U, X);
    MatrixXd Ah = detail::calA(h, A);
    double truth = spectral_norm(Ah);
    double sampled = 0.0;
    for (int t = 0; t < 2000; ++t) {
      VectorXd eta = detail::random_unit(q, g), x = detail::random_unit(3, g);
      sampled = std::max(sampled, eta.dot(Ah * x));
    }
    EXPECT_GE(b, sampled - 1e-7);
    EXPECT_GE(b, truth - 1e-6);
    EXPECT_LE(b, linform_factor(U, X) * truth);
  }
}

TEST(RobustNormBoundSpectr, NoBlocks) {
  StructuredUncertainty u;
  EXPECT_EQ(robust_norm_bound_spectr(u, SpectratopeSpec::unit_ball(2), SpectratopeSpec::unit_ball(2)).value, 0.0);
}

TEST(RobustNormBoundSpectr, ScalarBlocksReproduceEllitopeBound) {
  std::mt19937_64 g(15);
  std::uniform_int_distribution<int> dm(2, 3), cnt(0, 2);
  for (int inst = 0; inst < 20; ++inst) {
    int m = dm(g), n = dm(g);
    int S = cnt(g), T = cnt(g);
    if (S + T == 0) T = 1;
    auto u = random_uncertainty(m, n, S, T, g);
    auto X = rank_one_ellitope(n, n + 1, g);
    auto B = rank_one_ellitope(m, m, g);
    double e = robust_norm_bound(u, X, B).value;
    double s = robust_norm_bound_spectr(u, scalar_blocks(X), scalar_blocks(B)).value;
    EXPECT_NEAR(s, e, 1e-6 * std::max(1.0, e)) << "instance " << inst;
  }
}

TEST(RobustNormBoundSpectr, DominatesOracle) {
  std::mt19937_64 g(16);
  for (int inst = 0; inst < 5; ++inst) {
    auto u = random_uncertainty(3, 3, 1, 1, g);
    auto X = SpectratopeSpec::unit_ball(3);
    auto B = to_spectratope(EllitopeSpec::unit_box(3));
    auto r = robust_norm_bound_spectr(u, X, B);
    double lo = robust_norm_oracle(u, X, B, 4, static_cast<std::uint64_t>(inst));
    EXPECT_GT(lo, 0.0);
    EXPECT_LE(lo, r.value * (1.0 + 1e-6) + 1e-9);
    EXPECT_LE(r.value, r.factor * lo);
  }
}

TEST(RiskBoundPolyUbb, ZeroContrastAndZeroB) {
  UncertaintyModel M;
  M.A = MatrixXd::Identity(3, 3);
  M.B = MatrixXd::Identity(3, 3);
  M.sigma = 0.1;
  M.A_alpha.push_back(0.1 * MatrixXd::Identity(3, 3));
  auto U = SpectratopeSpec::unit_ball(1);
  auto X = SpectratopeSpec::unit_ball(3);
  auto H = ContrastMatrix::single(MatrixXd::Zero(3, 3), 0.0);
  auto r = risk_bound_poly_ubb(H, M, U, X, ErrorNorm::euclidean(3), 0.05);
  EXPECT_TRUE(r.admissible);
  EXPECT_NEAR(r.bound, 2.0, 1e-6);
  M.B.setZero();
  EXPECT_EQ(risk_bound_poly_ubb(H, M, U, X, ErrorNorm::euclidean(3), 0.05).bound, 0.0);
}

TEST(RiskBoundPolyUbb, RefusesInadmissibleColumns) {
  UncertaintyModel M;
  M.A = MatrixXd::Identity(3, 3);
  M.B = MatrixXd::Identity(3, 3);
  M.sigma = 0.1;
  M.A_alpha.push_back(MatrixXd::Identity(3, 3));
  auto H = ContrastMatrix::single(MatrixXd::Identity(3, 3), 0.0);
  auto r = risk_bound_poly_ubb(H, M, SpectratopeSpec::unit_ball(1), SpectratopeSpec::unit_ball(3), ErrorNorm::euclidean(3), 0.05);
  EXPECT_FALSE(r.admissible);
  EXPECT_TRUE(std::isinf(r.bound));
  EXPECT_EQ(r.inadmissible.size(), 3u);
}

TEST(RiskBoundPolyUbb, EllipsoidAgreesWithEllitopeBound) {
  std::mt19937_64 g(17);
  const int m = 4, n = 3;
  UncertaintyModel M;
  M.A = randn(m, n, g);
  M.B = randn(2, n, g);
  M.sigma = 0.05;
  MatrixXd C = randn(n, n, g);
  auto Xe = EllitopeSpec::ellipsoid(C * C.transpose() + MatrixXd::Identity(n, n));
  ContrastMatrix H;
  H.blocks.push_back(0.3 * randn(m, m, g));
  H.blocks.push_back(0.3 * randn(m, m, g));
  H.delta = 0.05 / 8.0;
  MatrixXd R2 = randn(2, 2, g);
  ErrorNorm nrm({MatrixXd::Identity(2, 2), R2 * R2.transpose()});
  double e = risk_bound_poly(H, M, Xe, nrm, {}, false).bound;
  double s = risk_bound_poly_ubb(H, M, SpectratopeSpec::unit_ball(1), to_spectratope(Xe), nrm, 0.05, {}, false).bound;
  EXPECT_NEAR(s, e, 1e-6 * std::max(1.0, e));
}

TEST(SynthesizePolyUbbBall, ZeroBAndNoPerturbation) {
  UncertaintyModel M;
  M.A = MatrixXd::Identity(4, 4);
  M.B = MatrixXd::Zero(2, 4);
  M.sigma = 0.05;
  M.A_alpha.push_back(0.1 * MatrixXd::Identity(4, 4));
  auto e = synthesize_poly_ubb_ball(M, ErrorNorm::euclidean(2), 0.05, 4, 1);
  EXPECT_LE(e.synthesis.opt, 1e-6);
  EXPECT_LE(e.cert.bound, 1e-6);

  M.B = MatrixXd::Identity(2, 4);
  M.A_alpha.clear();
  auto a = synthesize_poly_ubb_ball(M, ErrorNorm::euclidean(2), 0.05, 4, 1);
  auto b = synthesize_poly_ball(M, EllitopeSpec::unit_ball(4), ErrorNorm::euclidean(2), 0.05);
  EXPECT_NEAR(a.synthesis.opt, b.opt, 1e-9);
}

TEST(SynthesizePolyUbbBall, CertifiedAndWorstCaseCoverage) {
  std::mt19937_64 g(18);
  const int n = 6, m = 6, nu = 3, q = 2;
  UncertaintyModel M;
  M.A = MatrixXd::Identity(m, n) + 0.2 * randn(m, n, g);
  M.B = MatrixXd::Identity(nu, n);
  M.sigma = 0.02;
  for (int a = 0; a < q; ++a) M.A_alpha.push_back(0.05 * randn(m, n, g));
  auto nrm = ErrorNorm::euclidean(nu);
  const double eps = 0.05;
  auto est = synthesize_poly_ubb_ball(M, nrm, eps, 20, 3);
  ASSERT_TRUE(est.cert.admissible);
  EXPECT_LE(est.cert.bound, est.synthesis.risk_bound * (1.0 + 1e-6));
  auto X = EllitopeSpec::unit_ball(n);
  auto ub = risk_bound_poly_ubb(est.H, M, SpectratopeSpec::unit_ball(q), SpectratopeSpec::unit_ball(n), nrm, eps);
  EXPECT_TRUE(ub.admissible) << ub.message;
  EXPECT_NEAR(ub.bound, est.cert.bound, 1e-5 * std::max(1.0, est.cert.bound));

  std::normal_distribution<double> nd;
  for (int k = 0; k < 50; ++k) {
    VectorXd x = sample_boundary(X, g);
    VectorXd eta;
    if (k % 2 == 0) {
      MatrixXd Dx(m, q);
      for (int a = 0; a < q; ++a) Dx.col(a) = M.A_alpha[static_cast<size_t>(a)] * x;
      Eigen::JacobiSVD<MatrixXd> svd(Dx, Eigen::ComputeThinV);
      eta = svd.matrixV().col(0);
    } else {
      eta = detail::random_unit(q, g);
    }
    MatrixXd Aeta = M.perturbed(eta);
    std::vector<double> errs;
    for (int t = 0; t < 200; ++t) {
      VectorXd xi(m);
      for (int i = 0; i < m; ++i) xi(i) = nd(g);
      auto rec = recover_poly(est.H, Aeta * x + M.sigma * xi, M, X);
      errs.push_back(nrm(rec.w - M.B * x));
    }
    EXPECT_LE(empirical_quantile(errs, 1.0 - eps), est.synthesis.risk_bound);
  }
}
