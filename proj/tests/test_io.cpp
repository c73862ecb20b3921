#include "robinv/io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace robinv;

TEST(Config, RoundTripDefault) {
  ExperimentConfig c;
  json j = to_json(c);
  ExperimentConfig d = config_from_json(j);
  EXPECT_EQ(c, d);
  EXPECT_EQ(j.dump(), to_json(d).dump());
}

TEST(Config, RoundTripCustom) {
  ExperimentConfig c;
  c.deconv.n = 10;
  c.deconv.m = 12;
  c.deconv.nu = 4;
  c.deconv.kernel = {0.25, 0.5, 0.25};
  c.deconv.gammas = {0.0, 0.3};
  c.deconv.sigma = 0.02;
  c.deconv.weights = std::vector<double>(10, 2.0);
  c.estimators = {"poly"};
  c.eps = 0.1;
  c.n_mc = 17;
  c.seed = 0xfffffffffffffULL;
  c.trials = 3;
  c.signals = 2;
  c.out_dir = "out/x";
  c.tol_gap = 1e-7;
  c.tol_feas = 3e-9;
  ExperimentConfig d = config_from_json(json::parse(to_json(c).dump()));
  EXPECT_EQ(c, d);
  EXPECT_EQ(config_from_json(to_json(d)), d);
}

TEST(Config, MissingFieldsTakeDefaults) {
  ExperimentConfig d = config_from_json(json::parse(R"({"eps": 0.2, "deconv": {"n": 8, "nu": 4}})"));
  EXPECT_EQ(d.eps, 0.2);
  EXPECT_EQ(d.deconv.n, 8);
  EXPECT_EQ(d.deconv.m, 32);
  EXPECT_EQ(d.n_mc, 500);
}

TEST(Config, RejectsInvalid) {
  EXPECT_THROW(config_from_json(json::parse(R"({"eps": 1.5})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"estimators": ["kalman"]})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"deconv": {"n": 4, "nu": 5}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"deconv": {"n": 4, "nu": 2, "weights": [1, 2]}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"deconv": {"gammas": []}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(json::parse(R"({"tol_gap": 0})")), std::invalid_argument);
}

TEST(Json, MatrixRoundTripAndErrors) {
  MatrixXd M(2, 3);
  M << 1, 2, 3, 4, 5, 6.5;
  EXPECT_EQ(matrix_from_json(to_json_matrix(M), "M"), M);
  EXPECT_THROW(matrix_from_json(json::parse("[[1,2],[3]]"), "M"), std::invalid_argument);
  EXPECT_THROW(matrix_from_json(json::parse("{\"a\":1}"), "M"), std::invalid_argument);
  EXPECT_EQ(matrix_from_json(json::array(), "M").size(), 0);
}

TEST(Json, ProblemRoundTrip) {
  auto s = build_deconv_model(8, 9, 4, gaussian_kernel(3, 1.0), 0.1, 1e-3);
  Problem p{s.model, s.X, s.norm, std::nullopt, std::nullopt};
  p.uncertainty = StructuredUncertainty{{s.model.A_alpha[0]}, {{MatrixXd::Ones(2, 9), MatrixXd::Identity(8, 8)}}};
  p.U = SpectratopeSpec::unit_ball(3);
  Problem q = problem_from_json(json::parse(to_json(p).dump()));
  EXPECT_EQ(q.model.A, p.model.A);
  EXPECT_EQ(q.model.B, p.model.B);
  ASSERT_EQ(q.model.q(), 3);
  EXPECT_EQ(q.model.A_alpha[2], p.model.A_alpha[2]);
  EXPECT_EQ(q.model.sigma, p.model.sigma);
  EXPECT_LE((q.X.T[0] - p.X.T[0]).norm(), 1e-14 * p.X.T[0].norm());
  EXPECT_EQ(q.norm.R[0], p.norm.R[0]);
  ASSERT_TRUE(q.uncertainty && q.U);
  EXPECT_EQ(q.uncertainty->S(), 1);
  EXPECT_EQ(q.uncertainty->general[0].L, p.uncertainty->general[0].L);
  EXPECT_EQ(q.U->D(), p.U->D());
  EXPECT_EQ(to_json(problem_from_json(to_json(q))).dump(), to_json(q).dump());
}

TEST(Json, ProblemDefaultsAndDimensionChecks) {
  json j = {{"model", {{"A", json::parse("[[1,0],[0,1],[1,1]]")}, {"B", json::parse("[[1,0]]")}}}};
  Problem p = problem_from_json(j);
  EXPECT_EQ(p.X.n(), 2);
  EXPECT_EQ(p.norm.nu(), 1);
  EXPECT_EQ(p.model.sigma, 0.0);
  j["X"] = to_json(EllitopeSpec::unit_ball(3));
  EXPECT_THROW(problem_from_json(j), std::invalid_argument);
}

TEST(Json, BaseAndSetsRoundTrip) {
  EllitopeSpec e = EllitopeSpec::unit_box(3);
  e.base = BaseSet::pball(3, std::numeric_limits<double>::infinity());
  e.P = MatrixXd::Ones(4, 3);
  EllitopeSpec f = ellitope_from_json(to_json(e));
  EXPECT_TRUE(std::isinf(f.base.p));
  EXPECT_EQ(f.base.kind, BaseKind::pball);
  EXPECT_EQ(*f.P, *e.P);
  BaseSet s = BaseSet::simplex(Eigen::Vector2d(1.0, 3.0));
  EXPECT_EQ(base_from_json(to_json(s)).scale, s.scale);
  EXPECT_THROW(base_from_json(json::parse(R"({"kind": "cube", "K": 1})")), std::invalid_argument);
  SpectratopeSpec sp = to_spectratope(EllitopeSpec::unit_box(2));
  SpectratopeSpec sq = spectratope_from_json(to_json(sp));
  EXPECT_EQ(sq.S.size(), sp.S.size());
  EXPECT_EQ(sq.S[1][1], sp.S[1][1]);
}

TEST(Json, ContrastRoundTripAndBareMatrix) {
  ContrastMatrix H;
  H.blocks = {MatrixXd::Ones(3, 2), MatrixXd::Zero(3, 1)};
  H.delta = 0.01;
  H.seed = 9;
  H.chi_noise = 2.5;
  H.theta = {1.0, 0.5};
  ContrastMatrix G = contrast_from_json(json::parse(to_json(H).dump()));
  EXPECT_EQ(G.full(), H.full());
  EXPECT_EQ(G.seed, 9u);
  EXPECT_EQ(G.theta, H.theta);
  ContrastMatrix B = contrast_from_json(to_json_matrix(MatrixXd::Identity(3, 3)));
  EXPECT_EQ(B.L(), 1);
  EXPECT_EQ(B.columns(), 3);
}

TEST(Deconvolution, UnitImpulseIsTruncatedIdentity) {
  VectorXd k = VectorXd::Ones(1);
  auto s = build_deconv_model(6, 8, 3, k, 0.0);
  MatrixXd I = MatrixXd::Identity(8, 6);
  EXPECT_EQ(s.model.A, I);
  EXPECT_EQ(s.model.q(), 0);
  auto t = build_deconv_model(6, 8, 3, k, 0.5);
  ASSERT_EQ(t.model.q(), 1);
  EXPECT_EQ(t.model.A_alpha[0], 0.5 * I);
  EXPECT_EQ(t.model.perturbed(VectorXd::Constant(1, 2.0)), 2.0 * I);
}

TEST(Deconvolution, CustomWeights) {
  auto s = build_deconv_model(5, 5, 2, gaussian_kernel(), 0.0, 1e-4, VectorXd::Ones(5));
  EXPECT_LE((s.X.T[0] - MatrixXd::Identity(5, 5)).norm(), 1e-12);
  EXPECT_THROW(build_deconv_model(5, 5, 2, gaussian_kernel(), 0.0, 1e-4, VectorXd::Ones(4)), std::invalid_argument);
  EXPECT_THROW(build_deconv_model(5, 5, 2, gaussian_kernel(), 0.0, 1e-4, -VectorXd::Ones(5)), std::invalid_argument);
  DeconvConfig d;
  d.n = 5;
  d.m = 5;
  d.nu = 2;
  d.weights = {1, 1, 1, 1, 1};
  d.kernel = {1.0};
  auto t = deconv_scenario(d, 0.0);
  EXPECT_EQ(t.X.T[0], s.X.T[0]);
  EXPECT_EQ(t.model.A, MatrixXd::Identity(5, 5));
}

TEST(BallForm, MapsSphereOntoBoundaryAndFoldsModel) {
  auto s = build_deconv_model(10, 10, 5, 0.1);
  MatrixXd F;
  auto b = ball_form(s, &F);
  EXPECT_TRUE(b.X.basic());
  EXPECT_EQ(b.X.N(), 10);
  EXPECT_LE((b.model.A - s.model.A * F).norm(), 1e-12);
  EXPECT_LE((b.model.A_alpha[4] - s.model.A_alpha[4] * F).norm(), 1e-12);
  for (const auto& u : boundary_signals(b.X, 5, 3)) {
    EXPECT_NEAR(u.norm(), 1.0, 1e-12);
    VectorXd x = F * u;
    EXPECT_NEAR(x.dot(s.X.T[0] * x), 1.0, 1e-9);
  }
  EXPECT_THROW(ball_form({s.model, EllitopeSpec::unit_box(10), s.norm, s.kernel}), std::invalid_argument);
}

TEST(BoundarySignals, DeterministicAndOnBoundary) {
  auto s = build_deconv_model(8, 8, 4, 0.1);
  auto a = boundary_signals(s.X, 3, 11), b = boundary_signals(s.X, 3, 11), c = boundary_signals(s.X, 3, 12);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k], b[k]);
    EXPECT_NE(a[k], c[k]);
    EXPECT_NEAR(gauge(a[k], s.X), 1.0, 1e-9);
  }
}
