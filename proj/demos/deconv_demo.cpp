// Robust vs nominal linear recovery on a small deconvolution problem.
#include "robinv/io.hpp"

#include <cstdio>

using namespace robinv;

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 16;
  DeconvConfig d;
  d.n = d.m = n;
  d.nu = n / 2;
  std::printf("%8s %12s %12s %12s %12s\n", "gamma", "robust", "robust q95", "nominal", "nominal q95");
  for (double gamma : {1e-3, 1e-2, 1e-1, 1.0}) {
    DeconvScenario s = deconv_scenario(d, gamma);
    UncertaintyModel nominal = s.model;
    nominal.A_alpha.clear();
    auto robust = synthesize_linear(s.model, s.X, s.norm, 0.05);
    auto naive = synthesize_linear(nominal, s.X, s.norm, 0.05);
    double naive_bound = risk_bound_linear(naive.H, s.model, s.X, s.norm, 0.05).bound;

    McOptions o;
    o.n_draws = 300;
    auto signals = boundary_signals(s.X, 3, 1);
    auto law = NoiseLaw::gaussian();
    auto q95 = [&](const MatrixXd& H) {
      Estimator est = [&](const std::vector<VectorXd>& obs) -> VectorXd { return H.transpose() * obs[0]; };
      return monte_carlo_risk(est, s.model, s.norm, signals, law, law, o).max_quantile();
    };
    std::printf("%8.0e %12.4g %12.4g %12.4g %12.4g\n", gamma, robust.cert.bound, q95(robust.H), naive_bound, q95(naive.H));
  }
}
