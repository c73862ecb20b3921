#pragma once

#include "robinv/geometry.hpp"
#include "robinv/model.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace robinv {

enum class LawKind { gaussian, rademacher, column_erasure, student_t };

// Zero-mean law with unit variance per coordinate (column-erasure: E eta^2 = rho^2 gamma (1 - gamma)).
struct NoiseLaw {
  LawKind kind = LawKind::gaussian;
  double dof = 3.0;
  double gamma = 0.5;
  double rho = 2.0;

  static NoiseLaw gaussian() { return {}; }
  static NoiseLaw rademacher() { return {LawKind::rademacher, 3.0, 0.5, 2.0}; }
  static NoiseLaw student_t(double dof) {
    require(dof > 2.0, "student-t law needs dof > 2 for unit variance");
    return {LawKind::student_t, dof, 0.5, 2.0};
  }
  static NoiseLaw column_erasure(double gamma, double rho) {
    require(gamma > 0.0 && gamma < 1.0, "column-erasure law needs 0 < gamma < 1");
    return {LawKind::column_erasure, 3.0, gamma, rho};
  }

  static NoiseLaw parse(const std::string& tag, double dof = 3.0) {
    if (tag == "gaussian") return gaussian();
    if (tag == "rademacher") return rademacher();
    if (tag == "student-t" || tag == "student_t") return student_t(dof);
    throw std::invalid_argument("unknown law tag: " + tag);
  }

  std::string tag() const {
    switch (kind) {
      case LawKind::gaussian: return "gaussian";
      case LawKind::rademacher: return "rademacher";
      case LawKind::column_erasure: return "column-erasure";
      case LawKind::student_t: return "student-t";
    }
    return "?";
  }

  template <class Rng>
  double draw(Rng& g) const {
    switch (kind) {
      case LawKind::gaussian: return std::normal_distribution<double>()(g);
      case LawKind::rademacher: return std::bernoulli_distribution(0.5)(g) ? 1.0 : -1.0;
      case LawKind::student_t: return std::student_t_distribution<double>(dof)(g) * std::sqrt((dof - 2.0) / dof);
      case LawKind::column_erasure:
        return std::bernoulli_distribution(gamma)(g) ? (gamma - 1.0) * rho : gamma * rho;
    }
    return 0.0;
  }

  template <class Rng>
  VectorXd sample(int dim, Rng& g) const {
    VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = draw(g);
    return v;
  }
};

inline NoiseLaw noise_law_of(const UncertaintyModel& m) { return NoiseLaw::parse(m.noise_law, m.noise_dof); }

inline NoiseLaw perturbation_law_of(const UncertaintyModel& m) {
  if (m.perturbation_law == "column-erasure") return NoiseLaw::column_erasure(m.erasure_gamma, m.erasure_rho);
  return NoiseLaw::parse(m.perturbation_law, m.perturbation_dof);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for substream (a, b) of a root seed.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

inline int thread_count() {
  int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* e = std::getenv("ROBINV_THREADS")) {
    int v = std::atoi(e);
    if (v >= 1) return std::min(v, 256);
  }
  return hw;
}

// Runs fn(i) for i in [0, count); results must only depend on i.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
  int nt = std::min(thread_count(), count);
  if (nt <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Tr Q + 2 ||Q||_F sqrt(ln 1/eps) + 2 lambda_max(Q) ln(1/eps) for Q PSD.
inline double quadform_tail_bound(const MatrixXd& Q, double eps) {
  require(eps > 0.0 && eps < 1.0, "quadform_tail_bound: eps must be in (0,1)");
  MatrixXd S = sym(Q);
  require(lambda_min(S) >= -1e-10 * std::max(1.0, S.norm()), "quadform_tail_bound: Q must be PSD");
  double l = std::log(1.0 / eps);
  return S.trace() + 2.0 * S.norm() * std::sqrt(l) + 2.0 * std::max(lambda_max(S), 0.0) * l;
}

// [1 + sqrt(2 ln(L/eps))]^2 max_l Tr(W_l V)
inline double maxquad_bound(const std::vector<MatrixXd>& W, const MatrixXd& V, double eps) {
  require(!W.empty(), "maxquad_bound: empty family");
  require(eps > 0.0 && eps < 1.0, "maxquad_bound: eps must be in (0,1)");
  double L = static_cast<double>(W.size());
  double c = 1.0 + std::sqrt(2.0 * std::log(L / eps));
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& w : W) m = std::max(m, (w * V).trace());
  return c * c * m;
}

// Kullback-Leibler divergence between Bernoulli(alpha) and Bernoulli(beta).
inline double psi(double alpha, double beta) {
  require(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0, "psi: arguments must be in (0,1)");
  return (1.0 - alpha) * std::log((1.0 - alpha) / (1.0 - beta)) + alpha * std::log(alpha / beta);
}

// Empirical (1 - eps)-quantile: the ceil((1 - eps) N)-th order statistic.
inline double empirical_quantile(std::vector<double> v, double level) {
  require(!v.empty(), "empirical_quantile: empty sample");
  std::sort(v.begin(), v.end());
  auto k = static_cast<size_t>(std::ceil(level * static_cast<double>(v.size()) - 1e-12));
  k = std::clamp<size_t>(k, 1, v.size());
  return v[k - 1];
}

using Estimator = std::function<VectorXd(const std::vector<VectorXd>& observations)>;

struct McOptions {
  int n_draws = 500;
  double eps = 0.05;
  std::uint64_t seed = 1;
  int repetitions = 1;  // observations per draw
};

struct McResult {
  std::vector<double> quantiles;               // per signal
  std::vector<std::vector<double>> errors;     // [signal][draw]
  double max_quantile() const { return quantiles.empty() ? 0.0 : *std::max_element(quantiles.begin(), quantiles.end()); }
  double median(size_t signal) const { return empirical_quantile(errors[signal], 0.5); }
};

template <class Rng>
VectorXd observe(const UncertaintyModel& model, const VectorXd& x, const NoiseLaw& noise, const NoiseLaw& perturbation, Rng& g) {
  VectorXd eta = perturbation.sample(model.q(), g);
  VectorXd xi = noise.sample(model.m(), g);
  return model.perturbed(eta) * x + model.sigma * xi;
}

inline McResult monte_carlo_risk(const Estimator& est, const UncertaintyModel& model, const ErrorNorm& norm,
                                 const std::vector<VectorXd>& signals, const NoiseLaw& noise,
                                 const NoiseLaw& perturbation, const McOptions& opt) {
  require(opt.n_draws >= 1, "monte_carlo_risk: need at least one draw");
  require(opt.repetitions >= 1, "monte_carlo_risk: need at least one observation per draw");
  require(!signals.empty(), "monte_carlo_risk: no signals");
  McResult r;
  const int S = static_cast<int>(signals.size());
  r.errors.assign(static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(opt.n_draws), 0.0));
  parallel_for(S * opt.n_draws, [&](int idx) {
    int s = idx / opt.n_draws, d = idx % opt.n_draws;
    auto g = make_stream(opt.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(d));
    const VectorXd& x = signals[static_cast<size_t>(s)];
    std::vector<VectorXd> obs;
    obs.reserve(static_cast<size_t>(opt.repetitions));
    for (int k = 0; k < opt.repetitions; ++k) obs.push_back(observe(model, x, noise, perturbation, g));
    VectorXd w = est(obs);
    r.errors[static_cast<size_t>(s)][static_cast<size_t>(d)] = norm(w - model.B * x);
  });
  for (const auto& e : r.errors) r.quantiles.push_back(empirical_quantile(e, 1.0 - opt.eps));
  return r;
}

inline void write_error_csv(std::ostream& os, const McResult& r) {
  os << "signal,draw,error\n";
  char buf[64];
  for (size_t s = 0; s < r.errors.size(); ++s)
    for (size_t d = 0; d < r.errors[s].size(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", r.errors[s][d]);
      os << s << "," << d << "," << buf << "\n";
    }
}

}  // namespace robinv
