#pragma once

#include "robinv/conic/program.hpp"

#include <iomanip>
#include <map>
#include <ostream>
#include <tuple>

namespace robinv::conic {

// SDPA sparse format: min c'x s.t. sum_i x_i F_i - F_0 PSD.
// Equalities become pairs of inequalities; SOC constraints become arrow LMIs.
inline void write_sdpa(const Program& prog, std::ostream& os) {
  using Key = std::tuple<int, int, int, int>;  // mat, block, i, j (1-based, i <= j)
  std::map<Key, double> entries;
  auto put = [&](int mat, int blk, int i, int j, double v) {
    if (v == 0.0) return;
    if (i > j) std::swap(i, j);
    entries[{mat, blk, i, j}] += v;
  };
  auto put_expr = [&](const LinExpr& e, int blk, int i, int j) {
    put(0, blk, i, j, -e.constant);
    for (const auto& t : e.terms) put(t.var + 1, blk, i, j, t.coef);
  };

  std::vector<int> sizes;
  std::vector<LinExpr> lin = prog.nonneg();
  for (const auto& e : prog.equalities()) {
    lin.push_back(e);
    lin.push_back(-e);
  }
  int blk = 0;
  if (!lin.empty()) {
    ++blk;
    sizes.push_back(-static_cast<int>(lin.size()));
    for (size_t i = 0; i < lin.size(); ++i) put_expr(lin[i], blk, static_cast<int>(i) + 1, static_cast<int>(i) + 1);
  }
  for (const auto& s : prog.socs()) {
    ++blk;
    int d = static_cast<int>(s.x.size()) + 1;
    sizes.push_back(d);
    for (int i = 1; i <= d; ++i) put_expr(s.t, blk, i, i);
    for (size_t k = 0; k < s.x.size(); ++k) put_expr(s.x[k], blk, 1, static_cast<int>(k) + 2);
  }
  for (const auto& m : prog.psds()) {
    ++blk;
    sizes.push_back(m.rows());
    for (int c = 0; c < m.cols(); ++c)
      for (int r = c; r < m.rows(); ++r) put_expr(m(r, c), blk, c + 1, r + 1);
  }

  os << "\"robinv program\"\n";
  os << prog.num_variables() << "\n" << sizes.size() << "\n";
  for (size_t i = 0; i < sizes.size(); ++i) os << (i ? " " : "") << sizes[i];
  os << "\n";
  std::vector<double> c(static_cast<size_t>(prog.num_variables()), 0.0);
  for (const auto& t : prog.objective().terms) c[static_cast<size_t>(t.var)] += t.coef;
  os << std::setprecision(17);
  for (size_t i = 0; i < c.size(); ++i) os << (i ? " " : "") << c[i];
  os << "\n";
  for (const auto& [k, v] : entries)
    os << std::get<0>(k) << " " << std::get<1>(k) << " " << std::get<2>(k) << " " << std::get<3>(k) << " " << v << "\n";
}

}  // namespace robinv::conic
