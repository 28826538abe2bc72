#include "kanlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kanlab::spectral {

GramData gram_matrix(const splines::Grid& grid, bool normalized) {
  const int n = grid.basis_count();
  const int k = grid.degree();
  const double scale = normalized ? 1.0 / (grid.b() - grid.a()) : 1.0;
  GramData g{numerics::DenseMatrix(n, n), std::vector<double>(n, 0.0), {}};
  for (int m = 0; m < grid.intervals(); ++m) {
    // B_i B_j has degree 2k on each interval; k + 1 nodes integrate it exactly.
    const auto rule = numerics::gauss_legendre(k + 1, grid.knot(m), grid.knot(m + 1));
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const auto w = splines::basis_window(grid, rule.nodes[q], 0);
      const double wq = rule.weights[q] * scale;
      for (int r = 0; r < w.count; ++r) {
        g.v[w.first + r] += wq * w.values[r];
        for (int s = 0; s < w.count; ++s) g.C(w.first + r, w.first + s) += wq * w.values[r] * w.values[s];
      }
    }
  }
  g.D = numerics::DenseMatrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g.D(i, j) = g.v[i] * g.v[j];
  return g;
}

numerics::DenseMatrix assemble_hessian(int d, int dprime, const splines::Grid& grid) {
  if (d < 1 || dprime < 1) throw std::invalid_argument("assemble_hessian: d and d' must be >= 1");
  const auto g = gram_matrix(grid, true);
  const std::size_t nb = grid.basis_count();
  const std::size_t block = nb * d;
  numerics::DenseMatrix M(block * dprime, block * dprime);
  for (int i = 0; i < dprime; ++i)
    for (int j = 0; j < d; ++j)
      for (int jj = 0; jj < d; ++jj) {
        const auto& src = j == jj ? g.C : g.D;
        const std::size_t r0 = i * block + j * nb, c0 = i * block + jj * nb;
        for (std::size_t l = 0; l < nb; ++l)
          for (std::size_t ll = 0; ll < nb; ++ll) M(r0 + l, c0 + ll) = src(l, ll);
      }
  return M;
}

HessianReport spectrum_report(const numerics::DenseMatrix& M, int d, int dprime, double tau) {
  if (M.rows() != M.cols() || M.rows() == 0) throw std::invalid_argument("spectrum_report: M must be square");
  if (d < 1 || dprime < 1) throw std::invalid_argument("spectrum_report: d and d' must be >= 1");
  HessianReport r;
  r.d = d;
  r.dprime = dprime;
  r.M = M;
  r.tau = tau;
  r.eigenvalues = numerics::sym_eig(M).values;
  r.lambda_max = r.eigenvalues.back();
  const double cut = tau * r.lambda_max;
  r.degenerate_count = static_cast<int>(
      std::count_if(r.eigenvalues.begin(), r.eigenvalues.end(), [cut](double l) { return l < cut; }));
  r.expected_degenerate = dprime * (d - 1);
  const std::size_t idx = static_cast<std::size_t>(r.expected_degenerate);
  if (idx < r.eigenvalues.size()) {
    r.lambda_min_nonzero = r.eigenvalues[idx];
    r.ratio = r.lambda_max / r.lambda_min_nonzero;
  }
  return r;
}

HessianReport hessian_report(int d, int dprime, const splines::Grid& grid, double tau) {
  auto r = spectrum_report(assemble_hessian(d, dprime, grid), d, dprime, tau);
  r.G = grid.intervals();
  r.k = grid.degree();
  return r;
}

DescentTrace gradient_descent_trace(const numerics::DenseMatrix& M, std::span<const double> b, int steps,
                                    double lr, std::span<const double> theta0) {
  const std::size_t n = M.rows();
  if (M.cols() != n || b.size() != n) throw std::invalid_argument("gradient_descent_trace: size mismatch");
  if (!theta0.empty() && theta0.size() != n) throw std::invalid_argument("gradient_descent_trace: theta0 size");
  if (steps < 0 || !(lr > 0.0)) throw std::invalid_argument("gradient_descent_trace: need steps >= 0, lr > 0");

  const auto eig = numerics::sym_eig(M);
  DescentTrace tr;
  tr.eigenvalues = eig.values;
  const double lmax = std::max(std::abs(eig.values.front()), std::abs(eig.values.back()));
  tr.diverges = lr >= 2.0 / eig.values.back();

  // theta* = -M^+ b in the eigenbasis, ignoring modes below 1e-12 lambda_max.
  std::vector<double> star(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(eig.values[i]) <= 1e-12 * lmax) continue;
    double qb = 0.0;
    for (std::size_t r = 0; r < n; ++r) qb += eig.vectors(r, i) * b[r];
    for (std::size_t r = 0; r < n; ++r) star[r] -= eig.vectors(r, i) * qb / eig.values[i];
  }
  for (double l : eig.values) tr.factors.push_back(1.0 - lr * l);

  std::vector<double> theta(n, 0.0);
  if (!theta0.empty()) theta.assign(theta0.begin(), theta0.end());
  auto project = [&] {
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < n; ++r) e[i] += eig.vectors(r, i) * (theta[r] - star[r]);
    return e;
  };
  tr.errors.push_back(project());
  double e0 = 0.0;
  for (double e : tr.errors.front()) e0 = std::max(e0, std::abs(e));

  for (int t = 0; t < steps; ++t) {
    const auto g = M.apply(theta);
    for (std::size_t r = 0; r < n; ++r) theta[r] -= lr * (g[r] + b[r]);
    tr.errors.push_back(project());
    const auto& prev = tr.errors[t];
    const auto& cur = tr.errors[t + 1];
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(eig.values[i]) <= 1e-12 * lmax) continue;
      // Ratios are only meaningful while the mode is well above round-off.
      if (std::abs(prev[i]) < 1e-4 * e0) continue;
      tr.max_factor_deviation = std::max(tr.max_factor_deviation, std::abs(cur[i] / prev[i] - tr.factors[i]));
    }
  }
  return tr;
}

}  // namespace kanlab::spectral
