#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "kanlab/spectral.hpp"
#include "support.hpp"

using namespace kanlab;
using numerics::DenseMatrix;

namespace {

// Composite Simpson on a fine mesh per knot interval; independent of the
// Gauss-Legendre path.
DenseMatrix simpson_gram(const splines::Grid& g, std::vector<double>& v) {
  const int n = g.basis_count();
  DenseMatrix C(n, n);
  v.assign(n, 0.0);
  const int sub = 200;
  for (int m = 0; m < g.intervals(); ++m) {
    const double lo = g.knot(m), hi = g.knot(m + 1), h = (hi - lo) / sub;
    for (int s = 0; s <= sub; ++s) {
      const double w = (s == 0 || s == sub) ? h / 3 : (s % 2 ? 4 * h / 3 : 2 * h / 3);
      const auto b = splines::basis_values(g, lo + s * h);
      for (int i = 0; i < n; ++i) {
        v[i] += w * b[i];
        for (int j = 0; j < n; ++j) C(i, j) += w * b[i] * b[j];
      }
    }
  }
  return C;
}

double min_eig(const DenseMatrix& a) { return numerics::sym_eig(a).values.front(); }

}  // namespace

TEST_CASE("gram_matrix: k=1 mass matrix") {
  const splines::Grid g(0.0, 2.0, 8, 1);
  const double h = g.spacing();
  const auto gd = spectral::gram_matrix(g, false);
  for (int i = 1; i + 1 < g.basis_count(); ++i) {
    CHECK(gd.C(i, i) == doctest::Approx(2 * h / 3));
    CHECK(gd.C(i, i + 1) == doctest::Approx(h / 6));
    CHECK(gd.C(i, i - 1) == doctest::Approx(h / 6));
    CHECK(gd.v[i] == doctest::Approx(h));
  }
  // End hats are cut in half by [a, b].
  CHECK(gd.C(0, 0) == doctest::Approx(h / 3));
}

TEST_CASE("gram_matrix: total mass, bandwidth and Simpson oracle") {
  testsupport::Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const int k = testsupport::uniform_int(rng, 1, 4), G = testsupport::uniform_int(rng, 1, 12);
    const double a = testsupport::uniform(rng, -2, 1), b = a + testsupport::uniform(rng, 0.3, 3);
    const splines::Grid g(a, b, G, k);
    const auto raw = spectral::gram_matrix(g, false);
    const auto nrm = spectral::gram_matrix(g, true);
    double total = 0.0, total_n = 0.0;
    for (double x : raw.C.data()) total += x;
    for (double x : nrm.C.data()) total_n += x;
    CHECK(total == doctest::Approx(b - a).epsilon(1e-12));
    CHECK(total_n == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < g.basis_count(); ++i)
      for (int j = 0; j < g.basis_count(); ++j)
        if (std::abs(i - j) > k) CHECK(raw.C(i, j) == 0.0);
    std::vector<double> v;
    const auto C = simpson_gram(g, v);
    for (int i = 0; i < g.basis_count(); ++i) {
      CHECK(raw.v[i] == doctest::Approx(v[i]).epsilon(1e-9));
      for (int j = 0; j < g.basis_count(); ++j) CHECK(std::abs(raw.C(i, j) - C(i, j)) < 1e-9 * (b - a));
    }
  }
}

TEST_CASE("gram_matrix: C positive definite and D below C") {
  for (int k = 1; k <= 3; ++k)
    for (int G : {5, 10, 20, 40, 80}) {
      const auto gd = spectral::gram_matrix(splines::make_uniform_grid(-1, 1, G, k));
      CHECK(min_eig(gd.C) > 0.0);
      CHECK(min_eig(gd.C - gd.D) >= -1e-12);
    }
}

TEST_CASE("assemble_hessian: block structure") {
  const auto g = splines::make_uniform_grid(-1, 1, 6, 2);
  const auto gd = spectral::gram_matrix(g);
  const std::size_t nb = g.basis_count();
  CHECK(spectral::assemble_hessian(1, 1, g) == gd.C);

  const auto M2 = spectral::assemble_hessian(2, 1, g);
  for (std::size_t l = 0; l < nb; ++l)
    for (std::size_t ll = 0; ll < nb; ++ll) {
      CHECK(M2(l, ll) == gd.C(l, ll));
      CHECK(M2(nb + l, nb + ll) == gd.C(l, ll));
      CHECK(M2(l, nb + ll) == gd.D(l, ll));
      CHECK(M2(nb + l, ll) == gd.D(l, ll));
    }

  const auto M3 = spectral::assemble_hessian(2, 3, g);
  const std::size_t blk = 2 * nb;
  for (std::size_t r = 0; r < M3.rows(); ++r)
    for (std::size_t c = 0; c < M3.cols(); ++c) {
      if (r / blk == c / blk)
        CHECK(M3(r, c) == M2(r % blk, c % blk));
      else
        CHECK(M3(r, c) == 0.0);
    }
  CHECK_THROWS_AS(spectral::assemble_hessian(0, 1, g), std::invalid_argument);
}

TEST_CASE("assemble_hessian: removing the rank-one part leaves blockdiag(C - D)") {
  for (int k = 1; k <= 3; ++k)
    for (int d = 1; d <= 3; ++d)
      for (int G : {5, 10, 20}) {
        const auto g = splines::make_uniform_grid(-1, 1, G, k);
        const auto gd = spectral::gram_matrix(g);
        const auto B = spectral::assemble_hessian(d, 1, g);
        const std::size_t nb = g.basis_count();
        double worst = 0.0;
        for (std::size_t r = 0; r < B.rows(); ++r)
          for (std::size_t c = 0; c < B.cols(); ++c) {
            const double lhs = B(r, c) - gd.v[r % nb] * gd.v[c % nb];
            const double rhs = r / nb == c / nb ? gd.C(r % nb, c % nb) - gd.D(r % nb, c % nb) : 0.0;
            worst = std::max(worst, std::abs(lhs - rhs));
          }
        CHECK(worst <= 1e-12);
      }
}

TEST_CASE("spectrum_report: one output, one coordinate") {
  const auto g = splines::make_uniform_grid(-1, 1, 10, 3);
  const auto r = spectral::hessian_report(1, 1, g);
  CHECK(r.degenerate_count == 0);
  const auto ev = numerics::sym_eig(spectral::gram_matrix(g).C).values;
  CHECK(r.ratio == doctest::Approx(ev.back() / ev.front()));
  CHECK(r.G == 10);
  CHECK(r.k == 3);
}

TEST_CASE("spectrum_report: constant-shift null vector for d=2") {
  const auto g = splines::make_uniform_grid(-1, 1, 10, 3);
  const auto r = spectral::hessian_report(2, 1, g);
  CHECK(r.degenerate_count == 1);
  CHECK(r.expected_degenerate == 1);
  const std::size_t nb = g.basis_count();
  std::vector<double> z(2 * nb, 1.0);
  for (std::size_t l = nb; l < 2 * nb; ++l) z[l] = -1.0;
  const auto Mz = r.M.apply(z);
  CHECK(numerics::norm2(Mz) <= 1e-14 * r.lambda_max * numerics::norm2(z));
  CHECK(r.eigenvalues.front() >= -1e-10 * r.lambda_max);
}

TEST_CASE("spectrum_report: degenerate count and G-uniform ratio") {
  for (int k = 1; k <= 3; ++k)
    for (int d = 1; d <= 3; ++d)
      for (int dp = 1; dp <= 2; ++dp) {
        double lo = INFINITY, hi = 0.0;
        for (int G : {5, 10, 20}) {
          const auto r = spectral::hessian_report(d, dp, splines::make_uniform_grid(-1, 1, G, k));
          CHECK(r.degenerate_count == dp * (d - 1));
          lo = std::min(lo, r.ratio);
          hi = std::max(hi, r.ratio);
        }
        CHECK(hi / lo < 2.0);
      }
}

TEST_CASE("gradient_descent_trace: closed forms") {
  const auto I = DenseMatrix::identity(3);
  const std::vector<double> b{1.0, -2.0, 0.5};
  const auto t = spectral::gradient_descent_trace(I, b, 5, 0.3);
  for (double f : t.factors) CHECK(f == doctest::Approx(0.7));
  CHECK(t.max_factor_deviation <= 1e-10);
  CHECK_FALSE(t.diverges);

  const double diag[] = {1.0, 4.0};
  const auto D = DenseMatrix::diagonal(diag);
  const std::vector<double> bb{1.0, 1.0};
  const auto t2 = spectral::gradient_descent_trace(D, bb, 10, 0.1);
  CHECK(t2.factors[0] == doctest::Approx(0.9));
  CHECK(t2.factors[1] == doctest::Approx(0.6));
  CHECK(t2.errors[1][1] == doctest::Approx(0.6 * t2.errors[0][1]));
  CHECK(t2.max_factor_deviation <= 1e-10);
  CHECK(spectral::gradient_descent_trace(D, bb, 1, 0.5).diverges);
}

TEST_CASE("gradient_descent_trace: KAN Hessian modes decay inside the spectral band") {
  const auto r = spectral::hessian_report(2, 1, splines::make_uniform_grid(-1, 1, 8, 2));
  testsupport::Rng rng(4);
  const auto b = testsupport::uniform_vec(rng, r.M.rows(), -1, 1);
  const double lr = 1.0 / r.lambda_max;
  const auto t = spectral::gradient_descent_trace(r.M, b, 30, lr);
  CHECK(t.max_factor_deviation <= 1e-10);
  for (std::size_t i = static_cast<std::size_t>(r.expected_degenerate); i < t.factors.size(); ++i) {
    CHECK(t.factors[i] >= 1.0 - lr * r.lambda_max - 1e-12);
    CHECK(t.factors[i] <= 1.0 - lr * r.lambda_min_nonzero + 1e-12);
  }
}
