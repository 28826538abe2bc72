#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "kanlab/errors.hpp"
#include "kanlab/numerics.hpp"
#include "kanlab/optim.hpp"
#include "support.hpp"

using namespace kanlab;
using numerics::DenseMatrix;

TEST_CASE("adam: first step moves by lr along -sign(g)") {
  auto s = optim::make_adam(4, 0.01);
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g{0.3, -5.0, 1e-3, 0.0};
  const auto p0 = p;
  optim::adam_step(s, p, g);
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(p[i] - p0[i] == doctest::Approx(-0.01 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));
  CHECK(s.step == 1);
}

TEST_CASE("adam: zero gradient keeps parameters") {
  auto s = optim::make_adam(3, 0.1);
  std::vector<double> p{1.0, 2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  for (int t = 0; t < 100; ++t) optim::adam_step(s, p, g);
  CHECK(p == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("adam: quadratic bowl against a scalar recursion") {
  testsupport::Rng rng(2);
  auto x = testsupport::uniform_vec(rng, 5, -1, 1);
  const double n0 = numerics::norm2(x);
  for (double& v : x) v /= n0;
  auto ref = x;
  auto s = optim::make_adam(5, 0.1);
  for (int t = 0; t < 500; ++t) optim::adam_step(s, x, std::vector<double>(x));

  // Each coordinate evolves independently.
  for (double& r : ref) {
    double m = 0, v = 0;
    for (int t = 1; t <= 500; ++t) {
      const double g = r;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      r -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  CHECK(numerics::norm2(x) < 1e-3);
}

TEST_CASE("adam: non-finite gradient reports step and index") {
  auto s = optim::make_adam(3, 0.1);
  std::vector<double> p{1.0, 1.0, 1.0};
  optim::adam_step(s, p, std::vector<double>{1.0, 1.0, 1.0});
  const auto before = p;
  try {
    optim::adam_step(s, p, std::vector<double>{1.0, NAN, 1.0});
    FAIL("expected an exception");
  } catch (const NonFiniteGradientError& e) {
    CHECK(e.step() == 2);
    CHECK(e.index() == 1);
  }
  CHECK(p == before);
  CHECK(s.step == 1);
  CHECK_THROWS_AS(optim::adam_step(s, p, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("two_loop matches the dense BFGS inverse update") {
  testsupport::Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const int n = testsupport::uniform_int(rng, 1, 5);
    const int m = testsupport::uniform_int(rng, n, n + 3);
    // Pairs with s^T y > 0 from a random SPD matrix.
    DenseMatrix A = testsupport::random_symmetric(rng, n);
    A = A * A + DenseMatrix::identity(n);
    std::deque<optim::CurvaturePair> hist;
    for (int j = 0; j < m; ++j) {
      auto s = testsupport::uniform_vec(rng, n, -1, 1);
      hist.push_back({s, A.apply(s)});
    }
    const auto g = testsupport::uniform_vec(rng, n, -1, 1);

    const auto& last = hist.back();
    DenseMatrix H = (numerics::dot(last.s, last.y) / numerics::dot(last.y, last.y)) * DenseMatrix::identity(n);
    for (const auto& p : hist) {
      const double rho = 1.0 / numerics::dot(p.y, p.s);
      DenseMatrix V = DenseMatrix::identity(n), S(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          V(i, j) -= rho * p.y[i] * p.s[j];  // V = I - rho y s^T
          S(i, j) = rho * p.s[i] * p.s[j];
        }
      H = V.transposed() * H * V + S;
    }
    const auto dense = H.apply(g);
    const auto fast = optim::two_loop(hist, g);
    for (int i = 0; i < n; ++i) CHECK(std::abs(fast[i] - dense[i]) <= 1e-10 * (1 + std::abs(dense[i])));
  }
  const std::vector<double> g{1.0, -2.0};
  CHECK(optim::two_loop({}, g) == g);
}

TEST_CASE("lbfgs: identity quadratic in two iterations") {
  const std::vector<double> b{3.0, -1.0, 2.0, 0.5};
  const optim::Objective f = [&](std::span<const double> x, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = x[i] - b[i];
      s += 0.5 * g[i] * g[i];
    }
    return s;
  };
  const auto r = optim::lbfgs_minimize(f, std::vector<double>(4, 0.0));
  CHECK(r.reason == "gradient");
  CHECK(r.iterations <= 2);
  for (int i = 0; i < 4; ++i) CHECK(r.params[i] == doctest::Approx(b[i]).epsilon(1e-10));
}

TEST_CASE("lbfgs: Rosenbrock") {
  const optim::Objective f = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  optim::LbfgsOptions o;
  o.max_iters = 100;
  const auto r = optim::lbfgs_minimize(f, {-1.2, 1.0}, o);
  MESSAGE("rosenbrock iterations " << r.iterations << " evaluations " << r.evaluations);
  CHECK(r.loss_trace.back() < 1e-8);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-14 * (1 + std::abs(r.loss_trace[i - 1])));
}

TEST_CASE("lbfgs: random SPD quadratics reach the closed-form minimizer") {
  testsupport::Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const int n = testsupport::uniform_int(rng, 2, 30);
    DenseMatrix A = testsupport::random_symmetric(rng, n);
    A = A * A + 0.1 * DenseMatrix::identity(n);
    const auto b = testsupport::uniform_vec(rng, n, -1, 1);
    const optim::Objective f = [&](std::span<const double> x, std::span<double> g) {
      const auto Ax = A.apply(x);
      double s = 0;
      for (int i = 0; i < n; ++i) {
        g[i] = Ax[i] - b[i];
        s += 0.5 * x[i] * Ax[i] - b[i] * x[i];
      }
      return s;
    };
    optim::LbfgsOptions o;
    o.max_iters = 2000;
    const auto r = optim::lbfgs_minimize(f, std::vector<double>(n, 0.0), o);
    std::vector<double> g(n);
    f(r.params, g);
    CHECK(numerics::norm2(g) < 1e-8);
    const auto xs = numerics::solve_least_squares(A, b);
    for (int i = 0; i < n; ++i) CHECK(r.params[i] == doctest::Approx(xs[i]).epsilon(1e-6));
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
      CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-14 * (1 + std::abs(r.loss_trace[i - 1])));
  }
}

TEST_CASE("lbfgs: non-finite trial losses are rejected, not fatal") {
  // log barrier: NaN for x <= 0, minimum at x = 1.
  const optim::Objective f = [](std::span<const double> x, std::span<double> g) {
    if (x[0] <= 0) {
      g[0] = NAN;
      return static_cast<double>(NAN);
    }
    g[0] = 1 - 1 / x[0];
    return x[0] - std::log(x[0]);
  };
  const auto r = optim::lbfgs_minimize(f, {20.0});
  CHECK(r.params[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("lbfgs: inconsistent gradient triggers the fallback and stops") {
  const optim::Objective f = [](std::span<const double> x, std::span<double> g) {
    g[0] = -2 * x[0];  // wrong sign
    return x[0] * x[0];
  };
  std::vector<std::string> messages;
  optim::LbfgsHooks hooks;
  hooks.log = [&](const std::string& m) { messages.push_back(m); };
  const auto r = optim::lbfgs_minimize(f, {1.0}, {}, hooks);
  CHECK(r.fallbacks == 1);
  CHECK(r.reason == "stalled");
  CHECK_FALSE(messages.empty());
  CHECK(r.params[0] == 1.0);
}

TEST_CASE("lbfgs: iteration hook and budget") {
  const optim::Objective f = [](std::span<const double> x, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = 4 * std::pow(x[i] - 1, 3) + 0.1 * (x[i] - 1);
      s += std::pow(x[i] - 1, 4) + 0.05 * (x[i] - 1) * (x[i] - 1);
    }
    return s;
  };
  optim::LbfgsOptions o;
  o.max_iters = 3;
  int calls = 0;
  optim::LbfgsHooks hooks;
  hooks.on_iteration = [&](int it, double loss, std::span<const double>) {
    ++calls;
    CHECK(it == calls);
    CHECK(std::isfinite(loss));
  };
  const auto r = optim::lbfgs_minimize(f, {5.0, -3.0}, o, hooks);
  CHECK(r.iterations == 3);
  CHECK(calls == 3);
  CHECK(r.loss_trace.size() == 4);
  CHECK(r.reason == "max_iters");
}
