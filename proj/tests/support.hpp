#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "kanlab/numerics.hpp"

namespace testsupport {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

inline int uniform_int(Rng& rng, int a, int b) {
  return std::uniform_int_distribution<int>(a, b)(rng);
}

inline std::vector<double> uniform_vec(Rng& rng, std::size_t n, double a, double b) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, a, b);
  return v;
}

inline kanlab::numerics::DenseMatrix random_symmetric(Rng& rng, std::size_t n) {
  kanlab::numerics::DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = uniform(rng, -1.0, 1.0);
  return a;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f along coordinate i with step h.
inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

}  // namespace testsupport
