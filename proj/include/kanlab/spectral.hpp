#pragma once

#include <span>
#include <vector>

#include "kanlab/numerics.hpp"
#include "kanlab/splines.hpp"

namespace kanlab::spectral {

/// C_ij = int B_i B_j, v_i = int B_i, D = v v^T over [a, b]. With `normalized`
/// the measure is dx / (b - a).
struct GramData {
  numerics::DenseMatrix C;
  std::vector<double> v;
  numerics::DenseMatrix D;
};

GramData gram_matrix(const splines::Grid& grid, bool normalized = true);

/// Hessian of the continuous least-squares loss of a single linear KAN layer,
/// indexed (i, j, l) = (output, input coordinate, basis) with l fastest.
/// Per output the block is C on the diagonal and D off it.
numerics::DenseMatrix assemble_hessian(int d, int dprime, const splines::Grid& grid);

struct HessianReport {
  int d = 0;
  int dprime = 0;
  int G = 0;
  int k = 0;
  numerics::DenseMatrix M;
  std::vector<double> eigenvalues;  // ascending
  double tau = 0.0;                 // relative threshold
  int degenerate_count = 0;
  int expected_degenerate = 0;      // d'(d - 1)
  /// lambda_N / lambda_{d'(d-1)+1} (1-based)
  double ratio = 0.0;
  double lambda_min_nonzero = 0.0;
  double lambda_max = 0.0;
};

inline constexpr double kDefaultTau = 1e-10;

HessianReport spectrum_report(const numerics::DenseMatrix& M, int d, int dprime, double tau = kDefaultTau);
/// assemble_hessian + spectrum_report with the grid metadata filled in.
HessianReport hessian_report(int d, int dprime, const splines::Grid& grid, double tau = kDefaultTau);

/// Exact gradient descent on 0.5 theta^T M theta + b^T theta.
struct DescentTrace {
  std::vector<double> eigenvalues;
  /// errors[t][i]: q_i^T (theta_t - theta*) for t = 0..steps, theta* = -M^+ b.
  std::vector<std::vector<double>> errors;
  /// Expected per-step factors 1 - lr * lambda_i.
  std::vector<double> factors;
  /// Largest |observed factor - expected| over modes with a resolvable error.
  double max_factor_deviation = 0.0;
  /// lr >= 2 / lambda_N
  bool diverges = false;
};

DescentTrace gradient_descent_trace(const numerics::DenseMatrix& M, std::span<const double> b, int steps,
                                    double lr, std::span<const double> theta0 = {});

}  // namespace kanlab::spectral
