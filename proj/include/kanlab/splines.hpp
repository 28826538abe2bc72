#pragma once

#include <array>
#include <span>
#include <vector>

namespace kanlab::splines {

inline constexpr int kMaxDegree = 7;

/// Uniform knot grid on [a, b] with G intervals, continued uniformly by k
/// knots on each side: t_{-k} < ... < t_0 = a < ... < t_G = b < ... < t_{G+k}.
/// Basis function i (0 <= i < G+k) is supported on [t_{i-k}, t_{i+1}].
class Grid {
 public:
  Grid(double a, double b, int intervals, int degree);

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  int intervals() const noexcept { return intervals_; }
  int degree() const noexcept { return degree_; }
  int basis_count() const noexcept { return intervals_ + degree_; }
  double spacing() const noexcept { return (b_ - a_) / intervals_; }

  /// Knot t_j; indices outside [-k, G+k] continue the uniform lattice.
  double knot(int j) const noexcept;
  /// t_{-k} .. t_{G+k}, G + 2k + 1 values.
  std::vector<double> knots() const;
  double support_lo() const noexcept { return knot(-degree_); }
  double support_hi() const noexcept { return knot(intervals_ + degree_); }

  /// Index m with t_m <= x < t_{m+1}, or nullopt-like sentinel INT_MIN when x
  /// lies outside [t_{-k}, t_{G+k}).
  int locate(double x) const noexcept;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  double a_;
  double b_;
  int intervals_;
  int degree_;
};

Grid make_uniform_grid(double a, double b, int intervals, int degree);

/// The (at most k+1) basis functions that can be nonzero at a point.
struct BasisWindow {
  int first = 0;
  int count = 0;
  std::array<double, kMaxDegree + 1> values{};
};

/// Values of the `order`-th derivative of the nonzero basis functions at x.
/// Orders above the degree yield zeros (piecewise polynomial).
BasisWindow basis_window(const Grid& grid, double x, int order = 0);

std::vector<double> basis_values(const Grid& grid, double x);
/// Throws std::invalid_argument unless 1 <= order <= degree.
std::vector<double> basis_derivative(const Grid& grid, double x, int order);

/// sum_i c_i B_i^{(order)}(x)
double eval_spline(const Grid& grid, std::span<const double> coefficients, double x,
                   int order = 0);

double sigmoid(double x) noexcept;
double silu(double x) noexcept;
/// order-th derivative of x*sigmoid(x), 0 <= order <= 3.
double silu_derivative(double x, int order);

/// phi(x) = w_b * silu(x) + sum_i c_i B_i(x)
struct SplineActivation {
  Grid grid;
  std::vector<double> coefficients;
  double w_b = 0.0;

  static SplineActivation zero(const Grid& grid, double w_b = 0.0);
  friend bool operator==(const SplineActivation&, const SplineActivation&) = default;
};

double eval_activation(const SplineActivation& act, double x);

/// Least-squares spline fit. Requires at least basis_count samples and at least
/// one sample in every knot interval of [a, b]; otherwise throws CoverageError.
std::vector<double> fit_coefficients(const Grid& grid, std::span<const double> xs,
                                     std::span<const double> ys);

/// Refit the spline part on a finer grid over the same range from uniform
/// samples of the coarse activation. sample_count = 0 selects 2 * (newG + k).
SplineActivation extend_grid(const SplineActivation& act, int new_intervals,
                             int sample_count = 0);

struct RangeUpdate {
  SplineActivation activation;
  bool changed = false;
  /// Observed inputs had zero spread; a unit span around them was used.
  bool degenerate_range = false;
};

/// Grow-only range update: the new range is the union of the current range and
/// [min - margin*span, max + margin*span] of the observed inputs. The spline
/// part is refit to the old activation on the old range; if those samples do
/// not determine every new basis function, the whole new range is sampled with
/// the old end pieces continued polynomially past [a, b].
RangeUpdate update_grid_range(const SplineActivation& act, std::span<const double> observed,
                              double margin = 0.05);

}  // namespace kanlab::splines
