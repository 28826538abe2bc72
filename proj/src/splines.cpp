#include "kanlab/splines.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kanlab/errors.hpp"
#include "kanlab/numerics.hpp"

namespace kanlab::splines {

Grid::Grid(double a, double b, int intervals, int degree)
    : a_(a), b_(b), intervals_(intervals), degree_(degree) {
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
    throw std::invalid_argument("Grid: requires finite a < b");
  if (intervals < 1) throw std::invalid_argument("Grid: interval count must be >= 1");
  if (degree < 1 || degree > kMaxDegree)
    throw std::invalid_argument("Grid: degree must be in [1, " + std::to_string(kMaxDegree) + "]");
}

double Grid::knot(int j) const noexcept {
  return std::lerp(a_, b_, static_cast<double>(j) / intervals_);
}

std::vector<double> Grid::knots() const {
  std::vector<double> t;
  t.reserve(intervals_ + 2 * degree_ + 1);
  for (int j = -degree_; j <= intervals_ + degree_; ++j) t.push_back(knot(j));
  return t;
}

int Grid::locate(double x) const noexcept {
  if (!(x >= support_lo()) || !(x < support_hi())) return INT_MIN;
  int m = static_cast<int>(std::floor((x - a_) / spacing()));
  m = std::clamp(m, -degree_, intervals_ + degree_ - 1);
  while (m > -degree_ && x < knot(m)) --m;
  while (m < intervals_ + degree_ - 1 && x >= knot(m + 1)) ++m;
  return m;
}

Grid make_uniform_grid(double a, double b, int intervals, int degree) {
  return Grid(a, b, intervals, degree);
}

namespace {

// Cox-de Boor triangle for the degree-p functions that are nonzero on
// [t_m, t_{m+1}); out[j] is the function with index m + j (degree-p indexing).
void cox_de_boor(const Grid& g, int m, int p, double x, double* out) {
  std::array<double, kMaxDegree + 1> left{}, right{};
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - g.knot(m + 1 - j);
    right[j] = g.knot(m + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

BasisWindow basis_window(const Grid& grid, double x, int order) {
  BasisWindow w;
  if (order < 0) throw std::invalid_argument("basis_window: negative derivative order");
  const int k = grid.degree();
  const int m = grid.locate(x);
  if (m == INT_MIN) return w;

  // Nonzero indices are m..m+k, clipped to the real basis [0, G+k).
  const int lo = std::max(m, 0);
  const int hi = std::min(m + k, grid.basis_count() - 1);
  w.first = lo;
  w.count = hi - lo + 1;
  if (order > k) return w;

  std::array<double, kMaxDegree + 1> low{};
  const int p = k - order;
  cox_de_boor(grid, m, p, x, low.data());

  // D^r B_i = h^{-r} sum_s (-1)^s C(r,s) B^{(k-r)}_{i-r+s}; low[j] holds index m + j.
  const double scale = std::pow(grid.spacing(), -order);
  for (int i = lo; i <= hi; ++i) {
    double v = 0.0;
    for (int s = 0; s <= order; ++s) {
      const int j = i - order + s - m;
      if (j < 0 || j > p) continue;
      v += ((s % 2) ? -1.0 : 1.0) * binomial(order, s) * low[j];
    }
    w.values[i - lo] = v * scale;
  }
  return w;
}

std::vector<double> basis_values(const Grid& grid, double x) {
  std::vector<double> out(grid.basis_count(), 0.0);
  const auto w = basis_window(grid, x, 0);
  for (int i = 0; i < w.count; ++i) out[w.first + i] = w.values[i];
  return out;
}

std::vector<double> basis_derivative(const Grid& grid, double x, int order) {
  if (order < 1 || order > grid.degree())
    throw std::invalid_argument("basis_derivative: order must be in [1, degree]");
  std::vector<double> out(grid.basis_count(), 0.0);
  const auto w = basis_window(grid, x, order);
  for (int i = 0; i < w.count; ++i) out[w.first + i] = w.values[i];
  return out;
}

double eval_spline(const Grid& grid, std::span<const double> c, double x, int order) {
  const auto w = basis_window(grid, x, order);
  double s = 0.0;
  for (int i = 0; i < w.count; ++i) s += c[w.first + i] * w.values[i];
  return s;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) noexcept { return x * sigmoid(x); }

double silu_derivative(double x, int order) {
  const double s = sigmoid(x);
  const double q = s * (1.0 - s);
  const double u = 1.0 - 2.0 * s;
  switch (order) {
    case 0:
      return x * s;
    case 1:
      return s + x * q;
    case 2:
      return q * (2.0 + x * u);
    case 3:
      return q * (u * (3.0 + x * u) - 2.0 * x * q);
    default:
      throw std::invalid_argument("silu_derivative: order must be in [0, 3]");
  }
}

SplineActivation SplineActivation::zero(const Grid& grid, double w_b) {
  return SplineActivation{grid, std::vector<double>(grid.basis_count(), 0.0), w_b};
}

double eval_activation(const SplineActivation& act, double x) {
  return act.w_b * silu(x) + eval_spline(act.grid, act.coefficients, x, 0);
}

std::vector<double> fit_coefficients(const Grid& grid, std::span<const double> xs,
                                     std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_coefficients: size mismatch");
  const auto nb = static_cast<std::size_t>(grid.basis_count());
  if (xs.size() < nb)
    throw std::invalid_argument("fit_coefficients: need at least " + std::to_string(nb) +
                                " samples, got " + std::to_string(xs.size()));

  std::vector<int> hits(grid.intervals(), 0);
  for (double x : xs) {
    const int m = grid.locate(x);
    if (m >= 0 && m < grid.intervals()) ++hits[m];
  }
  std::vector<int> empty;
  for (int m = 0; m < grid.intervals(); ++m)
    if (hits[m] == 0) empty.push_back(m);
  if (!empty.empty()) {
    std::string msg = "fit_coefficients: empty knot intervals:";
    for (int m : empty) msg += " " + std::to_string(m);
    throw CoverageError(std::move(empty), msg);
  }

  numerics::DenseMatrix a(xs.size(), nb);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const auto w = basis_window(grid, xs[r], 0);
    for (int i = 0; i < w.count; ++i) a(r, w.first + i) = w.values[i];
  }
  try {
    return numerics::solve_least_squares(a, ys);
  } catch (const RankDeficientError& e) {
    throw CoverageError({}, "fit_coefficients: samples do not determine basis function " +
                                std::to_string(e.column()));
  }
}

namespace {

std::vector<double> uniform_samples(double a, double b, int n) {
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = std::lerp(a, b, static_cast<double>(i) / (n - 1));
  return xs;
}

// Spline on [a, b], continued beyond it by the polynomial pieces of the end
// intervals rather than by the decaying extended basis.
double eval_continued(const Grid& g, std::span<const double> c, double x) {
  if (x >= g.a() && x < g.b()) return eval_spline(g, c, x);
  const int m = x < g.a() ? 0 : g.intervals() - 1;
  std::array<double, kMaxDegree + 1> b{};
  cox_de_boor(g, m, g.degree(), x, b.data());
  double s = 0.0;
  for (int j = 0; j <= g.degree(); ++j) s += c[m + j] * b[j];
  return s;
}

}  // namespace

SplineActivation extend_grid(const SplineActivation& act, int new_intervals, int sample_count) {
  const Grid& old = act.grid;
  if (new_intervals <= old.intervals())
    throw std::invalid_argument("extend_grid: new interval count must exceed the current one");
  Grid fine(old.a(), old.b(), new_intervals, old.degree());
  if (sample_count == 0) sample_count = 2 * fine.basis_count();

  const auto xs = uniform_samples(old.a(), old.b(), sample_count);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = eval_spline(old, act.coefficients, xs[i]);
  return SplineActivation{fine, fit_coefficients(fine, xs, ys), act.w_b};
}

RangeUpdate update_grid_range(const SplineActivation& act, std::span<const double> observed,
                              double margin) {
  if (observed.empty()) throw std::invalid_argument("update_grid_range: no observed inputs");
  const auto [mn_it, mx_it] = std::minmax_element(observed.begin(), observed.end());
  double lo = *mn_it;
  double hi = *mx_it;
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("update_grid_range: non-finite observed input");

  RangeUpdate out{act, false, false};
  if (hi == lo) {
    out.degenerate_range = true;
    lo -= 0.5;
    hi += 0.5;
  }
  const double span = hi - lo;
  const Grid& old = act.grid;
  const double new_a = std::min(old.a(), lo - margin * span);
  const double new_b = std::max(old.b(), hi + margin * span);
  if (new_a == old.a() && new_b == old.b()) return out;

  Grid grid(new_a, new_b, old.intervals(), old.degree());
  const int n = std::max(8 * grid.basis_count(), 200);
  auto fit_on = [&](double a, double b) {
    const auto xs = uniform_samples(a, b, n);
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = eval_continued(old, act.coefficients, xs[i]);
    numerics::DenseMatrix m(xs.size(), grid.basis_count());
    for (std::size_t r = 0; r < xs.size(); ++r) {
      const auto w = basis_window(grid, xs[r], 0);
      for (int i = 0; i < w.count; ++i) m(r, w.first + i) = w.values[i];
    }
    return numerics::solve_least_squares(m, ys);
  };

  std::vector<double> coef;
  try {
    coef = fit_on(old.a(), old.b());
  } catch (const RankDeficientError&) {
    coef = fit_on(new_a, new_b);
  }
  out.activation = SplineActivation{grid, std::move(coef), act.w_b};
  out.changed = true;
  return out;
}

}  // namespace kanlab::splines
