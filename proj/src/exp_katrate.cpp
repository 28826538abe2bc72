#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kanlab/experiments.hpp"
#include "kanlab/splines.hpp"

namespace kanlab::experiments {

KatRateResult kat_rate_check(const std::function<double(double)>& target, int degree, const std::vector<int>& grids) {
  if (grids.size() < 2) throw std::invalid_argument("kat_rate_check: need at least two grid sizes");
  KatRateResult r{degree, grids, {}, 0.0};
  constexpr int kDense = 20000;
  for (int G : grids) {
    const splines::Grid grid(0.0, 1.0, G, degree);
    // 8 samples per interval keeps the fit well determined for every degree.
    const int ns = 8 * (G + degree) + 1;
    std::vector<double> xs(ns), ys(ns);
    for (int i = 0; i < ns; ++i) {
      xs[i] = static_cast<double>(i) / (ns - 1);
      ys[i] = target(xs[i]);
    }
    const auto c = splines::fit_coefficients(grid, xs, ys);
    double err = 0.0;
    for (int i = 0; i <= kDense; ++i) {
      const double x = static_cast<double>(i) / kDense;
      err = std::max(err, std::abs(splines::eval_spline(grid, c, x) - target(x)));
    }
    r.errors.push_back(err);
  }
  std::vector<double> g(grids.begin(), grids.end());
  r.slope = loglog_slope(g, r.errors);
  return r;
}

}  // namespace kanlab::experiments
