#include "kanlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kanlab/errors.hpp"
#include "kanlab/numerics.hpp"

namespace kanlab::optim {

using numerics::dot;
using numerics::norm2;

AdamState make_adam(std::size_t n, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("make_adam: lr must be positive");
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != s.m.size() || grads.size() != s.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw NonFiniteGradientError(s.step + 1, i);
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + s.eps);
  }
}

std::vector<double> two_loop(const std::deque<CurvaturePair>& history, std::span<const double> g) {
  std::vector<double> q(g.begin(), g.end());
  std::vector<double> alpha(history.size());
  for (std::size_t j = history.size(); j-- > 0;) {
    const auto& p = history[j];
    alpha[j] = dot(p.s, q) / dot(p.y, p.s);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[j] * p.y[i];
  }
  if (!history.empty()) {
    const auto& p = history.back();
    const double gamma = dot(p.s, p.y) / dot(p.y, p.y);
    for (double& x : q) x *= gamma;
  }
  for (std::size_t j = 0; j < history.size(); ++j) {
    const auto& p = history[j];
    const double beta = dot(p.y, q) / dot(p.y, p.s);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[j] - beta) * p.s[i];
  }
  return q;
}

namespace {

constexpr double kNoise = 1e-14;

struct Point {
  double a = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
};

// Minimizer of the cubic through two points, or NaN.
double cubic_min(const Point& p, const Point& q) {
  const double d1 = p.d + q.d - 3.0 * (p.f - q.f) / (p.a - q.a);
  const double disc = d1 * d1 - p.d * q.d;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), q.a - p.a);
  return q.a - (q.a - p.a) * (q.d + d2 - d1) / (q.d - p.d + 2.0 * d2);
}

class LineSearch {
 public:
  LineSearch(const Objective& f, std::span<const double> x, std::span<const double> dir, double f0, double d0,
             const LbfgsOptions& o)
      : f_(f), x_(x), dir_(dir), f0_(f0), d0_(d0), o_(o), trial_(x.size()), grad_(x.size()) {}

  // Returns true with the accepted point in trial()/grad()/value().
  bool run(double a_init, int& evals) {
    Point prev{0.0, f0_, d0_};
    double a = a_init;
    for (int i = 0; i < 60; ++i) {
      Point cur = eval(a, evals);
      if (noise_level_accept(cur)) return true;
      if (!std::isfinite(cur.f) || cur.f > f0_ + o_.c1 * a * d0_ || (i > 0 && cur.f >= prev.f))
        return zoom(prev, cur, evals);
      if (std::abs(cur.d) <= -o_.c2 * d0_) return true;
      if (cur.d >= 0.0) return zoom(cur, prev, evals);
      prev = cur;
      a *= 2.0;
    }
    return false;
  }

  std::span<const double> trial() const { return trial_; }
  std::span<const double> grad() const { return grad_; }
  double value() const { return value_; }
  double step() const { return step_; }

 private:
  Point eval(double a, int& evals) {
    for (std::size_t i = 0; i < trial_.size(); ++i) trial_[i] = x_[i] + a * dir_[i];
    value_ = f_(trial_, grad_);
    step_ = a;
    ++evals;
    return {a, value_, std::isfinite(value_) ? dot(grad_, dir_) : std::numeric_limits<double>::quiet_NaN()};
  }

  // Near a minimizer the decrease drops below the round-off of f and Armijo
  // stops being decidable; accept a point within a few ulps of f0 that meets
  // the curvature condition (approximate Wolfe).
  bool noise_level_accept(const Point& p) const {
    return std::isfinite(p.f) && std::abs(p.f - f0_) <= kNoise * (1.0 + std::abs(f0_)) &&
           std::abs(p.d) <= -o_.c2 * d0_;
  }

  bool zoom(Point lo, Point hi, int& evals) {
    for (int j = 0; j < o_.max_zoom; ++j) {
      const double left = std::min(lo.a, hi.a), right = std::max(lo.a, hi.a), w = right - left;
      double a = std::isfinite(hi.f) ? cubic_min(lo, hi) : std::numeric_limits<double>::quiet_NaN();
      if (!(a >= left + 0.1 * w && a <= right - 0.1 * w)) a = 0.5 * (lo.a + hi.a);
      if (a == lo.a || a == hi.a) return false;
      Point cur = eval(a, evals);
      if (noise_level_accept(cur)) return true;
      if (!std::isfinite(cur.f) || cur.f > f0_ + o_.c1 * a * d0_ || cur.f >= lo.f) {
        hi = cur;
      } else {
        if (std::abs(cur.d) <= -o_.c2 * d0_) return true;
        if (cur.d * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    return false;
  }

  const Objective& f_;
  std::span<const double> x_;
  std::span<const double> dir_;
  double f0_, d0_;
  const LbfgsOptions& o_;
  std::vector<double> trial_;
  std::vector<double> grad_;
  double value_ = 0.0;
  double step_ = 0.0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& opts,
                           const LbfgsHooks& hooks) {
  if (opts.history < 1 || opts.max_iters < 0 || opts.max_zoom < 1)
    throw std::invalid_argument("lbfgs_minimize: invalid options");
  auto log = [&](const std::string& msg) {
    if (hooks.log) hooks.log(msg);
  };

  LbfgsResult res;
  std::vector<double> x = std::move(x0);
  std::vector<double> g(x.size());
  double fx = f(x, g);
  res.evaluations = 1;
  if (!std::isfinite(fx)) throw NumericalError("lbfgs_minimize: non-finite loss at the initial point");
  res.loss_trace.push_back(fx);

  std::deque<CurvaturePair> hist;
  double last_step = 1.0;
  res.reason = "max_iters";
  for (int it = 1; it <= opts.max_iters; ++it) {
    const double gn = norm2(g);
    if (gn < opts.grad_tol) {
      res.reason = "gradient";
      break;
    }
    auto dir = two_loop(hist, g);
    for (double& v : dir) v = -v;
    double d0 = dot(g, dir);
    if (!(d0 < 0.0)) {
      log("lbfgs: not a descent direction, history reset");
      hist.clear();
      dir.assign(g.begin(), g.end());
      for (double& v : dir) v = -v;
      d0 = -gn * gn;
    }
    const double a_init = hist.empty() ? std::min(1.0, 1.0 / gn) : 1.0;

    LineSearch ls(f, x, dir, fx, d0, opts);
    std::vector<double> xn, gnew;
    double fn = 0.0;
    if (ls.run(a_init, res.evaluations)) {
      xn.assign(ls.trial().begin(), ls.trial().end());
      gnew.assign(ls.grad().begin(), ls.grad().end());
      fn = ls.value();
      last_step = ls.step();
    } else {
      // Plain gradient step with the last accepted step length, halved until it descends.
      ++res.fallbacks;
      log("lbfgs: line search failed at iteration " + std::to_string(it) + ", gradient step fallback");
      hist.clear();
      bool ok = false;
      double eta = last_step;
      xn.resize(x.size());
      gnew.resize(x.size());
      for (int h = 0; h < opts.max_zoom && !ok; ++h, eta *= 0.5) {
        for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] - eta * g[i];
        fn = f(xn, gnew);
        ++res.evaluations;
        ok = std::isfinite(fn) && fn < fx;
      }
      if (!ok) {
        res.reason = "stalled";
        break;
      }
    }

    CurvaturePair p{std::vector<double>(x.size()), std::vector<double>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i) {
      p.s[i] = xn[i] - x[i];
      p.y[i] = gnew[i] - g[i];
    }
    if (dot(p.s, p.y) > 1e-12 * norm2(p.s) * norm2(p.y)) {
      hist.push_back(std::move(p));
      if (static_cast<int>(hist.size()) > opts.history) hist.pop_front();
    } else {
      ++res.skipped_pairs;
    }
    x = std::move(xn);
    g = std::move(gnew);
    fx = fn;
    res.iterations = it;
    res.loss_trace.push_back(fx);
    if (hooks.on_iteration) hooks.on_iteration(it, fx, x);
  }
  if (res.reason == "max_iters" && norm2(g) < opts.grad_tol) res.reason = "gradient";
  res.params = std::move(x);
  return res;
}

}  // namespace kanlab::optim
