#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace kanlab::optim {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n, double lr);

/// One bias-corrected Adam update in place. A non-finite gradient entry throws
/// NonFiniteGradientError before anything is modified.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Loss and gradient at x; the gradient is written into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
};

/// H g for the limited-memory inverse Hessian built from `history` (oldest
/// first) with H0 = (s^T y / y^T y) I from the newest pair, or I when empty.
std::vector<double> two_loop(const std::deque<CurvaturePair>& history, std::span<const double> g);

struct LbfgsOptions {
  int history = 10;
  int max_iters = 100;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_zoom = 40;
  double grad_tol = 1e-10;
};

struct LbfgsResult {
  std::vector<double> params;
  /// Loss before the first iteration, then after each iteration. Non-increasing
  /// up to 1e-14 (1 + |f|) once steps reach the round-off level of f.
  std::vector<double> loss_trace;
  int iterations = 0;
  int evaluations = 0;
  int fallbacks = 0;
  int skipped_pairs = 0;
  /// "gradient", "max_iters" or "stalled"
  std::string reason;
};

struct LbfgsHooks {
  /// After each iteration: iteration (1-based), loss, params.
  std::function<void(int, double, std::span<const double>)> on_iteration;
  std::function<void(const std::string&)> log;
};

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& opts = {},
                           const LbfgsHooks& hooks = {});

}  // namespace kanlab::optim
