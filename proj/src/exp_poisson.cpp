#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kanlab/experiments.hpp"
#include "kanlab/optim.hpp"

namespace kanlab::experiments {

using std::numbers::pi;

double Poisson1d::f(double x) const { return pi * pi * std::sin(pi * x) + pi * pi * k * std::sin(k * pi * x); }
double Poisson1d::u(double x) const { return std::sin(pi * x) + std::sin(k * pi * x) / k; }
double Poisson1d::ux(double x) const { return pi * std::cos(pi * x) + pi * std::cos(k * pi * x); }

Poisson1d poisson_problem_1d(double k) {
  if (!(k > 0.0)) throw std::invalid_argument("poisson_problem_1d: k must be positive");
  return {k};
}

double Poisson2d::f(double x, double y) const {
  return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y) + 2 * pi * pi * k * std::sin(k * pi * x) * std::sin(k * pi * y);
}
double Poisson2d::u(double x, double y) const {
  return std::sin(pi * x) * std::sin(pi * y) + std::sin(k * pi * x) * std::sin(k * pi * y) / k;
}
std::pair<double, double> Poisson2d::grad(double x, double y) const {
  return {pi * std::cos(pi * x) * std::sin(pi * y) + pi * std::cos(k * pi * x) * std::sin(k * pi * y),
          pi * std::sin(pi * x) * std::cos(pi * y) + pi * std::sin(k * pi * x) * std::cos(k * pi * y)};
}

Poisson2d poisson_problem_2d(double k) {
  if (!(k > 0.0)) throw std::invalid_argument("poisson_problem_2d: k must be positive");
  return {k};
}

RitzGrid ritz_grid(int dim, int n) {
  if (n < 2) throw std::invalid_argument("ritz_grid: need at least 2 points per direction");
  RitzGrid g;
  g.dim = dim;
  if (dim == 1) {
    const double h = 2.0 / (n - 1);
    for (int i = 0; i < n; ++i) {
      g.points.push_back(-1.0 + h * i);
      const bool end = i == 0 || i == n - 1;
      g.weights.push_back(end ? h / 2 : h);
      g.boundary.push_back(end);
    }
  } else if (dim == 2) {
    const double h = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        g.points.push_back(h * i);
        g.points.push_back(h * j);
        const bool ei = i == 0 || i == n - 1, ej = j == 0 || j == n - 1;
        g.weights.push_back(h * h * (ei ? 0.5 : 1.0) * (ej ? 0.5 : 1.0));
        g.boundary.push_back(ei || ej);
      }
  } else {
    throw std::invalid_argument("ritz_grid: dim must be 1 or 2");
  }
  return g;
}

models::FieldLossData ritz_data(const RitzGrid& grid, const std::function<double(std::span<const double>)>& f,
                                double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("ritz_data: lambda must be positive");
  models::FieldLossData d;
  d.dim = grid.dim;
  d.points = grid.points;
  const std::size_t n = grid.count();
  d.target.assign(n, 0.0);
  d.alpha.assign(n, 0.0);
  d.beta.resize(n);
  d.gamma.resize(n);
  std::size_t nb = 0;
  for (bool b : grid.boundary) nb += b;
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(grid.points.data() + i * grid.dim, grid.dim);
    d.beta[i] = -lambda * grid.weights[i] * f(x);
    d.gamma[i] = 0.5 * lambda * grid.weights[i];
    if (grid.boundary[i]) d.alpha[i] = grid.dim == 1 ? 1.0 : 1.0 / static_cast<double>(nb);
  }
  return d;
}

double field_loss_from_values(const models::FieldLossData& d, std::span<const double> u,
                              std::span<const double> grad_u) {
  const std::size_t n = d.count();
  if (u.size() != n || grad_u.size() != n * d.dim)
    throw std::invalid_argument("field_loss_from_values: size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!d.alpha.empty() && d.alpha[i] != 0.0) loss += d.alpha[i] * (u[i] - d.target[i]) * (u[i] - d.target[i]);
    if (!d.beta.empty()) loss += d.beta[i] * u[i];
    if (!d.gamma.empty() && d.gamma[i] != 0.0)
      for (int j = 0; j < d.dim; ++j) loss += d.gamma[i] * grad_u[i * d.dim + j] * grad_u[i * d.dim + j];
  }
  return loss;
}

void field_values(const models::KanNetwork& net, std::span<const double> points, int dim, std::vector<double>& u,
                  std::vector<double>& grad) {
  const auto params = models::get_parameters(net);
  const std::size_t n = points.size() / dim;
  u.assign(n, 0.0);
  grad.assign(n * dim, 0.0);
  std::vector<ad::DualScalar> xd(dim);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) {
      for (int c = 0; c < dim; ++c) xd[c] = {points[i * dim + c], c == j ? 1.0 : 0.0};
      const auto r = models::kan_forward<ad::DualScalar, double>(net, params, xd)[0];
      u[i] = r.value;
      grad[i * dim + j] = r.deriv;
    }
}

void field_values(const models::MlpNetwork& net, std::span<const double> points, int, std::vector<double>& u,
                  std::vector<double>& grad) {
  u = models::mlp_batch_values(net, points, &grad);
}

RelativeErrors relative_errors(std::span<const double> u, std::span<const double> grad_u,
                               std::span<const double> u_true, std::span<const double> grad_true,
                               std::span<const double> weights, int dim) {
  const std::size_t n = weights.size();
  if (u.size() != n || u_true.size() != n || grad_u.size() != n * dim || grad_true.size() != n * dim)
    throw std::invalid_argument("relative_errors: size mismatch");
  double e0 = 0, e1 = 0, n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    e0 += weights[i] * (u[i] - u_true[i]) * (u[i] - u_true[i]);
    n0 += weights[i] * u_true[i] * u_true[i];
    for (int j = 0; j < dim; ++j) {
      const double dg = grad_u[i * dim + j] - grad_true[i * dim + j];
      e1 += weights[i] * dg * dg;
      n1 += weights[i] * grad_true[i * dim + j] * grad_true[i * dim + j];
    }
  }
  if (!(n0 > 0.0)) throw std::invalid_argument("relative_errors: reference has zero norm");
  return {std::sqrt(e0 / n0), std::sqrt((e0 + e1) / (n0 + n1))};
}

PoissonConfig poisson_preset(int dim, const std::string& net, bool full) {
  (void)full;  // the desk presets already match the published schedules
  PoissonConfig c;
  c.dim = dim;
  c.net = net;
  if (dim == 1) {
    c.points = 2000;
    if (net == "kan") {
      c.shape = {1, 10, 1};
      c.grids = {20, 40};
      c.iterations = 100;
    } else if (net == "mlp") {
      c.shape = {1, 256, 256, 256, 256, 256, 1};
      c.iterations = 200;
    } else {
      throw std::invalid_argument("poisson_preset: net must be kan or mlp");
    }
  } else if (dim == 2) {
    c.points = 101;
    c.iterations = 50;
    if (net == "kan") {
      c.shape = {2, 10, 1};
      c.grids = {20};
    } else if (net == "mlp") {
      c.shape = {2, 256, 256, 256, 256, 256, 1};
    } else {
      throw std::invalid_argument("poisson_preset: net must be kan or mlp");
    }
  } else {
    throw std::invalid_argument("poisson_preset: dim must be 1 or 2");
  }
  return c;
}

namespace {

struct Truth {
  std::vector<double> u;
  std::vector<double> grad;
};

Truth exact(const RitzGrid& g, double k) {
  Truth t;
  const std::size_t n = g.count();
  for (std::size_t i = 0; i < n; ++i) {
    if (g.dim == 1) {
      const auto p = poisson_problem_1d(k);
      t.u.push_back(p.u(g.points[i]));
      t.grad.push_back(p.ux(g.points[i]));
    } else {
      const auto p = poisson_problem_2d(k);
      const double x = g.points[2 * i], y = g.points[2 * i + 1];
      t.u.push_back(p.u(x, y));
      const auto [gx, gy] = p.grad(x, y);
      t.grad.push_back(gx);
      t.grad.push_back(gy);
    }
  }
  return t;
}

template <class Net>
void train(Net& net, double k, const RitzGrid& grid, const models::FieldLossData& data, const Truth& truth,
           int iterations, int& it, std::vector<PoissonRow>& rows, const Progress& progress) {
  std::vector<double> u, gu;
  auto record = [&](double loss) {
    field_values(net, grid.points, grid.dim, u, gu);
    const auto e = relative_errors(u, gu, truth.u, truth.grad, grid.weights, grid.dim);
    rows.push_back({k, it, loss, e.l2, e.h1});
    return e;
  };
  record(models::field_loss(net, models::get_parameters(net), data, {}));
  auto objective = [&](std::span<const double> p, std::span<double> g) { return models::field_loss(net, p, data, g); };
  optim::LbfgsHooks hooks;
  hooks.on_iteration = [&](int, double loss, std::span<const double> p) {
    ++it;
    models::set_parameters(net, p);
    const auto e = record(loss);
    if (progress && it % 10 == 0)
      progress("experiment=poisson k=" + format_double(k) + " iteration=" + std::to_string(it) +
               " loss=" + format_double(loss) + " rel_l2=" + format_double(e.l2));
  };
  hooks.log = [&](const std::string& m) {
    if (progress) progress("experiment=poisson k=" + format_double(k) + " event=\"" + m + "\"");
  };
  optim::LbfgsOptions opts;
  opts.max_iters = iterations;
  const auto res = optim::lbfgs_minimize(objective, models::get_parameters(net), opts, hooks);
  models::set_parameters(net, res.params);
}

}  // namespace

PoissonResult run_poisson(const PoissonConfig& cfg, int jobs, const Progress& progress) {
  if (cfg.dim != 1 && cfg.dim != 2) throw std::invalid_argument("run_poisson: dim must be 1 or 2");
  if (cfg.shape.size() < 2 || cfg.shape.front() != cfg.dim || cfg.shape.back() != 1)
    throw std::invalid_argument("run_poisson: shape must map dim -> 1");
  if (cfg.iterations < 0) throw std::invalid_argument("run_poisson: iterations must be >= 0");
  if (cfg.net != "kan" && cfg.net != "mlp") throw std::invalid_argument("run_poisson: net must be kan or mlp");
  if (cfg.net == "kan" && cfg.grids.empty()) throw std::invalid_argument("run_poisson: empty grid schedule");
  const auto grid = ritz_grid(cfg.dim, cfg.points);
  std::vector<std::vector<PoissonRow>> per_k(cfg.ks.size());

  parallel_for(static_cast<int>(cfg.ks.size()), jobs, [&](int idx) {
    const double k = cfg.ks[idx];
    std::function<double(std::span<const double>)> f;
    if (cfg.dim == 1) {
      const auto p = poisson_problem_1d(k);
      f = [p](std::span<const double> x) { return p.f(x[0]); };
    } else {
      const auto p = poisson_problem_2d(k);
      f = [p](std::span<const double> x) { return p.f(x[0], x[1]); };
    }
    const auto data = ritz_data(grid, f, cfg.lambda);
    const auto truth = exact(grid, k);
    const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(idx));
    auto& rows = per_k[idx];
    int it = 0;
    if (cfg.net == "kan") {
      std::vector<std::vector<double>> batch;
      for (std::size_t i = 0; i < grid.count(); ++i)
        batch.emplace_back(grid.points.begin() + i * cfg.dim, grid.points.begin() + (i + 1) * cfg.dim);
      auto net = models::init_kan_on_batch(cfg.shape, cfg.grids[0], cfg.degree, seed, batch);
      for (std::size_t ph = 0; ph < cfg.grids.size(); ++ph) {
        if (ph > 0) {
          net = models::network_grid_update(net, batch, 0.0).net;
          net = models::network_grid_extend(net, cfg.grids[ph]);
        }
        train(net, k, grid, data, truth, cfg.iterations, it, rows, progress);
      }
    } else {
      auto net = models::init_mlp(cfg.shape, cfg.power, seed);
      train(net, k, grid, data, truth, cfg.iterations, it, rows, progress);
    }
  });

  PoissonResult res;
  for (auto& rows : per_k) {
    res.final_errors.push_back({rows.back().rel_l2, rows.back().rel_h1});
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  }
  return res;
}

std::string poisson_csv(const PoissonResult& r) {
  Csv csv({"k", "iteration", "loss", "rel_l2", "rel_h1"});
  for (const auto& row : r.rows)
    csv.row({format_double(row.k), std::to_string(row.iteration), format_double(row.loss), format_double(row.rel_l2),
             format_double(row.rel_h1)});
  return csv.str();
}

}  // namespace kanlab::experiments
