#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kanlab/experiments.hpp"
#include "kanlab/numerics.hpp"
#include "kanlab/optim.hpp"

namespace kanlab::experiments {

int truncation_index(std::span<const double> desc, double cutoff) {
  if (desc.empty() || !(desc[0] > 0.0)) throw std::invalid_argument("truncation_index: need a positive leading eigenvalue");
  const double bar = cutoff * desc[0];
  int m = 0;
  while (m < static_cast<int>(desc.size()) && desc[m] >= bar) ++m;
  return m;
}

namespace {

void check_spec(const GrfSpec& s) {
  if (s.dim < 1) throw std::invalid_argument("grf: dim must be positive");
  if (s.points < 50) throw std::invalid_argument("grf: need at least 50 points");
  if (!(s.sigma > 0.0)) throw std::invalid_argument("grf: sigma must be positive");
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) throw std::invalid_argument("grf: train_fraction in (0, 1)");
  if (!(s.cutoff > 0.0 && s.cutoff <= 1.0)) throw std::invalid_argument("grf: cutoff in (0, 1]");
}

}  // namespace

GrfBasis grf_basis(const GrfSpec& spec) {
  check_spec(spec);
  const int N = spec.points, d = spec.dim;
  GrfBasis b;
  std::mt19937_64 rng(derive_seed(spec.seed, 0));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  b.points.resize(static_cast<std::size_t>(N) * d);
  for (double& x : b.points) x = u(rng);

  numerics::DenseMatrix K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) {
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double t = b.points[i * d + c] - b.points[j * d + c];
        r2 += t * t;
      }
      K(i, j) = K(j, i) = std::exp(-r2 / (2.0 * spec.sigma * spec.sigma));
    }
  const auto eig = numerics::sym_eig(K);
  b.eigenvalues.assign(eig.values.rbegin(), eig.values.rend());
  b.m = truncation_index(b.eigenvalues, spec.cutoff);
  for (int i = 0; i < b.m; ++i) {
    const std::size_t col = static_cast<std::size_t>(N - 1 - i);
    std::vector<double> phi(N);
    for (int n = 0; n < N; ++n) phi[n] = eig.vectors(n, col);
    b.modes.push_back(std::move(phi));
  }
  return b;
}

std::vector<double> grf_draw(const GrfBasis& b, std::span<const double> xi) {
  if (xi.size() != static_cast<std::size_t>(b.m)) throw std::invalid_argument("grf_draw: need one xi per mode");
  const std::size_t N = b.modes.empty() ? b.points.size() : b.modes[0].size();
  std::vector<double> f(N, 0.0);
  for (int i = 0; i < b.m; ++i)
    for (std::size_t n = 0; n < N; ++n) f[n] += b.eigenvalues[i] * xi[i] * b.modes[i][n];
  return f;
}

GrfData sample_grf(const GrfSpec& spec, std::span<const double> xi_override) {
  auto basis = grf_basis(spec);
  GrfData d;
  d.dim = spec.dim;
  d.eigenvalues = basis.eigenvalues;
  d.modes = basis.m;
  if (!xi_override.empty()) {
    if (xi_override.size() != static_cast<std::size_t>(basis.m))
      throw std::invalid_argument("sample_grf: xi_override must have one entry per mode");
    d.xi.assign(xi_override.begin(), xi_override.end());
  } else {
    std::mt19937_64 rng(derive_seed(spec.seed, 1));
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < basis.m; ++i) d.xi.push_back(g(rng));
  }
  d.values = grf_draw(basis, d.xi);
  d.points = std::move(basis.points);

  std::vector<int> perm(spec.points);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(spec.seed, 2));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto ntrain = static_cast<std::size_t>(std::lround(spec.train_fraction * spec.points));
  d.train.assign(perm.begin(), perm.begin() + ntrain);
  d.test.assign(perm.begin() + ntrain, perm.end());
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.test.begin(), d.test.end());
  return d;
}

GrfConfig grf_preset(const std::string& net, bool full) {
  GrfConfig c;
  c.net = net;
  if (full) c.spec.points = 5000;
  if (net == "kan") {
    c.shape = {2, 10, 1};
    c.grids = {10, 20, 30, 40, 50};
    c.iterations = 100;
  } else if (net == "mlp") {
    c.shape = {2, 256, 256, 256, 1};
    c.iterations = 500;
  } else {
    throw std::invalid_argument("grf_preset: net must be kan or mlp");
  }
  return c;
}

namespace {

models::FieldLossData mse_data(const GrfData& d, const std::vector<int>& idx) {
  models::FieldLossData f;
  f.dim = d.dim;
  for (int n : idx) {
    for (int c = 0; c < d.dim; ++c) f.points.push_back(d.points[static_cast<std::size_t>(n) * d.dim + c]);
    f.target.push_back(d.values[n]);
  }
  f.alpha.assign(idx.size(), 1.0 / static_cast<double>(idx.size()));
  return f;
}

std::vector<std::vector<double>> rows_of(const models::FieldLossData& f) {
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n < f.count(); ++n)
    rows.emplace_back(f.points.begin() + n * f.dim, f.points.begin() + (n + 1) * f.dim);
  return rows;
}

bool same_ranges(const models::KanNetwork& a, const models::KanNetwork& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    for (std::size_t i = 0; i < a.layers[l].acts.size(); ++i) {
      const auto& ga = a.layers[l].acts[i].grid;
      const auto& gb = b.layers[l].acts[i].grid;
      if (ga.a() != gb.a() || ga.b() != gb.b()) return false;
    }
  return true;
}

// Every activation input of every batch row lies in its grid's [a, b].
bool inputs_inside(const models::KanNetwork& net, const std::vector<std::vector<double>>& batch) {
  for (auto h : batch)
    for (const auto& layer : net.layers) {
      for (int o = 0; o < layer.out; ++o)
        for (int i = 0; i < layer.in; ++i) {
          const auto& g = layer.at(o, i).grid;
          if (h[i] < g.a() || h[i] > g.b()) return false;
        }
      const models::KanNetwork one{{layer.in, layer.out}, {layer}};
      h = models::kan_forward(one, h);
    }
  return true;
}

// LBFGS on the training MSE; appends one row per iteration.
template <class Net>
std::vector<double> train_phase(Net& net, const models::FieldLossData& train, const models::FieldLossData& test,
                                int iterations, int phase_grid, int& global_iter, std::vector<GrfRow>& rows,
                                const Progress& progress) {
  auto objective = [&](std::span<const double> p, std::span<double> g) { return models::field_loss(net, p, train, g); };
  optim::LbfgsHooks hooks;
  hooks.on_iteration = [&](int, double loss, std::span<const double> p) {
    ++global_iter;
    const double t = models::field_loss(net, p, test, {});
    rows.push_back({phase_grid, global_iter, loss, t});
    if (progress && global_iter % 10 == 0)
      progress("experiment=grf grid=" + std::to_string(phase_grid) + " iteration=" + std::to_string(global_iter) +
               " train=" + format_double(loss) + " test=" + format_double(t));
  };
  hooks.log = [&](const std::string& m) {
    if (progress) progress("experiment=grf event=\"" + m + "\"");
  };
  optim::LbfgsOptions opts;
  opts.max_iters = iterations;
  auto res = optim::lbfgs_minimize(objective, models::get_parameters(net), opts, hooks);
  models::set_parameters(net, res.params);
  return res.params;
}

}  // namespace

GrfResult run_grf_experiment(const GrfConfig& cfg, const Progress& progress) {
  if (cfg.iterations < 0) throw std::invalid_argument("run_grf_experiment: iterations must be >= 0");
  if (cfg.shape.size() < 2 || cfg.shape.front() != cfg.spec.dim || cfg.shape.back() != 1)
    throw std::invalid_argument("run_grf_experiment: shape must map dim -> 1");
  GrfResult res;
  res.data = sample_grf(cfg.spec);
  if (progress)
    progress("experiment=grf event=sampled points=" + std::to_string(cfg.spec.points) +
             " modes=" + std::to_string(res.data.modes));
  const auto train = mse_data(res.data, res.data.train);
  const auto test = mse_data(res.data, res.data.test);
  int it = 0;

  if (cfg.net == "kan") {
    if (cfg.grids.empty()) throw std::invalid_argument("run_grf_experiment: empty grid schedule");
    const auto batch = rows_of(train);
    auto net = models::init_kan_on_batch(cfg.shape, cfg.grids[0], cfg.degree, cfg.seed, batch, cfg.margin);
    for (std::size_t ph = 0; ph < cfg.grids.size(); ++ph) {
      const int G = cfg.grids[ph];
      if (ph > 0) {
        const double loss_before = models::field_loss(net, models::get_parameters(net), train, {});
        // Refinement on fixed ranges: the coarse spline lies in the fine space
        // exactly when the new grid subdivides the old one, and the two agree
        // only on [a, b].
        auto extended = models::network_grid_extend(net, G);
        const bool nested =
            same_ranges(net, extended) && G % cfg.grids[ph - 1] == 0 && inputs_inside(net, batch);
        net = std::move(extended);
        const double loss_after = models::field_loss(net, models::get_parameters(net), train, {});
        res.boundaries.push_back({cfg.grids[ph - 1], G, loss_before, loss_after, nested});
        if (progress)
          progress("experiment=grf event=extend from=" + std::to_string(cfg.grids[ph - 1]) + " to=" +
                   std::to_string(G) + " jump=" + format_double(loss_after - loss_before) +
                   " nested=" + (nested ? "1" : "0"));
      }
      const auto p = models::get_parameters(net);
      res.rows.push_back({G, it, models::field_loss(net, p, train, {}), models::field_loss(net, p, test, {})});
      // Ranges follow the hidden inputs early in the phase and stay fixed for
      // the rest, so the next refinement starts from inputs inside its grids.
      int done = 0;
      while (done < cfg.iterations) {
        const bool updating = cfg.update_every > 0 && done < cfg.update_until;
        const int chunk = updating ? std::min(cfg.update_every, cfg.update_until - done) : cfg.iterations - done;
        if (updating && done > 0) net = models::network_grid_update(net, batch, cfg.margin).net;
        train_phase(net, train, test, std::min(chunk, cfg.iterations - done), G, it, res.rows, progress);
        done += chunk;
      }
    }
  } else if (cfg.net == "mlp") {
    auto net = models::init_mlp(cfg.shape, cfg.power, cfg.seed);
    const auto p = models::get_parameters(net);
    res.rows.push_back({0, 0, models::field_loss(net, p, train, {}), models::field_loss(net, p, test, {})});
    train_phase(net, train, test, cfg.iterations, 0, it, res.rows, progress);
  } else {
    throw std::invalid_argument("run_grf_experiment: net must be kan or mlp");
  }
  res.final_train = res.rows.back().train_loss;
  res.final_test = res.rows.back().test_loss;
  return res;
}

std::string grf_csv(const GrfResult& r) {
  Csv csv({"phase_grid", "iteration", "train_loss", "test_loss"});
  for (const auto& row : r.rows)
    csv.row({std::to_string(row.phase_grid), std::to_string(row.iteration), format_double(row.train_loss),
             format_double(row.test_loss)});
  return csv.str();
}

}  // namespace kanlab::experiments
