#include "kanlab/convert.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "kanlab/errors.hpp"
#include "kanlab/numerics.hpp"

namespace kanlab::convert {

namespace {

double radius(double lo, double hi) {
  const double r = kBoundSafety * std::max(std::abs(lo), std::abs(hi));
  return r > 0.0 ? r : 1.0;
}

}  // namespace

DomainBound propagate_bounds(const models::MlpNetwork& mlp, const Box& box,
                             std::uint64_t certificate_seed, int certificate_samples) {
  models::validate(mlp);
  if (box.size() != static_cast<std::size_t>(mlp.shape.front()))
    throw std::invalid_argument("propagate_bounds: box dimension does not match the network");
  for (const auto& [lo, hi] : box)
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw std::invalid_argument("propagate_bounds: input box must be finite with lo <= hi");

  DomainBound out;
  std::vector<std::pair<double, double>> cur(box);
  const std::size_t L = mlp.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = mlp.layers[l];
    std::vector<double> rin;
    for (const auto& [lo, hi] : cur) rin.push_back(radius(lo, hi));
    out.inputs.push_back(std::move(rin));

    std::vector<std::pair<double, double>> z(layer.out);
    std::vector<double> rz(layer.out);
    for (int o = 0; o < layer.out; ++o) {
      double lo = layer.bias[o], hi = layer.bias[o];
      for (int i = 0; i < layer.in; ++i) {
        const double w = layer.w(o, i);
        lo += std::min(w * cur[i].first, w * cur[i].second);
        hi += std::max(w * cur[i].first, w * cur[i].second);
      }
      z[o] = {lo, hi};
      rz[o] = radius(lo, hi);
    }
    out.preacts.push_back(std::move(rz));
    // sigma_k is monotone non-decreasing.
    cur.resize(layer.out);
    for (int o = 0; o < layer.out; ++o)
      cur[o] = {ad::relu_pow(z[o].first, mlp.power), ad::relu_pow(z[o].second, mlp.power)};
  }

  std::mt19937_64 rng(certificate_seed);
  std::vector<double> h;
  for (int s = 0; s < certificate_samples; ++s) {
    h.resize(box.size());
    for (std::size_t i = 0; i < box.size(); ++i)
      h[i] = std::uniform_real_distribution<double>(box[i].first, box[i].second)(rng);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = mlp.layers[l];
      for (int i = 0; i < layer.in; ++i)
        if (std::abs(h[i]) > out.inputs[l][i])
          throw BoundFailureError("propagate_bounds: sample escapes input bound at layer " + std::to_string(l));
      std::vector<double> z(layer.bias);
      for (int o = 0; o < layer.out; ++o) {
        for (int i = 0; i < layer.in; ++i) z[o] += layer.w(o, i) * h[i];
        if (std::abs(z[o]) > out.preacts[l][o])
          throw BoundFailureError("propagate_bounds: sample escapes pre-activation bound at layer " +
                                  std::to_string(l));
      }
      for (double& v : z) v = ad::relu_pow(v, mlp.power);
      h = std::move(z);
    }
  }
  return out;
}

namespace {

// Chebyshev points of the first kind on [lo, hi].
std::vector<double> chebyshev(double lo, double hi, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i)
    x[i] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * std::cos(std::numbers::pi * (2.0 * i + 1.0) / (2.0 * n));
  return x;
}

// Coefficients of the spline on `grid` that equals f on [a, b], from k+1
// Chebyshev points per knot interval. Exact because f lies in the span.
std::vector<double> collocate(const splines::Grid& grid, const std::function<double(double)>& f) {
  std::vector<double> xs;
  for (int m = 0; m < grid.intervals(); ++m) {
    const auto p = chebyshev(grid.knot(m), grid.knot(m + 1), grid.degree() + 1);
    xs.insert(xs.end(), p.begin(), p.end());
  }
  numerics::DenseMatrix a(xs.size(), grid.basis_count());
  std::vector<double> ys(xs.size());
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const auto w = splines::basis_window(grid, xs[r], 0);
    for (int i = 0; i < w.count; ++i) a(r, w.first + i) = w.values[i];
    ys[r] = f(xs[r]);
  }
  try {
    return numerics::solve_least_squares(a, ys);
  } catch (const RankDeficientError& e) {
    throw ConstructionError(std::string("mlp_to_kan: collocation system is singular: ") + e.what());
  }
}

}  // namespace

models::KanNetwork mlp_to_kan(const models::MlpNetwork& mlp, const DomainBound& bounds) {
  models::validate(mlp);
  const std::size_t L = mlp.layers.size();
  if (bounds.inputs.size() != L || bounds.preacts.size() != L)
    throw std::invalid_argument("mlp_to_kan: bounds do not match the network depth");
  const int k = mlp.power;

  models::KanNetwork kan;
  kan.shape.push_back(mlp.shape.front());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = mlp.layers[l];
    if (bounds.inputs[l].size() != static_cast<std::size_t>(layer.in) ||
        bounds.preacts[l].size() != static_cast<std::size_t>(layer.out))
      throw std::invalid_argument("mlp_to_kan: bounds do not match layer widths");

    // Linear sublayer: phi_{o,i}(x) = W_oi x + b_o / n_in.
    models::KanLayer lin{layer.in, layer.out, {}};
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.in; ++i) {
        const double r = bounds.inputs[l][i];
        const splines::Grid g(-r, r, 1, k);
        const double w = layer.w(o, i), c = layer.bias[o] / layer.in;
        lin.acts.push_back({g, collocate(g, [w, c](double x) { return w * x + c; }), 0.0});
      }
    kan.layers.push_back(std::move(lin));
    kan.shape.push_back(layer.out);
    if (l + 1 == L) break;

    // Activation sublayer: sigma_k on the diagonal, zero elsewhere.
    models::KanLayer act{layer.out, layer.out, {}};
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.out; ++i) {
        const double r = bounds.preacts[l][i];
        const splines::Grid g(-r, r, 2, k);
        if (o == i)
          act.acts.push_back({g, collocate(g, [k](double x) { return ad::relu_pow(x, k); }), 0.0});
        else
          act.acts.push_back(splines::SplineActivation::zero(g));
      }
    kan.layers.push_back(std::move(act));
    kan.shape.push_back(layer.out);
  }
  models::validate(kan);
  return kan;
}

std::vector<TruncatedPower> spline_to_truncated_powers(const splines::SplineActivation& act) {
  if (act.w_b != 0.0)
    throw NotConvertibleError("spline_to_truncated_powers: w_b != 0; SiLU is not a ReLU^k combination");
  const auto& g = act.grid;
  const int k = g.degree();
  const double h = g.spacing();

  // B_i = (1 / (k! h^k)) sum_{m=0}^{k+1} (-1)^m C(k+1, m) (x - t_{i-k+m})_+^k.
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  const double scale = 1.0 / (fact * std::pow(h, k));
  std::vector<double> binom(k + 2, 1.0);
  for (int m = 1; m <= k + 1; ++m) binom[m] = binom[m - 1] * (k + 2 - m) / m;

  std::vector<double> a(g.intervals() + 2 * k + 1, 0.0);  // index j + k for knot t_j
  for (int i = 0; i < g.basis_count(); ++i) {
    const double c = act.coefficients[i];
    if (c == 0.0) continue;
    for (int m = 0; m <= k + 1; ++m) a[i + m] += c * ((m % 2) ? -1.0 : 1.0) * binom[m] * scale;
  }
  std::vector<TruncatedPower> out;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (a[j] != 0.0) out.push_back({g.knot(static_cast<int>(j) - k), a[j]});
  return out;
}

std::vector<models::MlpNetwork> kan_to_mlp_blocks(const models::KanNetwork& kan) {
  models::validate(kan);
  if (!models::all_base_weights_zero(kan))
    throw NotConvertibleError("kan_to_mlp: every activation needs w_b = 0");
  const int k = kan.layers.front().acts.front().grid.degree();
  for (const auto& layer : kan.layers)
    for (const auto& act : layer.acts)
      if (act.grid.degree() != k) throw NotConvertibleError("kan_to_mlp: mixed spline degrees");

  std::vector<models::MlpNetwork> blocks;
  for (const auto& layer : kan.layers) {
    struct Unit {
      int in, out;
      double knot, coef;
    };
    std::vector<Unit> units;
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.in; ++i)
        for (const auto& t : spline_to_truncated_powers(layer.at(o, i))) units.push_back({i, o, t.knot, t.coef});

    // A layer of zero activations still needs one (idle) hidden unit.
    const int hidden = std::max<int>(1, static_cast<int>(units.size()));
    models::MlpLayer first{layer.in, hidden, std::vector<double>(static_cast<std::size_t>(hidden) * layer.in, 0.0),
                           std::vector<double>(hidden, 0.0)};
    models::MlpLayer second{hidden, layer.out, std::vector<double>(static_cast<std::size_t>(layer.out) * hidden, 0.0),
                            std::vector<double>(layer.out, 0.0)};
    for (std::size_t u = 0; u < units.size(); ++u) {
      first.weight[u * layer.in + units[u].in] = 1.0;
      first.bias[u] = -units[u].knot;
      second.weight[static_cast<std::size_t>(units[u].out) * hidden + u] = units[u].coef;
    }
    blocks.push_back({{layer.in, hidden, layer.out}, k, {std::move(first), std::move(second)}});
  }
  return blocks;
}

models::MlpNetwork merge_blocks(const std::vector<models::MlpNetwork>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("merge_blocks: no blocks");
  models::MlpNetwork out;
  out.power = blocks.front().power;
  out.shape.push_back(blocks.front().shape.front());
  out.layers.push_back(blocks.front().layers.front());
  out.shape.push_back(blocks.front().shape[1]);
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    const auto& prev = blocks[b - 1].layers.back();  // hidden_{b-1} -> n_b
    const auto& next = blocks[b].layers.front();     // n_b -> hidden_b
    if (prev.out != next.in || blocks[b].power != out.power)
      throw std::invalid_argument("merge_blocks: blocks do not chain");
    models::MlpLayer m{prev.in, next.out, std::vector<double>(static_cast<std::size_t>(next.out) * prev.in, 0.0),
                       next.bias};
    for (int o = 0; o < next.out; ++o)
      for (int j = 0; j < next.in; ++j) {
        const double w = next.w(o, j);
        if (w == 0.0) continue;
        for (int i = 0; i < prev.in; ++i) m.weight[static_cast<std::size_t>(o) * prev.in + i] += w * prev.w(j, i);
        m.bias[o] += w * prev.bias[j];
      }
    out.layers.push_back(std::move(m));
    out.shape.push_back(next.out);
  }
  out.layers.push_back(blocks.back().layers.back());
  out.shape.push_back(blocks.back().shape.back());
  models::validate(out);
  return out;
}

models::MlpNetwork kan_to_mlp(const models::KanNetwork& kan) { return merge_blocks(kan_to_mlp_blocks(kan)); }

EquivalenceReport verify_equivalence(const VectorFn& f, const VectorFn& g, const Box& domain,
                                     int n_points, std::uint64_t seed) {
  if (n_points < 1) throw std::invalid_argument("verify_equivalence: need at least one point");
  for (const auto& [lo, hi] : domain)
    if (!(lo <= hi)) throw std::invalid_argument("verify_equivalence: empty domain interval");
  std::mt19937_64 rng(seed);
  EquivalenceReport rep;
  std::vector<double> x(domain.size());
  for (int n = 0; n < n_points; ++n) {
    for (std::size_t i = 0; i < domain.size(); ++i)
      x[i] = std::uniform_real_distribution<double>(domain[i].first, domain[i].second)(rng);
    const auto fa = f(x), ga = g(x);
    if (fa.size() != ga.size()) throw std::invalid_argument("verify_equivalence: output sizes differ");
    for (std::size_t o = 0; o < fa.size(); ++o) {
      const double d = std::abs(fa[o] - ga[o]);
      const double rel = d / (1.0 + std::abs(fa[o]));
      if (!(d <= rep.max_abs)) rep.max_abs = d;
      if (!(rel <= rep.max_rel) || rep.argmax.empty()) {
        if (!(rel <= rep.max_rel)) rep.max_rel = rel;
        if (rep.argmax.empty() || rel == rep.max_rel) rep.argmax = x;
      }
    }
    ++rep.points;
  }
  return rep;
}

}  // namespace kanlab::convert
