#include "kanlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace kanlab::models {

bool operator==(const KanLayer& a, const KanLayer& b) {
  return a.in == b.in && a.out == b.out && a.acts == b.acts;
}

namespace {

void validate_shape(const std::vector<int>& shape, const char* who) {
  if (shape.size() < 2) throw std::invalid_argument(std::string(who) + ": shape needs >= 2 entries");
  for (int n : shape)
    if (n < 1) throw std::invalid_argument(std::string(who) + ": layer widths must be >= 1");
}

}  // namespace

void validate(const KanNetwork& net) {
  validate_shape(net.shape, "KanNetwork");
  if (net.layers.size() + 1 != net.shape.size())
    throw std::invalid_argument("KanNetwork: layer count does not match shape");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.in != net.shape[l] || layer.out != net.shape[l + 1] ||
        layer.acts.size() != static_cast<std::size_t>(layer.in) * layer.out)
      throw std::invalid_argument("KanNetwork: layer " + std::to_string(l) + " has wrong size");
    for (const auto& act : layer.acts)
      if (act.coefficients.size() != static_cast<std::size_t>(act.grid.basis_count()))
        throw std::invalid_argument("KanNetwork: coefficient count does not match grid");
  }
}

void validate(const MlpNetwork& net) {
  validate_shape(net.shape, "MlpNetwork");
  if (net.power < 1) throw std::invalid_argument("MlpNetwork: power must be >= 1");
  if (net.layers.size() + 1 != net.shape.size())
    throw std::invalid_argument("MlpNetwork: layer count does not match shape");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.in != net.shape[l] || layer.out != net.shape[l + 1] ||
        layer.weight.size() != static_cast<std::size_t>(layer.in) * layer.out ||
        layer.bias.size() != static_cast<std::size_t>(layer.out))
      throw std::invalid_argument("MlpNetwork: layer " + std::to_string(l) + " has wrong size");
  }
}

std::size_t parameter_count(const KanNetwork& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers)
    for (const auto& act : layer.acts) n += act.coefficients.size() + 1;
  return n;
}

std::size_t parameter_count(const MlpNetwork& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<double> get_parameters(const KanNetwork& net) {
  std::vector<double> p;
  p.reserve(parameter_count(net));
  for (const auto& layer : net.layers)
    for (const auto& act : layer.acts) {
      p.insert(p.end(), act.coefficients.begin(), act.coefficients.end());
      p.push_back(act.w_b);
    }
  return p;
}

std::vector<double> get_parameters(const MlpNetwork& net) {
  std::vector<double> p;
  p.reserve(parameter_count(net));
  for (const auto& layer : net.layers) {
    p.insert(p.end(), layer.weight.begin(), layer.weight.end());
    p.insert(p.end(), layer.bias.begin(), layer.bias.end());
  }
  return p;
}

void set_parameters(KanNetwork& net, std::span<const double> p) {
  if (p.size() != parameter_count(net))
    throw std::invalid_argument("set_parameters: parameter count does not match the network");
  std::size_t off = 0;
  for (auto& layer : net.layers)
    for (auto& act : layer.acts) {
      std::copy_n(p.begin() + off, act.coefficients.size(), act.coefficients.begin());
      off += act.coefficients.size();
      act.w_b = p[off++];
    }
}

void set_parameters(MlpNetwork& net, std::span<const double> p) {
  if (p.size() != parameter_count(net))
    throw std::invalid_argument("set_parameters: parameter count does not match the network");
  std::size_t off = 0;
  for (auto& layer : net.layers) {
    std::copy_n(p.begin() + off, layer.weight.size(), layer.weight.begin());
    off += layer.weight.size();
    std::copy_n(p.begin() + off, layer.bias.size(), layer.bias.begin());
    off += layer.bias.size();
  }
}

bool all_base_weights_zero(const KanNetwork& net) {
  for (const auto& layer : net.layers)
    for (const auto& act : layer.acts)
      if (act.w_b != 0.0) return false;
  return true;
}

KanNetwork zero_kan(const std::vector<int>& shape, const splines::Grid& grid) {
  validate_shape(shape, "zero_kan");
  KanNetwork net{shape, {}};
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    KanLayer layer{shape[l], shape[l + 1], {}};
    layer.acts.assign(static_cast<std::size_t>(layer.in) * layer.out,
                      splines::SplineActivation::zero(grid));
    net.layers.push_back(std::move(layer));
  }
  return net;
}

KanNetwork init_kan(const std::vector<int>& shape, int intervals, int degree, std::uint64_t seed,
                    std::pair<double, double> range) {
  const splines::Grid grid(range.first, range.second, intervals, degree);
  KanNetwork net = zero_kan(shape, grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& layer : net.layers)
    for (auto& act : layer.acts) {
      for (double& c : act.coefficients) c = normal(rng);
      act.w_b = 1.0;
    }
  return net;
}

MlpNetwork init_mlp(const std::vector<int>& shape, int power, std::uint64_t seed, MlpInit scheme) {
  validate_shape(shape, "init_mlp");
  if (power < 1) throw std::invalid_argument("init_mlp: power must be >= 1");
  MlpNetwork net{shape, power, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    MlpLayer layer{shape[l], shape[l + 1], {}, {}};
    const double fan_in = shape[l];
    const double wb = scheme == MlpInit::He ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> uw(-wb, wb);
    std::uniform_real_distribution<double> ub(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    layer.weight.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.bias.resize(layer.out);
    for (double& w : layer.weight) w = uw(rng);
    for (double& b : layer.bias) b = ub(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

std::vector<double> kan_layer_forward(const KanLayer& layer, std::span<const double> x) {
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = splines::silu(x[i]);
  std::vector<double> y(layer.out, 0.0);
  for (int o = 0; o < layer.out; ++o)
    for (int i = 0; i < layer.in; ++i) {
      const auto& act = layer.at(o, i);
      y[o] += act.w_b * s[i] + splines::eval_spline(act.grid, act.coefficients, x[i]);
    }
  return y;
}

}  // namespace

std::vector<double> kan_forward(const KanNetwork& net, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(net.shape.front()))
    throw std::invalid_argument("kan_forward: input length does not match the network");
  std::vector<double> h(x.begin(), x.end());
  for (const auto& layer : net.layers) h = kan_layer_forward(layer, h);
  return h;
}

std::vector<double> mlp_forward(const MlpNetwork& net, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(net.shape.front()))
    throw std::invalid_argument("mlp_forward: input length does not match the network");
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    std::vector<double> z(layer.bias);
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.in; ++i) z[o] += layer.w(o, i) * h[i];
    if (l + 1 < net.layers.size())
      for (double& v : z) v = ad::relu_pow(v, net.power);
    h = std::move(z);
  }
  return h;
}

GridUpdateResult network_grid_update(const KanNetwork& net,
                                     const std::vector<std::vector<double>>& batch, double margin) {
  if (batch.empty()) throw std::invalid_argument("network_grid_update: empty batch");
  GridUpdateResult out{net, false, false};
  std::vector<std::vector<double>> h = batch;
  for (auto& layer : out.net.layers) {
    std::vector<double> column(h.size());
    for (int i = 0; i < layer.in; ++i) {
      for (std::size_t n = 0; n < h.size(); ++n) {
        if (h[n].size() != static_cast<std::size_t>(layer.in))
          throw std::invalid_argument("network_grid_update: batch row has wrong length");
        column[n] = h[n][i];
      }
      for (int o = 0; o < layer.out; ++o) {
        auto r = splines::update_grid_range(layer.at(o, i), column, margin);
        out.changed = out.changed || r.changed;
        out.degenerate_range = out.degenerate_range || r.degenerate_range;
        layer.at(o, i) = std::move(r.activation);
      }
    }
    for (auto& row : h) row = kan_layer_forward(layer, row);
  }
  return out;
}

KanNetwork init_kan_on_batch(const std::vector<int>& shape, int intervals, int degree, std::uint64_t seed,
                             const std::vector<std::vector<double>>& batch, double margin) {
  if (batch.empty()) throw std::invalid_argument("init_kan_on_batch: empty batch");
  if (!(margin >= 0.0)) throw std::invalid_argument("init_kan_on_batch: margin must be >= 0");
  KanNetwork net = init_kan(shape, intervals, degree, seed);
  std::vector<std::vector<double>> h = batch;
  for (auto& layer : net.layers) {
    for (int i = 0; i < layer.in; ++i) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& row : h) {
        if (row.size() != static_cast<std::size_t>(layer.in))
          throw std::invalid_argument("init_kan_on_batch: batch row has wrong length");
        lo = std::min(lo, row[i]);
        hi = std::max(hi, row[i]);
      }
      const double span = hi - lo;
      if (!(span > 0.0)) {
        lo -= 0.5;
        hi += 0.5;
      } else {
        lo -= margin * span;
        hi += margin * span;
      }
      for (int o = 0; o < layer.out; ++o) layer.at(o, i).grid = splines::Grid(lo, hi, intervals, degree);
    }
    for (auto& row : h) row = kan_layer_forward(layer, row);
  }
  return net;
}

KanNetwork network_grid_extend(const KanNetwork& net, int new_intervals) {
  KanNetwork out = net;
  for (auto& layer : out.layers)
    for (auto& act : layer.acts) act = splines::extend_grid(act, new_intervals);
  return out;
}

namespace {

double at_or_zero(const std::vector<double>& v, std::size_t n) { return v.empty() ? 0.0 : v[n]; }

void check_field_data(const FieldLossData& d, int in_dim, std::size_t out_dim) {
  if (d.dim != in_dim) throw std::invalid_argument("field_loss: point dimension does not match network");
  if (out_dim != 1) throw std::invalid_argument("field_loss: network must have a scalar output");
  const std::size_t n = d.count();
  if (d.points.size() != n * d.dim) throw std::invalid_argument("field_loss: ragged point array");
  for (const auto* v : {&d.target, &d.alpha, &d.beta, &d.gamma})
    if (!v->empty() && v->size() != n) throw std::invalid_argument("field_loss: per-point array size");
  if (!d.alpha.empty() && d.target.size() != n)
    throw std::invalid_argument("field_loss: alpha given without targets");
}

}  // namespace

double field_loss(const KanNetwork& net, std::span<const double> params, const FieldLossData& data,
                  std::span<double> grad) {
  check_field_data(data, net.shape.front(), net.shape.back());
  const std::size_t n_pts = data.count();
  const int dim = data.dim;
  const std::size_t np = parameter_count(net);
  if (!grad.empty() && grad.size() != np) throw std::invalid_argument("field_loss: gradient size");

  using ad::Dual;
  using ad::Var;

  if (grad.empty()) {
    double loss = 0.0;
    std::vector<ad::DualScalar> xd(dim);
    for (std::size_t n = 0; n < n_pts; ++n) {
      const std::span<const double> x(data.points.data() + n * dim, dim);
      const double g = at_or_zero(data.gamma, n);
      double u;
      if (g == 0.0) {
        u = kan_forward<double, double>(net, params, x)[0];
      } else {
        u = 0.0;
        for (int j = 0; j < dim; ++j) {
          for (int i = 0; i < dim; ++i) xd[i] = {x[i], i == j ? 1.0 : 0.0};
          const auto r = kan_forward<ad::DualScalar, double>(net, params, xd)[0];
          u = r.value;
          loss += g * r.deriv * r.deriv;
        }
      }
      const double a = at_or_zero(data.alpha, n);
      if (a != 0.0) loss += a * (u - data.target[n]) * (u - data.target[n]);
      loss += at_or_zero(data.beta, n) * u;
    }
    return loss;
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  constexpr std::size_t kChunk = 256;
  double loss = 0.0;
  ad::Tape tape;
  std::vector<Var> terms;
  std::vector<Dual<Var>> xd(dim);
  std::vector<Var> xv(dim);
  for (std::size_t start = 0; start < n_pts; start += kChunk) {
    const std::size_t stop = std::min(n_pts, start + kChunk);
    tape.clear();
    const auto p = tape.leaves(params);
    const std::span<const Var> ps(p);
    const Var zero = tape.leaf(0.0);
    const Var one = tape.leaf(1.0);
    terms.clear();
    for (std::size_t n = start; n < stop; ++n) {
      const double* x = data.points.data() + n * dim;
      const double g = at_or_zero(data.gamma, n);
      std::optional<Var> u;
      if (g == 0.0) {
        for (int i = 0; i < dim; ++i) xv[i] = tape.leaf(x[i]);
        u = kan_forward<Var, Var>(net, ps, xv)[0];
      } else {
        for (int i = 0; i < dim; ++i) xv[i] = tape.leaf(x[i]);
        for (int j = 0; j < dim; ++j) {
          for (int i = 0; i < dim; ++i) xd[i] = {xv[i], i == j ? one : zero};
          const auto r = kan_forward<Dual<Var>, Var>(net, ps, xd)[0];
          if (!u) u = r.value;
          terms.push_back(g * (r.deriv * r.deriv));
        }
      }
      const double a = at_or_zero(data.alpha, n);
      if (a != 0.0) {
        const Var e = *u - data.target[n];
        terms.push_back(a * (e * e));
      }
      const double b = at_or_zero(data.beta, n);
      if (b != 0.0) terms.push_back(b * *u);
    }
    if (terms.empty()) continue;
    const Var root = ad::sum(terms);
    loss += root.value();
    const auto adj = tape.backward(root);
    for (std::size_t i = 0; i < np; ++i) grad[i] += adj[p[i].index];
  }
  return loss;
}

}  // namespace kanlab::models
