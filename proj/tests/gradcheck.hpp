#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "kanlab/autodiff.hpp"
#include "kanlab/models.hpp"
#include "support.hpp"

namespace testsupport {

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Relative error in the max norm between an analytic gradient and central
// differences of f.
inline double fd_gradient_error(const std::function<double(std::span<const double>)>& f,
                                const std::vector<double>& p, const std::vector<double>& g) {
  std::vector<double> diff(p.size());
  std::vector<double> fd(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(p[i]));
    fd[i] = central_diff(f, p, i, h);
    diff[i] = fd[i] - g[i];
  }
  return inf_norm(diff) / std::max(inf_norm(fd), 1e-8);
}

inline kanlab::models::FieldLossData random_mse_data(Rng& rng, int dim, int n) {
  kanlab::models::FieldLossData d;
  d.dim = dim;
  d.points = uniform_vec(rng, static_cast<std::size_t>(n) * dim, -0.95, 0.95);
  d.target = uniform_vec(rng, n, -1.0, 1.0);
  d.alpha.assign(n, 1.0 / n);
  return d;
}

inline std::vector<int> random_shape(Rng& rng, int in_dim) {
  const int depth = uniform_int(rng, 1, 3);
  std::vector<int> shape{in_dim};
  for (int l = 1; l < depth; ++l) shape.push_back(uniform_int(rng, 1, 8));
  shape.push_back(1);
  return shape;
}

// Smallest distance from any hidden pre-activation of an MLP at x to zero.
inline double mlp_kink_distance(const kanlab::models::MlpNetwork& net, std::span<const double> x) {
  double d = INFINITY;
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    std::vector<double> z(layer.bias);
    for (int o = 0; o < layer.out; ++o) {
      for (int i = 0; i < layer.in; ++i) z[o] += layer.w(o, i) * h[i];
      d = std::min(d, std::abs(z[o]));
    }
    for (double& v : z) v = kanlab::ad::relu_pow(v, net.power);
    h = z;
  }
  return d;
}

// Smallest distance from any activation input of a KAN at x to a knot.
inline double kan_knot_distance(const kanlab::models::KanNetwork& net, std::span<const double> x) {
  double d = INFINITY;
  std::vector<double> h(x.begin(), x.end());
  for (const auto& layer : net.layers) {
    for (int o = 0; o < layer.out; ++o)
      for (int i = 0; i < layer.in; ++i)
        for (double t : layer.at(o, i).grid.knots()) d = std::min(d, std::abs(h[i] - t));
    kanlab::models::KanNetwork one{{layer.in, layer.out}, {layer}};
    h = kanlab::models::kan_forward(one, h);
  }
  return d;
}

// Redraw sample points until every kink of a piecewise-linear net is at least
// `band` away, so central differences stay on one smooth piece.
template <class Distance>
void push_off_kinks(kanlab::models::FieldLossData& data, Rng& rng, double band, Distance dist) {
  const int dim = data.dim;
  for (std::size_t n = 0; n < data.count(); ++n)
    while (dist({data.points.data() + n * dim, static_cast<std::size_t>(dim)}) < band)
      for (int j = 0; j < dim; ++j) data.points[n * dim + j] = uniform(rng, -0.95, 0.95);
}

}  // namespace testsupport
