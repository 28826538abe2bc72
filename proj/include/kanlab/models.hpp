#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kanlab/autodiff.hpp"
#include "kanlab/splines.hpp"

namespace kanlab::models {

/// Activations phi_{l,i->o} stored at index o * in + i.
struct KanLayer {
  int in = 0;
  int out = 0;
  std::vector<splines::SplineActivation> acts;

  splines::SplineActivation& at(int o, int i) { return acts[static_cast<std::size_t>(o) * in + i]; }
  const splines::SplineActivation& at(int o, int i) const {
    return acts[static_cast<std::size_t>(o) * in + i];
  }
};

struct KanNetwork {
  std::vector<int> shape;
  std::vector<KanLayer> layers;

  friend bool operator==(const KanNetwork&, const KanNetwork&) = default;
};

bool operator==(const KanLayer& a, const KanLayer& b);

/// Dense layer y = W x + b with W stored row-major (out x in).
struct MlpLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  double w(int o, int i) const { return weight[static_cast<std::size_t>(o) * in + i]; }
  friend bool operator==(const MlpLayer&, const MlpLayer&) = default;
};

/// Hidden layers apply max(0, x)^power elementwise; the last layer is affine.
struct MlpNetwork {
  std::vector<int> shape;
  int power = 1;
  std::vector<MlpLayer> layers;

  friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;
};

void validate(const KanNetwork& net);
void validate(const MlpNetwork& net);

// Flat parameter vectors. KAN: per layer, per activation (o, i) in storage
// order, the coefficients followed by w_b. MLP: per layer, W then b.
std::size_t parameter_count(const KanNetwork& net);
std::size_t parameter_count(const MlpNetwork& net);
std::vector<double> get_parameters(const KanNetwork& net);
std::vector<double> get_parameters(const MlpNetwork& net);
void set_parameters(KanNetwork& net, std::span<const double> p);
void set_parameters(MlpNetwork& net, std::span<const double> p);

bool all_base_weights_zero(const KanNetwork& net);

KanNetwork zero_kan(const std::vector<int>& shape, const splines::Grid& grid);
/// c ~ N(0, 0.1^2), w_b = 1, every grid on `range` (default [-1, 1]).
KanNetwork init_kan(const std::vector<int>& shape, int intervals, int degree, std::uint64_t seed,
                    std::pair<double, double> range = {-1.0, 1.0});
/// init_kan with each grid placed on the range its inputs cover over `batch`
/// (widened by margin * span), layer by layer; coefficients are not refit.
KanNetwork init_kan_on_batch(const std::vector<int>& shape, int intervals, int degree, std::uint64_t seed,
                             const std::vector<std::vector<double>>& batch, double margin = 0.0);
/// He: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)). FanIn: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
/// Biases are U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in both.
enum class MlpInit { He, FanIn };
MlpNetwork init_mlp(const std::vector<int>& shape, int power, std::uint64_t seed,
                    MlpInit scheme = MlpInit::He);

namespace detail {

template <class T>
T total(std::span<const T> terms) {
  if constexpr (std::is_same_v<T, ad::Var>) {
    return ad::sum(terms);
  } else if constexpr (std::is_same_v<T, double>) {
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  } else {
    using Inner = decltype(T{}.value);
    std::vector<Inner> v, d;
    v.reserve(terms.size());
    d.reserve(terms.size());
    for (const auto& t : terms) {
      v.push_back(t.value);
      d.push_back(t.deriv);
    }
    return T{total<Inner>(v), total<Inner>(d)};
  }
}

}  // namespace detail

/// Forward pass with parameters taken from `params` (layout as get_parameters).
/// S is the value type (double, Var, DualScalar, Dual<Var>); P is double or Var.
template <class S, class P>
std::vector<S> kan_forward(const KanNetwork& net, std::span<const P> params, std::span<const S> x) {
  if (x.size() != static_cast<std::size_t>(net.shape.front()))
    throw std::invalid_argument("kan_forward: input length does not match the network");
  if (params.size() != parameter_count(net))
    throw std::invalid_argument("kan_forward: parameter count does not match the network");
  std::vector<S> h(x.begin(), x.end());
  std::vector<S> s, terms;
  std::size_t off = 0;
  for (const auto& layer : net.layers) {
    s.clear();
    for (const S& v : h) s.push_back(ad::silu(v));
    // Offsets of each activation within this layer's parameter block.
    std::vector<S> next;
    next.reserve(layer.out);
    std::size_t base = off;
    std::vector<std::size_t> offsets(layer.acts.size());
    for (std::size_t a = 0; a < layer.acts.size(); ++a) {
      offsets[a] = base;
      base += layer.acts[a].coefficients.size() + 1;
    }
    for (int o = 0; o < layer.out; ++o) {
      terms.clear();
      for (int i = 0; i < layer.in; ++i) {
        const std::size_t a = static_cast<std::size_t>(o) * layer.in + i;
        const auto& act = layer.acts[a];
        const auto nb = act.coefficients.size();
        const auto c = params.subspan(offsets[a], nb);
        terms.push_back(params[offsets[a] + nb] * s[i]);
        terms.push_back(ad::spline(act.grid, c, h[i]));
      }
      next.push_back(detail::total<S>(terms));
    }
    h = std::move(next);
    off = base;
  }
  return h;
}

template <class S, class P>
std::vector<S> mlp_forward(const MlpNetwork& net, std::span<const P> params, std::span<const S> x) {
  if (x.size() != static_cast<std::size_t>(net.shape.front()))
    throw std::invalid_argument("mlp_forward: input length does not match the network");
  if (params.size() != parameter_count(net))
    throw std::invalid_argument("mlp_forward: parameter count does not match the network");
  std::vector<S> h(x.begin(), x.end());
  std::vector<S> terms;
  std::size_t off = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const std::size_t boff = off + static_cast<std::size_t>(layer.in) * layer.out;
    std::vector<S> next;
    next.reserve(layer.out);
    for (int o = 0; o < layer.out; ++o) {
      terms.clear();
      for (int i = 0; i < layer.in; ++i)
        terms.push_back(params[off + static_cast<std::size_t>(o) * layer.in + i] * h[i]);
      S z = detail::total<S>(terms) + params[boff + o];
      if (l + 1 < net.layers.size()) z = ad::relu_pow(z, net.power);
      next.push_back(std::move(z));
    }
    h = std::move(next);
    off = boff + layer.out;
  }
  return h;
}

/// Plain evaluation with the network's own parameters.
std::vector<double> kan_forward(const KanNetwork& net, std::span<const double> x);
std::vector<double> mlp_forward(const MlpNetwork& net, std::span<const double> x);

/// Per-activation range update from the inputs each layer sees on the batch
/// (rows of `batch`, each of length shape[0]).
struct GridUpdateResult {
  KanNetwork net;
  bool changed = false;
  bool degenerate_range = false;
};
GridUpdateResult network_grid_update(const KanNetwork& net,
                                     const std::vector<std::vector<double>>& batch,
                                     double margin = 0.05);
KanNetwork network_grid_extend(const KanNetwork& net, int new_intervals);

/// Samples for the loss
///   L = sum_n alpha_n (u_n - y_n)^2 + beta_n u_n + gamma_n sum_j (d u_n / d x_j)^2
/// over a scalar-output network. Empty alpha/beta/gamma mean zero.
struct FieldLossData {
  int dim = 1;
  std::vector<double> points;  // row-major, count x dim
  std::vector<double> target;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;

  std::size_t count() const { return points.size() / dim; }
};

/// Loss value; gradient written to `grad` when non-empty.
double field_loss(const KanNetwork& net, std::span<const double> params, const FieldLossData& data,
                  std::span<double> grad);
double field_loss(const MlpNetwork& net, std::span<const double> params, const FieldLossData& data,
                  std::span<double> grad);

/// Batched MLP outputs (and optionally first input derivatives, row-major
/// count x dim) via the dense engine.
std::vector<double> mlp_batch_values(const MlpNetwork& net, std::span<const double> points,
                                     std::vector<double>* gradients = nullptr);

std::string to_json(const KanNetwork& net);
std::string to_json(const MlpNetwork& net);
/// Returns the kind field ("kan" or "mlp") of a model document.
std::string model_kind(const std::string& json);
KanNetwork kan_from_json(const std::string& json);
MlpNetwork mlp_from_json(const std::string& json);

}  // namespace kanlab::models
