#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "kanlab/models.hpp"

namespace kanlab::convert {

/// Per-coordinate input intervals.
using Box = std::vector<std::pair<double, double>>;

/// Symmetric per-neuron bounds [-R, R] at every layer interface of an MLP:
/// inputs[l] for the values entering affine layer l, preacts[l] for its outputs.
struct DomainBound {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> preacts;
};

inline constexpr double kBoundSafety = 1.25;

/// Interval propagation through affine and max(0,x)^k layers, inflated by 1.25.
/// The result is certified by sampling `certificate_samples` inputs from the box;
/// a violation throws BoundFailureError.
DomainBound propagate_bounds(const models::MlpNetwork& mlp, const Box& box,
                             std::uint64_t certificate_seed = 0, int certificate_samples = 10000);

/// Each affine layer becomes a KAN layer of linear activations on a G=1 grid over
/// [-R, R] of its input neuron; each hidden ReLU^k becomes a diagonal KAN layer of
/// sigma_k on a G=2 grid over [-R, 0, R]. All w_b are zero. Depth 2L - 1.
models::KanNetwork mlp_to_kan(const models::MlpNetwork& mlp, const DomainBound& bounds);

struct TruncatedPower {
  double knot;
  double coef;
};

/// phi(x) = sum_j a_j max(0, x - t_j)^k for x >= t_{-k}, with one term per
/// extended knot (zeros dropped). Requires w_b = 0.
std::vector<TruncatedPower> spline_to_truncated_powers(const splines::SplineActivation& act);

/// One affine -> sigma_k -> affine block per KAN layer, before merging.
std::vector<models::MlpNetwork> kan_to_mlp_blocks(const models::KanNetwork& kan);
/// Compose the trailing affine map of each block with the leading one of the next.
models::MlpNetwork merge_blocks(const std::vector<models::MlpNetwork>& blocks);
models::MlpNetwork kan_to_mlp(const models::KanNetwork& kan);

using VectorFn = std::function<std::vector<double>(std::span<const double>)>;

struct EquivalenceReport {
  std::size_t points = 0;
  double max_abs = 0.0;
  /// max |f - g| / (1 + |f|)
  double max_rel = 0.0;
  std::vector<double> argmax;
};

EquivalenceReport verify_equivalence(const VectorFn& f, const VectorFn& g, const Box& domain,
                                     int n_points, std::uint64_t seed);

}  // namespace kanlab::convert
