// Dense batched evaluation of ReLU^k MLPs with first input derivatives and an
// analytic backward pass. Cross-checked against the scalar tape in the tests.

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>

#include "kanlab/models.hpp"

namespace kanlab::models {

namespace {

using Mat = Eigen::MatrixXd;
using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;

// sigma_k and its first two derivatives, elementwise.
Mat act(const Mat& z, int k, int order) {
  const int p = k - order;
  double scale = 1.0;
  for (int i = 0; i < order; ++i) scale *= (k - i);
  if (p < 0) return Mat::Zero(z.rows(), z.cols());
  return z.unaryExpr([p, scale](double v) {
    if (v <= 0.0) return 0.0;
    double r = scale;
    for (int i = 0; i < p; ++i) r *= v;
    return r;
  });
}

struct Layers {
  std::vector<RowMap> w;
  std::vector<VecMap> b;
};

Layers map_layers(const MlpNetwork& net, std::span<const double> params) {
  Layers out;
  std::size_t off = 0;
  for (const auto& layer : net.layers) {
    out.w.emplace_back(params.data() + off, layer.out, layer.in);
    off += static_cast<std::size_t>(layer.in) * layer.out;
    out.b.emplace_back(params.data() + off, layer.out);
    off += layer.out;
  }
  return out;
}

// Forward pass over one chunk: z[l], and tangents dz[l][j] along each input axis.
struct Pass {
  std::vector<Mat> h;                 // inputs to each layer
  std::vector<Mat> z;                 // pre-activations
  std::vector<std::vector<Mat>> dh;   // [layer][dir]
  std::vector<std::vector<Mat>> dz;
};

Pass forward(const MlpNetwork& net, const Layers& ly, const Mat& x, bool tangents) {
  const std::size_t L = net.layers.size();
  const int dim = static_cast<int>(x.rows());
  Pass p;
  p.h.resize(L);
  p.z.resize(L);
  p.h[0] = x;
  if (tangents) {
    p.dh.assign(L, std::vector<Mat>(dim));
    p.dz.assign(L, std::vector<Mat>(dim));
    for (int j = 0; j < dim; ++j) {
      p.dh[0][j] = Mat::Zero(dim, x.cols());
      p.dh[0][j].row(j).setOnes();
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    p.z[l].noalias() = ly.w[l] * p.h[l];
    p.z[l].colwise() += ly.b[l];
    if (tangents)
      for (int j = 0; j < dim; ++j) p.dz[l][j].noalias() = ly.w[l] * p.dh[l][j];
    if (l + 1 < L) {
      p.h[l + 1] = act(p.z[l], net.power, 0);
      if (tangents) {
        const Mat s1 = act(p.z[l], net.power, 1);
        for (int j = 0; j < dim; ++j) p.dh[l + 1][j] = s1.cwiseProduct(p.dz[l][j]);
      }
    }
  }
  return p;
}

}  // namespace

std::vector<double> mlp_batch_values(const MlpNetwork& net, std::span<const double> points,
                                     std::vector<double>* gradients) {
  validate(net);
  const int dim = net.shape.front();
  if (net.shape.back() != 1) throw std::invalid_argument("mlp_batch_values: scalar output required");
  if (points.size() % dim != 0) throw std::invalid_argument("mlp_batch_values: ragged point array");
  const auto n = static_cast<Eigen::Index>(points.size() / dim);
  const auto params = get_parameters(net);
  const Layers ly = map_layers(net, params);
  const Mat x = Eigen::Map<const Mat>(points.data(), dim, n);
  const Pass p = forward(net, ly, x, gradients != nullptr);
  const Mat& u = p.z.back();
  std::vector<double> out(u.data(), u.data() + n);
  if (gradients) {
    gradients->assign(points.size(), 0.0);
    for (Eigen::Index c = 0; c < n; ++c)
      for (int j = 0; j < dim; ++j) (*gradients)[c * dim + j] = p.dz.back()[j](0, c);
  }
  return out;
}

double field_loss(const MlpNetwork& net, std::span<const double> params, const FieldLossData& data,
                  std::span<double> grad) {
  validate(net);
  if (data.dim != net.shape.front() || net.shape.back() != 1)
    throw std::invalid_argument("field_loss: data does not match the network");
  if (params.size() != parameter_count(net))
    throw std::invalid_argument("field_loss: parameter count does not match the network");
  if (!grad.empty() && grad.size() != params.size())
    throw std::invalid_argument("field_loss: gradient size");
  const std::size_t n_pts = data.count();
  const int dim = data.dim;
  for (const auto* v : {&data.target, &data.alpha, &data.beta, &data.gamma})
    if (!v->empty() && v->size() != n_pts) throw std::invalid_argument("field_loss: per-point array size");
  if (!data.alpha.empty() && data.target.size() != n_pts)
    throw std::invalid_argument("field_loss: alpha given without targets");

  const bool need_d = std::any_of(data.gamma.begin(), data.gamma.end(), [](double g) { return g != 0.0; });
  const Layers ly = map_layers(net, params);
  const std::size_t L = net.layers.size();

  std::vector<Mat> gw(L);
  std::vector<Eigen::VectorXd> gb(L);
  if (!grad.empty())
    for (std::size_t l = 0; l < L; ++l) {
      gw[l] = Mat::Zero(net.layers[l].out, net.layers[l].in);
      gb[l] = Eigen::VectorXd::Zero(net.layers[l].out);
    }

  constexpr std::size_t kChunk = 2048;
  double loss = 0.0;
  for (std::size_t start = 0; start < n_pts; start += kChunk) {
    const auto n = static_cast<Eigen::Index>(std::min(kChunk, n_pts - start));
    const Mat x = Eigen::Map<const Mat>(data.points.data() + start * dim, dim, n);
    const Pass p = forward(net, ly, x, need_d);
    const Mat& u = p.z.back();

    Mat zbar(1, n);
    std::vector<Mat> dzbar(need_d ? dim : 0, Mat(1, n));
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::size_t idx = start + c;
      const double a = data.alpha.empty() ? 0.0 : data.alpha[idx];
      const double b = data.beta.empty() ? 0.0 : data.beta[idx];
      const double g = data.gamma.empty() ? 0.0 : data.gamma[idx];
      const double e = a != 0.0 ? u(0, c) - data.target[idx] : 0.0;
      loss += a * e * e + b * u(0, c);
      zbar(0, c) = 2.0 * a * e + b;
      for (int j = 0; j < static_cast<int>(dzbar.size()); ++j) {
        const double du = p.dz.back()[j](0, c);
        loss += g * du * du;
        dzbar[j](0, c) = 2.0 * g * du;
      }
    }
    if (grad.empty()) continue;

    for (std::size_t l = L; l-- > 0;) {
      gw[l].noalias() += zbar * p.h[l].transpose();
      gb[l] += zbar.rowwise().sum();
      for (std::size_t j = 0; j < dzbar.size(); ++j) gw[l].noalias() += dzbar[j] * p.dh[l][j].transpose();
      if (l == 0) break;
      const Mat hbar = ly.w[l].transpose() * zbar;
      const Mat s1 = act(p.z[l - 1], net.power, 1);
      zbar = s1.cwiseProduct(hbar);
      if (!dzbar.empty()) {
        const Mat s2 = act(p.z[l - 1], net.power, 2);
        for (std::size_t j = 0; j < dzbar.size(); ++j) {
          const Mat dhbar = ly.w[l].transpose() * dzbar[j];
          zbar += s2.cwiseProduct(p.dz[l - 1][j]).cwiseProduct(dhbar);
          dzbar[j] = s1.cwiseProduct(dhbar);
        }
      }
    }
  }

  if (!grad.empty()) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = net.layers[l];
      for (int o = 0; o < layer.out; ++o)
        for (int i = 0; i < layer.in; ++i) grad[off++] = gw[l](o, i);
      for (int o = 0; o < layer.out; ++o) grad[off++] = gb[l](o);
    }
  }
  return loss;
}

}  // namespace kanlab::models
