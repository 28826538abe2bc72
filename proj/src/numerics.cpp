#include "kanlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "kanlab/errors.hpp"

namespace kanlab::numerics {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols_) throw std::invalid_argument("DenseMatrix::apply: size mismatch");
  std::vector<double> y(rows_);
  for (std::size_t i = 0; i < rows_; ++i) y[i] = dot(row(i), x);
  return y;
}

double DenseMatrix::max_abs() const noexcept {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool DenseMatrix::is_symmetric(double rel_tol) const noexcept {
  if (rows_ != cols_) return false;
  const double tol = rel_tol * max_abs();
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols_ != b.rows_) throw std::invalid_argument("DenseMatrix product: size mismatch");
  DenseMatrix c(a.rows_, b.cols_);
  for (std::size_t i = 0; i < a.rows_; ++i)
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_)
    throw std::invalid_argument("DenseMatrix sum: size mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
  return c;
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  return a + (-1.0) * b;
}

DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix c = a;
  for (double& v : c.data_) v *= s;
  return c;
}

double dot(std::span<const double> x, std::span<const double> y) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) noexcept { return std::sqrt(dot(x, x)); }

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  if (!(a < b)) throw std::invalid_argument("gauss_legendre: requires a < b");

  QuadratureRule rule;
  rule.a = a;
  rule.b = b;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);

  // Roots are symmetric; Newton on P_n from the Tricomi initial guess.
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged root for the weight.
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= n; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half * x;
    rule.nodes[n - 1 - i] = mid + half * x;
    rule.weights[i] = half * w;
    rule.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

EigenDecomposition sym_eig(const DenseMatrix& input) {
  if (input.rows() != input.cols())
    throw std::invalid_argument("sym_eig: matrix is not square");
  if (!input.is_symmetric(1e-12)) throw std::invalid_argument("sym_eig: matrix is not symmetric");

  const std::size_t n = input.rows();
  DenseMatrix a = input;
  // Symmetrize exactly so that row updates can be mirrored into columns.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));

  // vt holds eigenvectors as rows while iterating.
  DenseMatrix vt = DenseMatrix::identity(n);

  double frob = 0.0;
  for (double v : a.data()) frob += v * v;
  frob = std::sqrt(frob);

  for (int sweep = 0; sweep < 100 && n > 1; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off == 0.0 || std::sqrt(off) <= 1e-17 * frob) break;
    const double threshold = sweep < 3 ? 0.2 * std::sqrt(off) / static_cast<double>(n * n) : 0.0;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
            std::abs(a(q, q)) + g == std::abs(a(q, q))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        if (std::abs(apq) <= threshold || apq == 0.0) continue;

        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        auto rp = a.row(p);
        auto rq = a.row(q);
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = rp[r];
          const double arq = rq[r];
          rp[r] = arp - s * (arq + tau * arp);
          rq[r] = arq + s * (arp - tau * arq);
          a(r, p) = rp[r];
          a(r, q) = rq[r];
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;

        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t r = 0; r < n; ++r) {
          const double x = vp[r];
          const double y = vq[r];
          vp[r] = x - s * (y + tau * x);
          vq[r] = y + s * (x - tau * y);
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    const auto v = vt.row(order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v[r];
  }
  return out;
}

std::vector<double> solve_least_squares(const DenseMatrix& a_in, std::span<const double> b_in) {
  const std::size_t m = a_in.rows();
  const std::size_t n = a_in.cols();
  if (b_in.size() != m) throw std::invalid_argument("solve_least_squares: rhs size mismatch");
  if (m < n) throw std::invalid_argument("solve_least_squares: requires rows >= cols");

  // Column-major working copy keeps Householder updates contiguous.
  std::vector<double> qr(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) qr[j * m + i] = a_in(i, j);
  std::vector<double> b(b_in.begin(), b_in.end());

  double max_col_norm = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    max_col_norm = std::max(max_col_norm, norm2({qr.data() + j * m, m}));
  const double tol = 1e-11 * max_col_norm;

  std::vector<double> rdiag(n);
  for (std::size_t j = 0; j < n; ++j) {
    double* col = qr.data() + j * m;
    double norm = 0.0;
    for (std::size_t i = j; i < m; ++i) norm += col[i] * col[i];
    norm = std::sqrt(norm);
    if (norm <= tol || max_col_norm == 0.0)
      throw RankDeficientError(j, "solve_least_squares: column " + std::to_string(j) +
                                      " is rank deficient");
    const double alpha = col[j] > 0.0 ? -norm : norm;
    // v = x - alpha e_1, stored in place; H = I - 2 v v^T / (v^T v)
    col[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) vnorm2 += col[i] * col[i];
    for (std::size_t k = j + 1; k < n; ++k) {
      double* ck = qr.data() + k * m;
      double s = 0.0;
      for (std::size_t i = j; i < m; ++i) s += col[i] * ck[i];
      s = 2.0 * s / vnorm2;
      for (std::size_t i = j; i < m; ++i) ck[i] -= s * col[i];
    }
    double s = 0.0;
    for (std::size_t i = j; i < m; ++i) s += col[i] * b[i];
    s = 2.0 * s / vnorm2;
    for (std::size_t i = j; i < m; ++i) b[i] -= s * col[i];
    rdiag[j] = alpha;
  }

  std::vector<double> x(n);
  for (std::size_t jj = n; jj-- > 0;) {
    double s = b[jj];
    for (std::size_t k = jj + 1; k < n; ++k) s -= qr[k * m + jj] * x[k];
    x[jj] = s / rdiag[jj];
  }
  return x;
}

}  // namespace kanlab::numerics
