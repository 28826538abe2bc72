#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kanlab::numerics {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  DenseMatrix transposed() const;
  std::vector<double> apply(std::span<const double> x) const;
  double max_abs() const noexcept;
  /// |A_ij - A_ji| <= rel_tol * max|A| for all i, j.
  bool is_symmetric(double rel_tol = 1e-12) const noexcept;

  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
  friend DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
  friend DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);
  friend DenseMatrix operator*(double s, const DenseMatrix& a);
  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  double a = 0.0;
  double b = 0.0;

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(nodes[i]);
    return sum;
  }
};

/// n-point Gauss-Legendre rule on [a, b]; exact for polynomials of degree <= 2n-1.
QuadratureRule gauss_legendre(int n, double a, double b);

/// Eigenpairs sorted by ascending eigenvalue; column i of `vectors` pairs with values[i].
struct EigenDecomposition {
  std::vector<double> values;
  DenseMatrix vectors;
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
EigenDecomposition sym_eig(const DenseMatrix& a);

/// argmin ||Ax - b||_2 by Householder QR. Throws RankDeficientError naming the
/// first column that is numerically dependent on its predecessors.
std::vector<double> solve_least_squares(const DenseMatrix& a, std::span<const double> b);

double dot(std::span<const double> x, std::span<const double> y) noexcept;
double norm2(std::span<const double> x) noexcept;

}  // namespace kanlab::numerics
