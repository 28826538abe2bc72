#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <vector>

#include "kanlab/splines.hpp"

namespace kanlab::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Neg,
  Scale,
  Sum,
  Sin,
  Cos,
  Exp,
  PowInt,
  ReluPow,
  Silu,
  SiluPrime,
  Spline,
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;

  double value() const;
};

/// Append-only record of scalar operations. Parents always precede children, so
/// a single reverse sweep over node indices propagates adjoints. Not thread-safe;
/// use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t nodes, std::size_t edges);
  void clear();

  Var leaf(double value);
  std::vector<Var> leaves(std::span<const double> values);

  /// Generic entry point: apply an elementary op to tape arguments. `param` is
  /// the integer exponent for PowInt / ReluPow. Ops that need extra data (Spline)
  /// or take a scalar (Scale) raise UnsupportedOpError here.
  Var record(Op op, std::span<const Var> args, int param = 0);

  /// Low-level append; parents must already be on this tape.
  Var push(Op op, double value, std::span<const std::uint32_t> parents,
           std::span<const double> partials);

  std::size_t size() const noexcept { return nodes_.size(); }
  double value(std::uint32_t i) const { return nodes_[i].value; }
  Op op(std::uint32_t i) const { return nodes_[i].op; }

  /// Adjoints d root / d node for every node up to the root.
  std::vector<double> backward(Var root) const;
  /// d root / d v for each v in wrt.
  std::vector<double> gradient(Var root, std::span<const Var> wrt) const;

 private:
  struct Node {
    double value;
    std::uint32_t edge_begin;
    std::uint32_t edge_count;
    Op op;
  };
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

/// Tape shared by both operands; throws std::invalid_argument otherwise.
Tape& common_tape(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var& operator+=(Var& a, const Var& b);

/// n-ary sum recorded as one node.
Var sum(std::span<const Var> terms);

Var sin(const Var& x);
Var cos(const Var& x);
Var exp(const Var& x);
Var pow_int(const Var& x, int k);
/// max(0, x)^k; k = 0 is the unit step with step(0) = 0. The partial at the
/// kink is taken as 0.
Var relu_pow(const Var& x, int k);
Var silu(const Var& x);
/// d/dx silu, recorded with its own derivative so that it can be differentiated.
Var silu_prime(const Var& x);

double relu_pow(double x, int k) noexcept;
double pow_int(double x, int k) noexcept;
inline double silu(double x) noexcept { return splines::silu(x); }
inline double silu_prime(double x) { return splines::silu_derivative(x, 1); }

/// Fused primitive sum_i c_i B_i^{(order)}(x). Only the coefficients in the
/// basis window at x become edges.
Var spline(const splines::Grid& grid, std::span<const Var> coefs, const Var& x, int order = 0);
double spline(const splines::Grid& grid, std::span<const double> coefs, double x, int order = 0);

// Forward-mode dual numbers. T is double for plain directional derivatives or
// Var for forward-over-reverse.
template <class T>
struct Dual {
  T value{};
  T deriv{};
};

using DualScalar = Dual<double>;

template <class U, class T>
concept DualScalarOperand = std::is_arithmetic_v<U> || std::same_as<U, T>;

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.value + b.value, a.deriv + b.deriv};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.value - b.value, a.deriv - b.deriv};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.value * b.value, a.deriv * b.value + a.value * b.deriv};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.value, -a.deriv};
}
template <class T, class U>
  requires DualScalarOperand<U, T>
Dual<T> operator+(const Dual<T>& a, const U& b) {
  return {a.value + b, a.deriv};
}
template <class T, class U>
  requires DualScalarOperand<U, T>
Dual<T> operator+(const U& a, const Dual<T>& b) {
  return {a + b.value, b.deriv};
}
template <class T, class U>
  requires DualScalarOperand<U, T>
Dual<T> operator-(const Dual<T>& a, const U& b) {
  return {a.value - b, a.deriv};
}
template <class T, class U>
  requires DualScalarOperand<U, T>
Dual<T> operator*(const Dual<T>& a, const U& b) {
  return {a.value * b, a.deriv * b};
}
template <class T, class U>
  requires DualScalarOperand<U, T>
Dual<T> operator*(const U& a, const Dual<T>& b) {
  return {a * b.value, a * b.deriv};
}
template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a = a + b;
  return a;
}

template <class T>
Dual<T> sin(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {sin(x.value), cos(x.value) * x.deriv};
}
template <class T>
Dual<T> cos(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {cos(x.value), -(sin(x.value) * x.deriv)};
}
template <class T>
Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.value);
  return {e, e * x.deriv};
}
template <class T>
Dual<T> pow_int(const Dual<T>& x, int k) {
  if (k == 0) return {x.value * 0.0 + 1.0, x.deriv * 0.0};
  return {pow_int(x.value, k), static_cast<double>(k) * pow_int(x.value, k - 1) * x.deriv};
}
template <class T>
Dual<T> relu_pow(const Dual<T>& x, int k) {
  if (k == 0) return {relu_pow(x.value, 0), x.deriv * 0.0};
  return {relu_pow(x.value, k), static_cast<double>(k) * relu_pow(x.value, k - 1) * x.deriv};
}
template <class T>
Dual<T> silu(const Dual<T>& x) {
  return {silu(x.value), silu_prime(x.value) * x.deriv};
}
template <class T, class C>
Dual<T> spline(const splines::Grid& grid, std::span<const C> coefs, const Dual<T>& x,
               int order = 0) {
  return {spline(grid, coefs, x.value, order), spline(grid, coefs, x.value, order + 1) * x.deriv};
}

struct DualResult {
  double value;
  double derivative;
};

/// Value and directional derivative of f at x along `direction`.
DualResult dual_eval(const std::function<DualScalar(std::span<const DualScalar>)>& f,
                     std::span<const double> x, std::span<const double> direction);

}  // namespace kanlab::ad
