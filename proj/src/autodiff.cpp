#include "kanlab/autodiff.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kanlab/errors.hpp"

namespace kanlab::ad {

double Var::value() const {
  if (tape == nullptr) throw std::invalid_argument("Var: handle has no tape");
  return tape->value(index);
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  nodes_.reserve(nodes);
  parents_.reserve(edges);
  partials_.reserve(edges);
}

void Tape::clear() {
  nodes_.clear();
  parents_.clear();
  partials_.clear();
}

Var Tape::leaf(double value) { return push(Op::Leaf, value, {}, {}); }

std::vector<Var> Tape::leaves(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(leaf(v));
  return out;
}

Var Tape::push(Op op, double value, std::span<const std::uint32_t> parents,
               std::span<const double> partials) {
  const auto begin = static_cast<std::uint32_t>(parents_.size());
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  nodes_.push_back({value, begin, static_cast<std::uint32_t>(parents.size()), op});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Op op, std::span<const Var> args, int param) {
  for (const Var& a : args)
    if (a.tape != this || a.index >= nodes_.size())
      throw std::invalid_argument("Tape::record: argument handle does not belong to this tape");
  auto arity = [&](std::size_t n) {
    if (args.size() != n)
      throw std::invalid_argument("Tape::record: op expects " + std::to_string(n) + " arguments");
  };
  switch (op) {
    case Op::Add:
      arity(2);
      return args[0] + args[1];
    case Op::Sub:
      arity(2);
      return args[0] - args[1];
    case Op::Mul:
      arity(2);
      return args[0] * args[1];
    case Op::Neg:
      arity(1);
      return -args[0];
    case Op::Sum:
      return sum(args);
    case Op::Sin:
      arity(1);
      return sin(args[0]);
    case Op::Cos:
      arity(1);
      return cos(args[0]);
    case Op::Exp:
      arity(1);
      return exp(args[0]);
    case Op::PowInt:
      arity(1);
      return pow_int(args[0], param);
    case Op::ReluPow:
      arity(1);
      return relu_pow(args[0], param);
    case Op::Silu:
      arity(1);
      return silu(args[0]);
    case Op::SiluPrime:
      arity(1);
      return silu_prime(args[0]);
    default:
      throw UnsupportedOpError("Tape::record: op cannot be recorded from tape arguments alone");
  }
}

std::vector<double> Tape::backward(Var root) const {
  if (root.tape != this || root.index >= nodes_.size())
    throw std::invalid_argument("Tape::backward: root handle does not belong to this tape");
  std::vector<double> adj(root.index + 1, 0.0);
  adj[root.index] = 1.0;
  for (std::uint32_t i = root.index + 1; i-- > 0;) {
    const double a = adj[i];
    if (a == 0.0) continue;
    const Node& n = nodes_[i];
    for (std::uint32_t e = n.edge_begin; e < n.edge_begin + n.edge_count; ++e)
      adj[parents_[e]] += a * partials_[e];
  }
  return adj;
}

std::vector<double> Tape::gradient(Var root, std::span<const Var> wrt) const {
  const auto adj = backward(root);
  std::vector<double> g(wrt.size(), 0.0);
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (wrt[i].tape != this) throw std::invalid_argument("Tape::gradient: foreign handle");
    if (wrt[i].index < adj.size()) g[i] = adj[wrt[i].index];
  }
  return g;
}

Tape& common_tape(const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument("autodiff: operands belong to different tapes");
  return *a.tape;
}

namespace {

Var unary(Op op, const Var& x, double value, double partial) {
  if (x.tape == nullptr) throw std::invalid_argument("autodiff: handle has no tape");
  const std::uint32_t p[] = {x.index};
  const double d[] = {partial};
  return x.tape->push(op, value, p, d);
}

Var binary(Op op, const Var& a, const Var& b, double value, double da, double db) {
  Tape& t = common_tape(a, b);
  const std::uint32_t p[] = {a.index, b.index};
  const double d[] = {da, db};
  return t.push(op, value, p, d);
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  return binary(Op::Add, a, b, a.value() + b.value(), 1.0, 1.0);
}
Var operator-(const Var& a, const Var& b) {
  return binary(Op::Sub, a, b, a.value() - b.value(), 1.0, -1.0);
}
Var operator*(const Var& a, const Var& b) {
  const double va = a.value(), vb = b.value();
  return binary(Op::Mul, a, b, va * vb, vb, va);
}
Var operator-(const Var& a) { return unary(Op::Neg, a, -a.value(), -1.0); }
Var operator+(const Var& a, double b) { return unary(Op::Scale, a, a.value() + b, 1.0); }
Var operator+(double a, const Var& b) { return b + a; }
Var operator-(const Var& a, double b) { return a + (-b); }
Var operator-(double a, const Var& b) { return unary(Op::Scale, b, a - b.value(), -1.0); }
Var operator*(const Var& a, double b) { return unary(Op::Scale, a, a.value() * b, b); }
Var operator*(double a, const Var& b) { return b * a; }
Var operator/(const Var& a, double b) { return a * (1.0 / b); }
Var& operator+=(Var& a, const Var& b) {
  a = a + b;
  return a;
}

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("sum: no terms");
  Tape* t = terms[0].tape;
  std::vector<std::uint32_t> p;
  p.reserve(terms.size());
  double s = 0.0;
  for (const Var& v : terms) {
    if (v.tape != t || t == nullptr) throw std::invalid_argument("sum: operands belong to different tapes");
    p.push_back(v.index);
    s += t->value(v.index);
  }
  const std::vector<double> d(terms.size(), 1.0);
  return t->push(Op::Sum, s, p, d);
}

Var sin(const Var& x) {
  const double v = x.value();
  return unary(Op::Sin, x, std::sin(v), std::cos(v));
}
Var cos(const Var& x) {
  const double v = x.value();
  return unary(Op::Cos, x, std::cos(v), -std::sin(v));
}
Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(Op::Exp, x, e, e);
}

double pow_int(double x, int k) noexcept {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

double relu_pow(double x, int k) noexcept {
  if (x <= 0.0) return 0.0;
  return pow_int(x, k);
}

Var pow_int(const Var& x, int k) {
  if (k < 0) throw std::invalid_argument("pow_int: negative exponent");
  const double v = x.value();
  return unary(Op::PowInt, x, pow_int(v, k), k == 0 ? 0.0 : k * pow_int(v, k - 1));
}

Var relu_pow(const Var& x, int k) {
  if (k < 0) throw std::invalid_argument("relu_pow: negative exponent");
  const double v = x.value();
  return unary(Op::ReluPow, x, relu_pow(v, k), k == 0 ? 0.0 : k * relu_pow(v, k - 1));
}

Var silu(const Var& x) {
  const double v = x.value();
  return unary(Op::Silu, x, splines::silu(v), splines::silu_derivative(v, 1));
}

Var silu_prime(const Var& x) {
  const double v = x.value();
  return unary(Op::SiluPrime, x, splines::silu_derivative(v, 1), splines::silu_derivative(v, 2));
}

double spline(const splines::Grid& grid, std::span<const double> coefs, double x, int order) {
  return splines::eval_spline(grid, coefs, x, order);
}

Var spline(const splines::Grid& grid, std::span<const Var> coefs, const Var& x, int order) {
  if (coefs.size() != static_cast<std::size_t>(grid.basis_count()))
    throw std::invalid_argument("spline: coefficient count does not match the grid");
  Tape& t = common_tape(coefs[0], x);
  const double xv = x.value();
  const auto w = splines::basis_window(grid, xv, order);
  const auto dw = splines::basis_window(grid, xv, order + 1);

  std::array<std::uint32_t, splines::kMaxDegree + 2> p{};
  std::array<double, splines::kMaxDegree + 2> d{};
  double value = 0.0;
  for (int i = 0; i < w.count; ++i) {
    const Var& c = coefs[w.first + i];
    if (c.tape != &t) throw std::invalid_argument("spline: operands belong to different tapes");
    p[i] = c.index;
    d[i] = w.values[i];
    value += c.value() * w.values[i];
  }
  double dx = 0.0;
  for (int i = 0; i < dw.count; ++i) dx += coefs[dw.first + i].value() * dw.values[i];
  p[w.count] = x.index;
  d[w.count] = dx;
  const std::size_t n = w.count + 1;
  return t.push(Op::Spline, value, std::span(p.data(), n), std::span(d.data(), n));
}

DualResult dual_eval(const std::function<DualScalar(std::span<const DualScalar>)>& f,
                     std::span<const double> x, std::span<const double> direction) {
  if (x.size() != direction.size())
    throw std::invalid_argument("dual_eval: direction length does not match input");
  std::vector<DualScalar> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in[i] = {x[i], direction[i]};
  const DualScalar out = f(in);
  return {out.value, out.deriv};
}

}  // namespace kanlab::ad
