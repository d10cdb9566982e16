// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dkrn/error.hpp"

namespace dkrn::nn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Parameter::Parameter(std::string name_, Shape shape_)
    : name(std::move(name_)), shape(std::move(shape_)), value(numel(shape), 0.0), grad(value.size(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_uniform(Parameter& p, Rng& rng, double range) {
  for (auto& x : p.value) x = uniform_real(rng, -range, range);
}

const std::vector<double>& Var::value() const { return tape_->value(id_); }
const Shape& Var::shape() const { return tape_->shape(id_); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return v[0];
}

Var Tape::constant(std::vector<double> values, Shape shape) {
  if (numel(shape) != values.size()) {
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
  }
  return push(std::move(values), std::move(shape), {});
}

Var Tape::param(Parameter& p) {
  return push(p.value, p.shape, [&p](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
  });
}

Var Tape::row(Parameter& table, std::size_t r) {
  if (table.shape.size() != 2 || r >= table.shape[0]) {
    throw ShapeError("row " + std::to_string(r) + " of parameter " + table.name + " " + shape_str(table.shape));
  }
  const std::size_t cols = table.shape[1];
  std::vector<double> v(table.value.begin() + static_cast<std::ptrdiff_t>(r * cols),
                        table.value.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  return push(std::move(v), {cols}, [&table, r, cols](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < cols; ++i) table.grad[r * cols + i] += g[i];
  });
}

Var Tape::push(std::vector<double> value, Shape shape, Backward backward) {
  nodes_.push_back(Node{std::move(shape), std::move(value), {}, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward on non-scalar of shape " + shape_str(nodes_[loss.id()].shape));
  }
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

// ---------------------------------------------------------------------------

namespace {

void same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

void require_vector(const char* op, Var a) {
  if (a.shape().size() != 1) throw ShapeError(std::string(op) + ": expected a vector, got " + shape_str(a.shape()));
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx_from_y) {
  Tape& t = *a.tape();
  const auto& x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.push(std::move(y), a.shape(), [ia, dfdx_from_y](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& yv = tp.value(self);
    const auto& xv = tp.value(ia);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx_from_y(xv[i], yv[i]);
  });
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.size() != 2 || (sb.size() != 1 && sb.size() != 2) || sa[1] != sb[0]) {
    throw ShapeError("matmul: shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb.size() == 2 ? sb[1] : 1;
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  Shape so = sb.size() == 2 ? Shape{m, n} : Shape{m};
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), std::move(so), [ia, ib, m, k, n](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& av = tp.value(ia);
    const auto& bv = tp.value(ib);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
        ga[i * k + p] += s;
      }
    }
    auto& gb = tp.grad(ib);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
      }
    }
  });
}

Var add(Var a, Var b) {
  same_shape("add", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), a.shape(), [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = tp.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var sub(Var a, Var b) {
  same_shape("sub", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), a.shape(), [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = tp.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var hadamard(Var a, Var b) {
  same_shape("hadamard", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), a.shape(), [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& av = tp.value(ia);
    const auto& bv = tp.value(ib);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    auto& gb = tp.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var one_minus(Var a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softmax(Var a) {
  require_vector("softmax", a);
  const auto& x = a.value();
  if (x.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (auto& v : y) v /= z;
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(y), a.shape(), [ia](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);
    double dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
  });
}

Var concat(Var a, Var b) {
  require_vector("concat", a);
  require_vector("concat", b);
  std::vector<double> y = a.value();
  const auto& bv = b.value();
  y.insert(y.end(), bv.begin(), bv.end());
  const std::size_t ia = a.id(), ib = b.id(), na = a.size();
  const std::size_t n = y.size();
  return a.tape()->push(std::move(y), {n}, [ia, ib, na](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    auto& gb = tp.grad(ib);
    for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
  });
}

Var mean_pool(std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("mean_pool: no inputs");
  for (const auto& x : xs) same_shape("mean_pool", xs[0], x);
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> y(xs[0].size(), 0.0);
  std::vector<std::size_t> ids;
  for (const auto& x : xs) {
    const auto& v = x.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i] * inv;
    ids.push_back(x.id());
  }
  return xs[0].tape()->push(std::move(y), xs[0].shape(), [ids, inv](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    for (auto id : ids) {
      auto& gx = tp.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * inv;
    }
  });
}

Var sum(Var a) {
  double s = 0;
  for (double x : a.value()) s += x;
  const std::size_t ia = a.id();
  return a.tape()->push({s}, {1}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (auto& x : tp.grad(ia)) x += g;
  });
}

Var bce_with_logits(Var logits, std::span<const double> targets, std::span<const double> weights) {
  const auto& z = logits.value();
  if (targets.size() != z.size() || weights.size() != z.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(z.size()) + " logits, " +
                     std::to_string(targets.size()) + " targets, " + std::to_string(weights.size()) + " weights");
  }
  // BCE(sigmoid(z), y) = max(z, 0) - z*y + log(1 + exp(-|z|))
  double loss = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (weights[i] == 0.0) continue;
    loss += weights[i] * (std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i]))));
  }
  std::vector<double> y(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  const std::size_t iz = logits.id();
  return logits.tape()->push({loss}, {1}, [iz, y = std::move(y), w = std::move(w)](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    const auto& z = tp.value(iz);
    auto& gz = tp.grad(iz);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (w[i] != 0.0) gz[i] += g * w[i] * (sigmoid(z[i]) - y[i]);
    }
  });
}

}  // namespace dkrn::nn
