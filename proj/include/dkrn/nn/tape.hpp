// SPDX-License-Identifier: Apache-2.0
#pragma once

// Define-by-run reverse-mode differentiation over small dense tensors.
//
// A Tape records every value computed in a forward pass together with a
// closure that pushes its gradient to its inputs. Tapes are rebuilt for each
// training step. Parameters live outside the tape; leaf nodes created from a
// Parameter accumulate into Parameter::grad when backward() runs.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dkrn/random.hpp"

namespace dkrn::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Shape shape);

  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// uniform(-range, range), the default initializer for every weight.
void init_uniform(Parameter& p, Rng& rng, double range = 0.08);

class Tape;

/// Handle to a node of a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const std::vector<double>& value() const;
  const Shape& shape() const;
  std::size_t size() const { return value().size(); }
  double operator[](std::size_t i) const { return value()[i]; }
  /// Value of a single-element node.
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the gradient of node `self` into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::vector<double> values, Shape shape);
  Var constant(std::vector<double> values) {
    const auto n = values.size();
    return constant(std::move(values), {n});
  }
  /// Leaf holding a copy of p; its gradient is added to p.grad.
  Var param(Parameter& p);
  /// Row r of a 2-D parameter as a vector leaf; gradient scattered to that row.
  Var row(Parameter& table, std::size_t r);
  /// Records a custom op. `backward` may be empty for non-differentiable nodes.
  Var push(std::vector<double> value, Shape shape, Backward backward);

  const std::vector<double>& value(std::size_t id) const { return nodes_[id].value; }
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  /// Gradient buffer of a node; only valid inside backward().
  std::vector<double>& grad(std::size_t id) { return nodes_[id].grad; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  /// reverse order. Throws ShapeError if loss is not a scalar.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. Vectors are rank-1; matrices are rank-2 row-major.

/// (m x k) * (k x n) -> (m x n), or (m x k) * (k) -> (m).
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// 1 - a
Var one_minus(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax(Var a);
/// Concatenation of two rank-1 vectors.
Var concat(Var a, Var b);
/// Elementwise mean of equally shaped vectors.
Var mean_pool(std::span<const Var> xs);
Var sum(Var a);
/// sum_i w_i * BCE(sigmoid(z_i), y_i), computed stably from logits.
Var bce_with_logits(Var logits, std::span<const double> targets, std::span<const double> weights);

/// Plain-double helpers shared with inference code.
double sigmoid(double x);

}  // namespace dkrn::nn
