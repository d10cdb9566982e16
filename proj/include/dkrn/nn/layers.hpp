// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "dkrn/nn/tape.hpp"

namespace dkrn::nn {

/// Gated recurrent unit with weights over the concatenated [x; h] input:
///   z  = sigmoid(Wz [x; h] + bz)
///   r  = sigmoid(Wr [x; h] + br)
///   h~ = tanh(Wh [x; r * h] + bh)
///   h' = (1 - z) * h + z * h~
struct GruCell {
  GruCell() = default;
  GruCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Parameter wz, wr, wh;  // hidden x (input + hidden)
  Parameter bz, br, bh;  // hidden

  std::vector<Parameter*> parameters();
  void init(Rng& rng, double range = 0.08);
};

/// A GruCell's parameters recorded on one tape.
struct BoundGru {
  Var wz, wr, wh, bz, br, bh;
  std::size_t hidden_dim = 0;
};

BoundGru bind(Tape& tape, GruCell& cell);
Var gru_step(const BoundGru& cell, Var h_prev, Var x);
/// Runs the cell over xs from a zero state and returns the final state.
Var gru_encode(Tape& tape, const BoundGru& cell, std::span<const Var> xs);

/// Dense layer y = W x + b with W of shape (out, in).
struct Dense {
  Dense() = default;
  Dense(const std::string& prefix, std::size_t in, std::size_t out);

  Parameter weight;
  Parameter bias;

  std::size_t in_dim() const { return weight.shape[1]; }
  std::size_t out_dim() const { return weight.shape[0]; }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  void init(Rng& rng, double range = 0.08);
};

struct BoundDense {
  Var weight, bias;
};

BoundDense bind(Tape& tape, Dense& layer);
Var dense(const BoundDense& layer, Var x);

}  // namespace dkrn::nn
