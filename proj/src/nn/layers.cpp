// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/layers.hpp"

#include "dkrn/error.hpp"

namespace dkrn::nn {

GruCell::GruCell(const std::string& prefix, std::size_t in, std::size_t hidden)
    : input_dim(in),
      hidden_dim(hidden),
      wz(prefix + ".wz", {hidden, in + hidden}),
      wr(prefix + ".wr", {hidden, in + hidden}),
      wh(prefix + ".wh", {hidden, in + hidden}),
      bz(prefix + ".bz", {hidden}),
      br(prefix + ".br", {hidden}),
      bh(prefix + ".bh", {hidden}) {}

std::vector<Parameter*> GruCell::parameters() { return {&wz, &wr, &wh, &bz, &br, &bh}; }

void GruCell::init(Rng& rng, double range) {
  for (auto* p : parameters()) init_uniform(*p, rng, range);
}

BoundGru bind(Tape& tape, GruCell& cell) {
  return BoundGru{tape.param(cell.wz), tape.param(cell.wr), tape.param(cell.wh),
                  tape.param(cell.bz), tape.param(cell.br), tape.param(cell.bh), cell.hidden_dim};
}

Var gru_step(const BoundGru& cell, Var h_prev, Var x) {
  if (h_prev.size() != cell.hidden_dim) {
    throw ShapeError("gru_step: hidden state " + shape_str(h_prev.shape()) + " for hidden_dim " +
                     std::to_string(cell.hidden_dim));
  }
  const Var xh = concat(x, h_prev);
  const Var z = sigmoid(add(matmul(cell.wz, xh), cell.bz));
  const Var r = sigmoid(add(matmul(cell.wr, xh), cell.br));
  const Var xrh = concat(x, hadamard(r, h_prev));
  const Var cand = tanh(add(matmul(cell.wh, xrh), cell.bh));
  return add(hadamard(one_minus(z), h_prev), hadamard(z, cand));
}

Var gru_encode(Tape& tape, const BoundGru& cell, std::span<const Var> xs) {
  Var h = tape.constant(std::vector<double>(cell.hidden_dim, 0.0));
  for (const auto& x : xs) h = gru_step(cell, h, x);
  return h;
}

Dense::Dense(const std::string& prefix, std::size_t in, std::size_t out)
    : weight(prefix + ".weight", {out, in}), bias(prefix + ".bias", {out}) {}

void Dense::init(Rng& rng, double range) {
  init_uniform(weight, rng, range);
  init_uniform(bias, rng, range);
}

BoundDense bind(Tape& tape, Dense& layer) { return {tape.param(layer.weight), tape.param(layer.bias)}; }

Var dense(const BoundDense& layer, Var x) { return add(matmul(layer.weight, x), layer.bias); }

}  // namespace dkrn::nn
