// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/inference.hpp"

#include <cmath>

#include "dkrn/error.hpp"

namespace dkrn::nn {

namespace {

// y = W [a; b] + bias for W of shape (rows, |a| + |b|).
void affine2(const Parameter& w, const Parameter& bias, std::span<const double> a, std::span<const double> b,
             std::vector<double>& y) {
  const std::size_t rows = w.shape[0], cols = w.shape[1];
  y.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.value.data() + i * cols;
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) s += row[j] * a[j];
    for (std::size_t j = 0; j < b.size(); ++j) s += row[a.size() + j] * b[j];
    y[i] = s + bias.value[i];
  }
}

}  // namespace

std::vector<double> gru_step_forward(const GruCell& cell, std::span<const double> h, std::span<const double> x) {
  if (h.size() != cell.hidden_dim || x.size() != cell.input_dim) {
    throw ShapeError("gru_step: input " + std::to_string(x.size()) + "/hidden " + std::to_string(h.size()) +
                     " for cell (" + std::to_string(cell.input_dim) + "," + std::to_string(cell.hidden_dim) + ")");
  }
  const std::size_t n = cell.hidden_dim;
  std::vector<double> z, r, cand, rh(n);
  affine2(cell.wz, cell.bz, x, h, z);
  affine2(cell.wr, cell.br, x, h, r);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
    rh[i] = r[i] * h[i];
  }
  affine2(cell.wh, cell.bh, x, rh, cand);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(cand[i]);
  return out;
}

std::vector<double> gru_encode_forward(const GruCell& cell, const Parameter& embedding,
                                       std::span<const std::size_t> ids) {
  const std::size_t dim = embedding.shape.at(1);
  std::vector<double> h(cell.hidden_dim, 0.0);
  for (auto id : ids) {
    if (id >= embedding.shape[0]) throw ShapeError("token id out of range for " + embedding.name);
    h = gru_step_forward(cell, h, std::span<const double>(embedding.value.data() + id * dim, dim));
  }
  return h;
}

std::vector<double> dense_forward(const Dense& layer, std::span<const double> x) {
  if (x.size() != layer.in_dim()) {
    throw ShapeError("dense: input " + std::to_string(x.size()) + " for layer " + layer.weight.name + " " +
                     shape_str(layer.weight.shape));
  }
  const std::size_t rows = layer.out_dim(), cols = layer.in_dim();
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = layer.weight.value.data() + i * cols;
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] = s + layer.bias.value[i];
  }
  return y;
}

}  // namespace dkrn::nn
