// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-free forward passes over frozen parameters. Safe to call from many
// threads at once; the tape versions in layers.hpp are the ones that train.

#include <span>
#include <vector>

#include "dkrn/nn/layers.hpp"

namespace dkrn::nn {

std::vector<double> gru_step_forward(const GruCell& cell, std::span<const double> h_prev, std::span<const double> x);

/// Final state after running the cell over the rows `ids` of `embedding`.
std::vector<double> gru_encode_forward(const GruCell& cell, const Parameter& embedding,
                                       std::span<const std::size_t> ids);

std::vector<double> dense_forward(const Dense& layer, std::span<const double> x);

}  // namespace dkrn::nn
