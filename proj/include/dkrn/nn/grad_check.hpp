// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dkrn/nn/tape.hpp"

namespace dkrn::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Check every component when the total is at most this, otherwise a
  /// seeded random sample of this many components.
  std::size_t max_components = 400;
  /// Floor on the relative-error denominator so components whose true
  /// gradient is ~0 are judged on absolute error.
  double denominator_floor = 1e-5;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  // "param[index]" of the largest relative error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed() const { return failures == 0; }
};

/// Builds the scalar loss on a fresh tape. Must be deterministic.
using LossFn = std::function<Var(Tape&)>;

/// Compares the analytic gradient from one backward pass with central
/// differences (f(x+h) - f(x-h)) / 2h. Failures are reported, not thrown.
/// Parameter gradients are zeroed and left holding the analytic gradient.
GradCheckReport grad_check(const LossFn& loss_fn, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

}  // namespace dkrn::nn
