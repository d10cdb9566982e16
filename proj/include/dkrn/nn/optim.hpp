// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "dkrn/nn/tape.hpp"

namespace dkrn::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter in the order the
/// parameters were given.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  /// Applies one update with learning rate lr from the current grads.
  /// A non-finite gradient anywhere skips the whole update and bumps
  /// skipped(); returns whether the update was applied.
  bool step(double lr);

  std::size_t steps() const { return steps_; }
  std::size_t skipped() const { return skipped_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
  std::size_t skipped_ = 0;
};

void zero_grads(const std::vector<Parameter*>& params);

/// Rescales all grads so their joint L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

/// Linear decay from lr_initial at epoch 0 to lr_final at epoch
/// decay_epochs - 1, constant afterwards. decay_epochs <= 1 means no decay.
double linear_decay_lr(std::size_t epoch, std::size_t decay_epochs, double lr_initial, double lr_final);

}  // namespace dkrn::nn
