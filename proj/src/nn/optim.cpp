// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dkrn::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

bool Adam::step(double lr) {
  for (const auto* p : params_) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) {
        ++skipped_;
        return false;
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
  return true;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

double clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params) {
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (auto* p : params) {
      for (double& g : p->grad) g *= s;
    }
  }
  return norm;
}

double linear_decay_lr(std::size_t epoch, std::size_t decay_epochs, double lr_initial, double lr_final) {
  if (decay_epochs <= 1) return lr_initial;
  const double frac = static_cast<double>(std::min(epoch, decay_epochs - 1)) / static_cast<double>(decay_epochs - 1);
  return lr_initial + (lr_final - lr_initial) * frac;
}

}  // namespace dkrn::nn
