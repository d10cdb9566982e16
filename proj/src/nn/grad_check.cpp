// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "dkrn/nn/optim.hpp"

namespace dkrn::nn {

namespace {

double evaluate(const LossFn& loss_fn) {
  Tape tape;
  return loss_fn(tape).item();
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss_fn, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }

  std::vector<std::pair<std::size_t, std::size_t>> components;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) components.emplace_back(p, i);
  }
  if (components.size() > options.max_components) {
    Rng rng(options.seed);
    shuffle(components, rng);
    components.resize(options.max_components);
    std::sort(components.begin(), components.end());
  }

  GradCheckReport report;
  for (const auto& [p, i] : components) {
    auto& param = *params[p];
    const double saved = param.value[i];
    param.value[i] = saved + options.step;
    const double up = evaluate(loss_fn);
    param.value[i] = saved - options.step;
    const double down = evaluate(loss_fn);
    param.value[i] = saved;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = param.grad[i];
    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
    const double rel = abs_err / denom;
    ++report.checked;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error || !std::isfinite(rel)) {
      report.max_rel_error = rel;
      report.worst = param.name + "[" + std::to_string(i) + "]";
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
    if (!(rel <= options.tolerance)) ++report.failures;
  }
  return report;
}

}  // namespace dkrn::nn
