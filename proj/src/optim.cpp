// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/optim.hpp"

#include <cmath>

namespace lptm {

void Adam::step(const std::vector<NamedParam>& params) {
  if (config_.lr == 0.0) return;
  for (const auto& [name, p] : params) {
    if (!p->trainable || p->grad.size() == 0) continue;
    State& s = state_[name];
    if (s.m.size() == 0) {
      s.m.setZero(p->value.rows(), p->value.cols());
      s.v.setZero(p->value.rows(), p->value.cols());
    }
    ++s.steps;
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * p->grad;
    s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * p->grad.cwiseAbs2();
    const Real c1 = 1.0 - std::pow(config_.beta1, static_cast<Real>(s.steps));
    const Real c2 = 1.0 - std::pow(config_.beta2, static_cast<Real>(s.steps));
    p->value.array() -= config_.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace lptm
