// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lptm/autodiff.hpp"
#include "lptm/core.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lptm {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

using NamedParam = std::pair<std::string, ad::Param<Real>*>;

/// Adam with per-parameter step counts, so a parameter group that is stepped
/// only occasionally gets its own bias correction. Only the parameters passed
/// to step() move; frozen (non-trainable) parameters are skipped.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<NamedParam>& params);
  const AdamConfig& config() const { return config_; }
  void set_lr(Real lr) { config_.lr = lr; }

 private:
  struct State {
    ad::Mat<Real> m, v;
    long steps = 0;
  };
  AdamConfig config_;
  std::map<std::string, State> state_;
};

}  // namespace lptm
