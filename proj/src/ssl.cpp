// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/ssl.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

std::string to_string(MaskTask task) { return task == MaskTask::randmask ? "randmask" : "lastmask"; }

std::vector<bool> MaskPlan::flags() const {
  std::vector<bool> out(static_cast<std::size_t>(token_count), false);
  for (int pos : masked) out[static_cast<std::size_t>(pos - 1)] = true;
  return out;
}

MaskPlan plan_randmask(int token_count, Real gamma, Rng& rng) {
  if (token_count < 1) throw DomainError("mask plan needs at least one token");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("randmask gamma must lie in [0, 1]");
  MaskPlan plan{MaskTask::randmask, gamma, token_count, {}, false};
  for (int k = 1; k <= token_count; ++k) {
    if (rng.bernoulli(gamma)) plan.masked.push_back(k);
  }
  if (plan.masked.empty()) {
    plan.masked.push_back(1);
    plan.fallback = true;
  }
  return plan;
}

MaskPlan plan_randmask(int token_count, Real gamma, std::uint64_t seed) {
  Rng rng(seed);
  return plan_randmask(token_count, gamma, rng);
}

int lastmask_count(int token_count, Real gamma) {
  const Real product = gamma * static_cast<Real>(token_count);
  const int count = static_cast<int>(std::ceil(product - 1e-9 * std::max(1.0, product)));
  return std::clamp(count, 1, token_count);
}

MaskPlan plan_lastmask(int token_count, Real gamma) {
  if (token_count < 1) throw DomainError("mask plan needs at least one token");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("lastmask gamma must lie in (0, 1]");
  MaskPlan plan{MaskTask::lastmask, gamma, token_count, {}, false};
  const int count = lastmask_count(token_count, gamma);
  for (int k = token_count - count + 1; k <= token_count; ++k) plan.masked.push_back(k);
  return plan;
}

Real score_loss_value(Real sum_scores, Real loss_ssl) {
  const Real r = sum_scores + std::log(loss_ssl + kScoreLogEpsilon);
  return r * r;
}

}  // namespace lptm
