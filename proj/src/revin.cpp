// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/revin.hpp"

#include <cmath>

namespace lptm {

InstanceStats instance_stats(std::span<const Real> values, Real epsilon) {
  if (values.empty()) throw LengthError("instance normalization needs at least one value");
  Real total = 0.0;
  for (Real v : values) {
    if (!std::isfinite(v)) throw ValueError("instance normalization got a non-finite value");
    total += v;
  }
  const Real mean = total / static_cast<Real>(values.size());
  Real sq = 0.0;
  for (Real v : values) sq += (v - mean) * (v - mean);
  return InstanceStats{mean, std::sqrt(sq / static_cast<Real>(values.size())), epsilon};
}

std::pair<std::vector<Real>, InstanceStats> normalize(std::span<const Real> values, Real epsilon) {
  const InstanceStats stats = instance_stats(values, epsilon);
  std::vector<Real> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) out[k] = (values[k] - stats.mean) / stats.divisor();
  return {std::move(out), stats};
}

std::vector<Real> denormalize(std::span<const Real> values, const InstanceStats& stats) {
  std::vector<Real> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) out[k] = values[k] * stats.divisor() + stats.mean;
  return out;
}

}  // namespace lptm
