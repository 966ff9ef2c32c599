// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/heads.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

void BackboneConfig::validate() const {
  if (num_layers < 0) throw ConfigError("backbone num_layers must be non-negative");
  if (num_heads < 1 || model_dim < 1 || model_dim % num_heads != 0) {
    throw ConfigError("model_dim must be a positive multiple of num_heads");
  }
  if (feedforward_dim < 1) throw ConfigError("feedforward_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

void ForecastHeadConfig::validate() const {
  if (horizon < 1) throw DomainError("forecast horizon K must be at least 1");
  if (decoder_layers < 0) throw ConfigError("decoder_layers must be non-negative");
}

void ClassifyHeadConfig::validate() const {
  if (num_classes < 2) throw ConfigError("classification needs at least 2 classes");
}

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const Real m = *std::max_element(out.begin(), out.end());
  Real total = 0.0;
  for (Real& v : out) {
    v = std::exp(v - m);
    total += v;
  }
  for (Real& v : out) v /= total;
  return out;
}

}  // namespace lptm
