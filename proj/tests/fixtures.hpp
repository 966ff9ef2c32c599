// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Small model and corpus fixtures shared by the model-level tests.

#pragma once

#include "lptm/data.hpp"
#include "lptm/model.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace lptm::test {

inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.segmenter.hidden = 8;
  c.segmenter.score_dim = 8;
  c.segmenter.pos_dim = 4;
  c.segmenter.max_segment_length = 8;
  c.backbone.num_layers = 1;
  c.backbone.num_heads = 2;
  c.backbone.model_dim = 8;
  c.backbone.feedforward_dim = 16;
  c.forecast_decoder_layers = 1;
  return c;
}

inline std::vector<Real> sine_values(int t, Real period = 16.0, Real amplitude = 1.0, Real phase = 0.0) {
  std::vector<Real> v(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) v[static_cast<std::size_t>(k)] = amplitude * std::sin(2.0 * std::numbers::pi * k / period + phase);
  return v;
}

inline std::vector<Window> sine_batch(int count, int t) {
  std::vector<Window> out;
  for (int k = 0; k < count; ++k) out.push_back({sine_values(t, 12.0 + 2.0 * k, 1.0 + 0.1 * k, 0.3 * k), "sine"});
  return out;
}

/// Forecast-kind sine series with a 70/15/15 split.
inline std::vector<TimeSeries> sine_targets(int count, int t) {
  std::vector<TimeSeries> out;
  for (int k = 0; k < count; ++k) {
    TimeSeries s;
    s.id = "sine/" + std::to_string(k);
    s.domain_id = "sine";
    s.kind = SeriesKind::forecast;
    s.values = sine_values(t, 10.0 + 3.0 * k, 1.0, 0.5 * k);
    s.split = SplitSpec{0.7, 0.15, 0.15}.points(static_cast<std::size_t>(t));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lptm::test
