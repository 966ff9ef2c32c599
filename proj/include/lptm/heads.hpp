// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Downstream heads. The forecast head is a stack of transformer decoder
// layers driven by K learned horizon queries that cross-attend to the
// backbone outputs; a linear map emits one normalized value per step. The
// classification head mean-pools the outputs into one linear layer.

#pragma once

#include "lptm/backbone.hpp"
#include "lptm/core.hpp"
#include "lptm/layers.hpp"
#include "lptm/revin.hpp"

#include <string>
#include <vector>

namespace lptm {

struct ForecastHeadConfig {
  int decoder_layers = 4;
  int horizon = 1;

  void validate() const;
};

struct ClassifyHeadConfig {
  int num_classes = 2;

  void validate() const;
};

template <typename S>
struct DecoderLayerParams {
  LayerNormParams<S> norm1, norm2, norm3;
  AttentionParams<S> self_attention, cross_attention;
  FeedForwardParams<S> feedforward;

  DecoderLayerParams() = default;
  DecoderLayerParams(int dim, int ff_dim, Rng& rng)
      : norm1(dim), norm2(dim), norm3(dim), self_attention(dim, rng), cross_attention(dim, rng), feedforward(dim, ff_dim, rng) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm1.visit(prefix + "/norm1", f);
    self_attention.visit(prefix + "/self_attn", f);
    norm2.visit(prefix + "/norm2", f);
    cross_attention.visit(prefix + "/cross_attn", f);
    norm3.visit(prefix + "/norm3", f);
    feedforward.visit(prefix + "/ffn", f);
  }
};

template <typename S>
struct ForecastHeadParams {
  Param<S> queries;  // K x D
  std::vector<DecoderLayerParams<S>> layers;
  LayerNormParams<S> final_norm;
  LinearParams<S> output;  // D -> 1

  ForecastHeadParams() = default;
  ForecastHeadParams(const ForecastHeadConfig& c, const BackboneConfig& b, Rng& rng)
      : queries(uniform_matrix<S>(c.horizon, b.model_dim, S(1), rng)), final_norm(b.model_dim), output() {
    c.validate();
    for (int l = 0; l < c.decoder_layers; ++l) layers.emplace_back(b.model_dim, b.feedforward_dim, rng);
    output = LinearParams<S>(b.model_dim, 1, rng);
  }

  int horizon() const { return static_cast<int>(queries.value.rows()); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/queries", queries);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit(prefix + "/layer" + std::to_string(l), f);
    final_norm.visit(prefix + "/final_norm", f);
    output.visit(prefix + "/output", f);
  }
};

/// K x 1 forecast in normalized units.
template <typename S>
Var<S> forecast_normalized(Tape<S>& tape, ForecastHeadParams<S>& p, const Var<S>& outputs, int heads) {
  Var<S> q = tape.leaf(p.queries);
  for (auto& layer : p.layers) {
    const Var<S> h1 = apply(tape, layer.norm1, q);
    q = ad::add(q, multi_head_attention(tape, layer.self_attention, h1, h1, heads));
    q = ad::add(q, multi_head_attention(tape, layer.cross_attention, apply(tape, layer.norm2, q), outputs, heads));
    q = ad::add(q, apply(tape, layer.feedforward, apply(tape, layer.norm3, q)));
  }
  return apply(tape, p.output, apply(tape, p.final_norm, q));
}

/// K x 1 forecast in the input's original units (instance normalization reversed).
template <typename S>
Var<S> forecast(Tape<S>& tape, ForecastHeadParams<S>& p, RevinParams<S>& revin, const Var<S>& outputs,
                const NormalizedInput<S>& input, int heads) {
  return revin_denormalize(tape, revin, forecast_normalized(tape, p, outputs, heads), input);
}

template <typename S>
struct ClassifyHeadParams {
  LinearParams<S> layer;

  ClassifyHeadParams() = default;
  ClassifyHeadParams(const ClassifyHeadConfig& c, int model_dim, Rng& rng) : layer(model_dim, c.num_classes, rng) {
    c.validate();
  }

  int num_classes() const { return static_cast<int>(layer.weight.value.cols()); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    layer.visit(prefix + "/linear", f);
  }
};

/// 1 x C logits from mean-pooled outputs.
template <typename S>
Var<S> classify(Tape<S>& tape, ClassifyHeadParams<S>& p, const Var<S>& outputs) {
  return apply(tape, p.layer, ad::col_mean(outputs));
}

std::vector<Real> softmax(std::span<const Real> logits);

}  // namespace lptm
