// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared transformer encoder over segment tokens. Bidirectional attention,
// no attention mask and no extra positional encoding (positions arrive with
// the tokens).

#pragma once

#include "lptm/core.hpp"
#include "lptm/layers.hpp"

#include <string>
#include <vector>

namespace lptm {

enum class NormPlacement { pre, post };

struct BackboneConfig {
  int num_layers = 2;
  int num_heads = 2;
  int model_dim = 64;
  int feedforward_dim = 128;
  Real dropout = 0.0;
  NormPlacement norm = NormPlacement::pre;

  /// Throws ConfigError unless model_dim is a positive multiple of num_heads.
  void validate() const;
};

template <typename S>
struct EncoderLayerParams {
  LayerNormParams<S> norm1, norm2;
  AttentionParams<S> attention;
  FeedForwardParams<S> feedforward;

  EncoderLayerParams() = default;
  EncoderLayerParams(const BackboneConfig& c, Rng& rng)
      : norm1(c.model_dim), norm2(c.model_dim), attention(c.model_dim, rng), feedforward(c.model_dim, c.feedforward_dim, rng) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm1.visit(prefix + "/norm1", f);
    attention.visit(prefix + "/attn", f);
    norm2.visit(prefix + "/norm2", f);
    feedforward.visit(prefix + "/ffn", f);
  }
};

template <typename S>
struct BackboneParams {
  std::vector<EncoderLayerParams<S>> layers;
  LayerNormParams<S> final_norm;  // used with pre-norm only

  BackboneParams() = default;
  BackboneParams(const BackboneConfig& c, Rng& rng) : final_norm(c.model_dim) {
    c.validate();
    for (int l = 0; l < c.num_layers; ++l) layers.emplace_back(c, rng);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit(prefix + "/layer" + std::to_string(l), f);
    final_norm.visit(prefix + "/final_norm", f);
  }
};

template <typename S>
Var<S> encoder_layer(Tape<S>& tape, EncoderLayerParams<S>& p, const Var<S>& x, const BackboneConfig& c, Rng* dropout_rng) {
  const S rate = static_cast<S>(c.dropout);
  if (c.norm == NormPlacement::pre) {
    const Var<S> h = apply(tape, p.norm1, x);
    const Var<S> x1 = ad::add(x, dropout(tape, multi_head_attention(tape, p.attention, h, h, c.num_heads), rate, dropout_rng));
    const Var<S> f = apply(tape, p.feedforward, apply(tape, p.norm2, x1));
    return ad::add(x1, dropout(tape, f, rate, dropout_rng));
  }
  const Var<S> a = multi_head_attention(tape, p.attention, x, x, c.num_heads);
  const Var<S> x1 = apply(tape, p.norm1, ad::add(x, dropout(tape, a, rate, dropout_rng)));
  const Var<S> f = apply(tape, p.feedforward, x1);
  return apply(tape, p.norm2, ad::add(x1, dropout(tape, f, rate, dropout_rng)));
}

/// Output embeddings o_1..o_R for R x D input tokens.
template <typename S>
Var<S> backbone_forward(Tape<S>& tape, BackboneParams<S>& p, const Var<S>& tokens, const BackboneConfig& c,
                        Rng* dropout_rng = nullptr) {
  Var<S> x = tokens;
  for (auto& layer : p.layers) x = encoder_layer(tape, layer, x, c, dropout_rng);
  if (c.norm == NormPlacement::pre) x = apply(tape, p.final_norm, x);
  return x;
}

}  // namespace lptm
