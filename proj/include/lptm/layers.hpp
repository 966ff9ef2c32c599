// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Parameter blocks and forward functions for the standard layers. Each block
// exposes visit(prefix, fn) which enumerates (name, Param&) pairs; that
// enumeration order is the checkpoint order.

#pragma once

#include "lptm/autodiff.hpp"
#include "lptm/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace lptm {

using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

template <typename S>
Mat<S> uniform_matrix(Eigen::Index rows, Eigen::Index cols, S bound, Rng& rng) {
  Mat<S> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
  }
  return m;
}

template <typename S>
struct LinearParams {
  Param<S> weight;  // in x out
  Param<S> bias;    // 1 x out

  LinearParams() = default;
  LinearParams(Eigen::Index in, Eigen::Index out, Rng& rng)
      : weight(uniform_matrix<S>(in, out, S(1) / std::sqrt(S(in)), rng)), bias(Mat<S>::Zero(1, out)) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/weight", weight);
    f(prefix + "/bias", bias);
  }
};

template <typename S>
Var<S> apply(Tape<S>& tape, LinearParams<S>& p, const Var<S>& x) {
  return ad::linear(x, tape.leaf(p.weight), tape.leaf(p.bias));
}

template <typename S>
struct LayerNormParams {
  Param<S> gain;
  Param<S> bias;

  LayerNormParams() = default;
  explicit LayerNormParams(Eigen::Index dim) : gain(Mat<S>::Ones(1, dim)), bias(Mat<S>::Zero(1, dim)) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/gain", gain);
    f(prefix + "/bias", bias);
  }
};

template <typename S>
Var<S> apply(Tape<S>& tape, LayerNormParams<S>& p, const Var<S>& x) {
  return ad::layer_norm_rows(x, tape.leaf(p.gain), tape.leaf(p.bias));
}

/// Single-layer GRU, gate order (reset, update, new).
template <typename S>
struct GruParams {
  Param<S> w_ih;  // in x 3h
  Param<S> b_ih;  // 1 x 3h
  Param<S> w_hh;  // h x 3h
  Param<S> b_hh;  // 1 x 3h

  GruParams() = default;
  GruParams(Eigen::Index in, Eigen::Index hidden, Rng& rng) {
    const S bound = S(1) / std::sqrt(S(hidden));
    w_ih = Param<S>(uniform_matrix<S>(in, 3 * hidden, bound, rng));
    b_ih = Param<S>(uniform_matrix<S>(1, 3 * hidden, bound, rng));
    w_hh = Param<S>(uniform_matrix<S>(hidden, 3 * hidden, bound, rng));
    b_hh = Param<S>(uniform_matrix<S>(1, 3 * hidden, bound, rng));
  }

  Eigen::Index hidden_size() const { return w_hh.value.rows(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/w_ih", w_ih);
    f(prefix + "/b_ih", b_ih);
    f(prefix + "/w_hh", w_hh);
    f(prefix + "/b_hh", b_hh);
  }
};

/// Runs the GRU over the rows of `inputs` (t x in) from a zero state and
/// returns the t x h hidden sequence.
template <typename S>
Var<S> gru_sequence(Tape<S>& tape, GruParams<S>& p, const Var<S>& inputs) {
  const Var<S> gates = ad::linear(inputs, tape.leaf(p.w_ih), tape.leaf(p.b_ih));
  const Var<S> w_hh = tape.leaf(p.w_hh);
  const Var<S> b_hh = tape.leaf(p.b_hh);
  Var<S> h = tape.constant(Mat<S>::Zero(1, p.hidden_size()));
  std::vector<Var<S>> states;
  states.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    h = ad::gru_step(ad::slice_rows(gates, k, 1), h, w_hh, b_hh);
    states.push_back(h);
  }
  return ad::concat_rows<S>(states);
}

template <typename S>
struct AttentionParams {
  LinearParams<S> query, key, value, out;

  AttentionParams() = default;
  AttentionParams(Eigen::Index dim, Rng& rng)
      : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), out(dim, dim, rng) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    query.visit(prefix + "/query", f);
    key.visit(prefix + "/key", f);
    value.visit(prefix + "/value", f);
    out.visit(prefix + "/out", f);
  }
};

/// Scaled dot-product attention with `heads` heads; queries from xq, keys and
/// values from xkv. No attention mask.
template <typename S>
Var<S> multi_head_attention(Tape<S>& tape, AttentionParams<S>& p, const Var<S>& xq, const Var<S>& xkv, int heads) {
  const Var<S> q = apply(tape, p.query, xq);
  const Var<S> k = apply(tape, p.key, xkv);
  const Var<S> v = apply(tape, p.value, xkv);
  const Eigen::Index dim = q.cols();
  const Eigen::Index head_dim = dim / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim));
  std::vector<Var<S>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var<S> qh = ad::slice_cols(q, h * head_dim, head_dim);
    const Var<S> kh = ad::slice_cols(k, h * head_dim, head_dim);
    const Var<S> vh = ad::slice_cols(v, h * head_dim, head_dim);
    const Var<S> weights = ad::softmax_rows(ad::scale(ad::matmul_bt(qh, kh), inv_sqrt));
    outs.push_back(ad::matmul(weights, vh));
  }
  const Var<S> merged = heads == 1 ? outs.front() : ad::concat_cols<S>(outs);
  return apply(tape, p.out, merged);
}

template <typename S>
struct FeedForwardParams {
  LinearParams<S> inner, outer;

  FeedForwardParams() = default;
  FeedForwardParams(Eigen::Index dim, Eigen::Index hidden, Rng& rng) : inner(dim, hidden, rng), outer(hidden, dim, rng) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    inner.visit(prefix + "/inner", f);
    outer.visit(prefix + "/outer", f);
  }
};

template <typename S>
Var<S> apply(Tape<S>& tape, FeedForwardParams<S>& p, const Var<S>& x) {
  return apply(tape, p.outer, ad::gelu(apply(tape, p.inner, x)));
}

/// Inverted dropout; identity when rng is null or rate is 0.
template <typename S>
Var<S> dropout(Tape<S>& tape, const Var<S>& x, S rate, Rng* rng) {
  if (rng == nullptr || rate <= S(0)) return x;
  Mat<S> keep(x.rows(), x.cols());
  const S kept_scale = S(1) / (S(1) - rate);
  for (Eigen::Index k = 0; k < keep.size(); ++k) keep(k) = rng->bernoulli(rate) ? S(0) : kept_scale;
  return ad::mul(x, tape.constant(std::move(keep)));
}

}  // namespace lptm
