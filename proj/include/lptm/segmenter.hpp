// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Per-domain adaptive segmentation.
//
//   encode          GRU over the normalized series -> hidden rows z_1..z_t
//   get_scores      s(i,j) = v . tanh(W1 z_i + W2 z_j + b), j - i <= max_len
//   choose_segments best end per start, then greedy removal of the
//                   lowest-scoring segment while coverage of 1..t survives
//   embed_segments  single-head self-attention over z_i..z_j summed into one
//                   row, projected to the model width and joined with the
//                   sinusoidal features of the start and the length

#pragma once

#include "lptm/core.hpp"
#include "lptm/layers.hpp"

#include <limits>
#include <span>
#include <vector>

namespace lptm {

enum class PruneBy { score, end_index };

struct ChooseOptions {
  PruneBy prune_by = PruneBy::score;
  bool exhaustive = false;
};

struct SegmenterConfig {
  int hidden = 50;
  int score_dim = 50;
  int pos_dim = 16;
  int model_dim = 64;
  int max_segment_length = 64;  // cap on j - i; effective value is min(t - 1, cap)
};

/// Upper-triangular score table restricted to j - i <= max_len.
class SegmentScores {
 public:
  SegmentScores() = default;
  SegmentScores(int series_length, int max_len);

  int series_length() const { return t_; }
  int max_len() const { return max_len_; }
  /// Largest admissible end for a 1-based start.
  int last_end(int start) const { return std::min(start + max_len_, t_); }
  bool has(int i, int j) const { return i >= 1 && i < j && j <= last_end(i); }
  Real at(int i, int j) const { return table_[index(i, j)]; }
  void set(int i, int j, Real s) { table_[index(i, j)] = s; }

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(max_len_) + static_cast<std::size_t>(j - i - 1);
  }

  int t_ = 0;
  int max_len_ = 0;
  std::vector<Real> table_;
};

int effective_max_len(int series_length, int cap);

/// Best end per start (ties to the smaller end), then pruning.
SegmentSet choose_segments(const SegmentScores& scores, const ChooseOptions& options = {});

/// Uniform patches of length p; the final patch is anchored at t so every
/// patch keeps length p (when p <= t). Produces exactly ceil(t / p) segments.
SegmentSet fixed_patches(int series_length, int patch_length);

/// Sinusoidal features: even d -> sin(pos / 10^(5d/D)), odd d -> cos(pos / 10^(5(d-1)/D)).
std::vector<Real> positional_encoding(int position, int dim);

template <typename S>
struct SegmenterParams {
  GruParams<S> gru;
  Param<S> w1, w2, b, v;                   // score function
  Param<S> attn_query, attn_key, attn_value;  // token self-attention
  Param<S> content;                        // hidden -> model_dim
  Param<S> positional;                     // 2 * pos_dim -> model_dim
  Param<S> token_bias;                     // 1 x model_dim

  SegmenterParams() = default;
  SegmenterParams(const SegmenterConfig& c, Rng& rng) : gru(1, c.hidden, rng) {
    const S hb = S(1) / std::sqrt(S(c.hidden));
    w1 = Param<S>(uniform_matrix<S>(c.hidden, c.score_dim, hb, rng));
    w2 = Param<S>(uniform_matrix<S>(c.hidden, c.score_dim, hb, rng));
    b = Param<S>(Mat<S>::Zero(1, c.score_dim));
    v = Param<S>(uniform_matrix<S>(c.score_dim, 1, S(1) / std::sqrt(S(c.score_dim)), rng));
    attn_query = Param<S>(uniform_matrix<S>(c.hidden, c.hidden, hb, rng));
    attn_key = Param<S>(uniform_matrix<S>(c.hidden, c.hidden, hb, rng));
    attn_value = Param<S>(uniform_matrix<S>(c.hidden, c.hidden, hb, rng));
    content = Param<S>(uniform_matrix<S>(c.hidden, c.model_dim, hb, rng));
    positional = Param<S>(uniform_matrix<S>(2 * c.pos_dim, c.model_dim, S(1) / std::sqrt(S(2 * c.pos_dim)), rng));
    token_bias = Param<S>(Mat<S>::Zero(1, c.model_dim));
  }

  int hidden_size() const { return static_cast<int>(gru.hidden_size()); }
  int pos_dim() const { return static_cast<int>(positional.value.rows() / 2); }

  /// Parameters trained only through the score loss.
  template <typename F>
  void visit_score(const std::string& prefix, F&& f) {
    f(prefix + "/score/w1", w1);
    f(prefix + "/score/w2", w2);
    f(prefix + "/score/b", b);
    f(prefix + "/score/v", v);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    gru.visit(prefix + "/gru", f);
    visit_score(prefix, f);
    f(prefix + "/attn/query", attn_query);
    f(prefix + "/attn/key", attn_key);
    f(prefix + "/attn/value", attn_value);
    f(prefix + "/token/content", content);
    f(prefix + "/token/positional", positional);
    f(prefix + "/token/bias", token_bias);
  }
};

/// Hidden rows z_1..z_t (t x H) for a t x 1 normalized input.
template <typename S>
Var<S> encode(Tape<S>& tape, SegmenterParams<S>& p, const Var<S>& normalized) {
  return gru_sequence(tape, p.gru, normalized);
}

template <typename S>
SegmentScores get_scores(const Mat<S>& hidden, const SegmenterParams<S>& p, int max_len) {
  const int t = static_cast<int>(hidden.rows());
  SegmentScores scores(t, max_len);
  const Mat<S> left = hidden * p.w1.value;
  Mat<S> right = hidden * p.w2.value;
  right.rowwise() += p.b.value.row(0);
  const Eigen::Matrix<S, Eigen::Dynamic, 1> v = p.v.value.col(0);
  Eigen::Array<S, 1, Eigen::Dynamic> pre(left.cols());
  for (int i = 1; i < t; ++i) {
    for (int j = i + 1; j <= scores.last_end(i); ++j) {
      pre = left.row(i - 1).array() + right.row(j - 1).array();
      scores.set(i, j, static_cast<Real>(pre.tanh().matrix().dot(v.transpose())));
    }
  }
  return scores;
}

/// Differentiable scores of the given segments (R x 1).
template <typename S>
Var<S> segment_scores(Tape<S>& tape, SegmenterParams<S>& p, const Var<S>& hidden, std::span<const Segment> segments) {
  std::vector<Eigen::Index> starts, ends;
  for (const auto& s : segments) {
    starts.push_back(s.start - 1);
    ends.push_back(s.end - 1);
  }
  const Var<S> left = ad::gather_rows(ad::matmul(hidden, tape.leaf(p.w1)), std::move(starts));
  const Var<S> right = ad::gather_rows(ad::linear(hidden, tape.leaf(p.w2), tape.leaf(p.b)), std::move(ends));
  return ad::matmul(ad::tanh(ad::add(left, right)), tape.leaf(p.v));
}

/// Token rows split into a content part and a positional part; the backbone
/// consumes content + positional. Masking replaces content rows only, so a
/// masked token keeps the position and length of its segment.
template <typename S>
struct TokenSequence {
  Var<S> content;     // R x D
  Var<S> positional;  // R x D
  SegmentSet segments;
  std::vector<bool> mask_flags;

  std::size_t size() const { return segments.size(); }
  Var<S> tokens() const { return ad::add(content, positional); }
};

/// Summed self-attention output per segment (R x H), before projection.
template <typename S>
Var<S> segment_attention(Tape<S>& tape, SegmenterParams<S>& p, const Var<S>& hidden, const SegmentSet& segments) {
  const Var<S> q = ad::matmul(hidden, tape.leaf(p.attn_query));
  const Var<S> k = ad::matmul(hidden, tape.leaf(p.attn_key));
  const Var<S> v = ad::matmul(hidden, tape.leaf(p.attn_value));
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(hidden.cols()));
  std::vector<Var<S>> rows;
  rows.reserve(segments.size());
  for (const auto& seg : segments.segments()) {
    const Eigen::Index at = seg.start - 1, len = seg.length();
    const Var<S> qs = ad::slice_rows(q, at, len);
    const Var<S> ks = ad::slice_rows(k, at, len);
    const Var<S> vs = ad::slice_rows(v, at, len);
    const Var<S> weights = ad::softmax_rows(ad::scale(ad::matmul_bt(qs, ks), inv_sqrt));
    rows.push_back(ad::col_sum(ad::matmul(weights, vs)));
  }
  return ad::concat_rows<S>(rows);
}

/// R x 2*pos_dim matrix of [pos(start), pos(end - start)] per segment.
template <typename S>
Mat<S> segment_position_features(std::span<const Segment> segments, int pos_dim) {
  Mat<S> features(static_cast<Eigen::Index>(segments.size()), 2 * pos_dim);
  for (std::size_t r = 0; r < segments.size(); ++r) {
    const auto at = positional_encoding(segments[r].start, pos_dim);
    const auto len = positional_encoding(segments[r].end - segments[r].start, pos_dim);
    for (int d = 0; d < pos_dim; ++d) {
      features(static_cast<Eigen::Index>(r), d) = static_cast<S>(at[d]);
      features(static_cast<Eigen::Index>(r), pos_dim + d) = static_cast<S>(len[d]);
    }
  }
  return features;
}

/// Positional part of the token projection for arbitrary segments (these may
/// extend past the series, as for forecast placeholders).
template <typename S>
Var<S> positional_tokens(Tape<S>& tape, SegmenterParams<S>& p, std::span<const Segment> segments) {
  const Var<S> features = tape.constant(segment_position_features<S>(segments, p.pos_dim()));
  return ad::linear(features, tape.leaf(p.positional), tape.leaf(p.token_bias));
}

template <typename S>
TokenSequence<S> embed_segments(Tape<S>& tape, SegmenterParams<S>& p, const Var<S>& hidden, SegmentSet segments) {
  TokenSequence<S> out;
  out.content = ad::matmul(segment_attention(tape, p, hidden, segments), tape.leaf(p.content));
  out.positional = positional_tokens(tape, p, segments.segments());
  out.mask_flags.assign(segments.size(), false);
  out.segments = std::move(segments);
  return out;
}

}  // namespace lptm
