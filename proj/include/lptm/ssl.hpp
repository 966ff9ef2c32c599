// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Self-supervised objectives: random and trailing token masking, GRU decoding
// of masked segments, and the score-function loss.

#pragma once

#include "lptm/core.hpp"
#include "lptm/layers.hpp"
#include "lptm/segmenter.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace lptm {

enum class MaskTask { randmask, lastmask };

std::string to_string(MaskTask task);

struct MaskPlan {
  MaskTask task = MaskTask::randmask;
  Real gamma = 0.0;
  int token_count = 0;
  std::vector<int> masked;  // 1-based token positions, ascending
  bool fallback = false;    // randmask drew nothing and token 1 was forced

  std::vector<bool> flags() const;
  bool empty() const { return masked.empty(); }
};

/// Each token masked independently with probability gamma; if nothing is
/// drawn, token 1 is masked. Throws DomainError for gamma outside [0, 1].
MaskPlan plan_randmask(int token_count, Real gamma, Rng& rng);
MaskPlan plan_randmask(int token_count, Real gamma, std::uint64_t seed);

/// Masks exactly ceil(gamma * R) trailing tokens. Throws DomainError unless 0 < gamma <= 1.
MaskPlan plan_lastmask(int token_count, Real gamma);

/// ceil(gamma * R) with a relative guard against products like 0.1 * 30 landing one ulp above an integer.
int lastmask_count(int token_count, Real gamma);

/// Replaces the content rows of masked tokens with the mask embedding (1 x D).
template <typename S>
TokenSequence<S> apply_mask(const TokenSequence<S>& tokens, const MaskPlan& plan, const Var<S>& mask_embedding) {
  TokenSequence<S> out = tokens;
  if (plan.empty()) return out;
  out.mask_flags = plan.flags();
  out.content = ad::replace_rows(tokens.content, out.mask_flags, mask_embedding);
  return out;
}

enum class DecoderFeedback { free_running, teacher_forced };

/// Single-hidden-layer GRU decoder: the hidden state starts at the output
/// embedding of the masked token and one scalar is emitted per step.
template <typename S>
struct DecoderParams {
  GruParams<S> gru;
  LinearParams<S> readout;

  DecoderParams() = default;
  DecoderParams(int model_dim, Rng& rng) : gru(1, model_dim, rng), readout(model_dim, 1, rng) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    gru.visit(prefix + "/gru", f);
    readout.visit(prefix + "/readout", f);
  }
};

/// Unrolls the decoder for `steps` steps from `init` (m x D); returns m x steps.
/// With teacher forcing, column k of `teacher` (m x steps) is the input to step k + 1.
template <typename S>
Var<S> decode_sequences(Tape<S>& tape, DecoderParams<S>& p, const Var<S>& init, int steps, DecoderFeedback feedback,
                        const Mat<S>* teacher = nullptr) {
  const Var<S> w_ih = tape.leaf(p.gru.w_ih);
  const Var<S> b_ih = tape.leaf(p.gru.b_ih);
  const Var<S> w_hh = tape.leaf(p.gru.w_hh);
  const Var<S> b_hh = tape.leaf(p.gru.b_hh);
  const Var<S> w_out = tape.leaf(p.readout.weight);
  const Var<S> b_out = tape.leaf(p.readout.bias);
  Var<S> input = tape.constant(Mat<S>::Zero(init.rows(), 1));
  Var<S> h = init;
  std::vector<Var<S>> emitted;
  emitted.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    h = ad::gru_step(ad::linear(input, w_ih, b_ih), h, w_hh, b_hh);
    const Var<S> y = ad::linear(h, w_out, b_out);
    emitted.push_back(y);
    if (feedback == DecoderFeedback::teacher_forced && teacher != nullptr) {
      input = tape.constant(teacher->col(k));
    } else {
      input = y;
    }
  }
  return ad::concat_cols<S>(emitted);
}

struct SSLOutcome {
  Real loss_ssl = 0.0;
  std::vector<Real> segment_losses;  // per masked token, in plan order
  Real loss_g = 0.0;
  bool degenerate = false;  // no masked token; loss_ssl is 0 by convention
};

template <typename S>
struct DecodeResult {
  Var<S> loss;         // 1 x 1 masked-position MSE
  Var<S> predictions;  // m x max masked length
  SSLOutcome outcome;
};

/// Decodes every masked token of `plan` and scores it against the normalized
/// truth. The MSE runs over masked time-steps only.
template <typename S>
DecodeResult<S> decode_masked(Tape<S>& tape, DecoderParams<S>& p, const Var<S>& outputs, const SegmentSet& segments,
                              const MaskPlan& plan, std::span<const Real> normalized_truth,
                              DecoderFeedback feedback = DecoderFeedback::free_running) {
  DecodeResult<S> result;
  if (plan.empty()) {
    result.loss = tape.scalar(S(0));
    result.outcome.degenerate = true;
    return result;
  }
  std::vector<Eigen::Index> rows;
  int steps = 0;
  for (int pos : plan.masked) {
    rows.push_back(pos - 1);
    steps = std::max(steps, segments[static_cast<std::size_t>(pos - 1)].length());
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Mat<S> target = Mat<S>::Zero(m, steps);
  Mat<S> weight = Mat<S>::Zero(m, steps);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Segment& seg = segments[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
    for (int k = 0; k < seg.length(); ++k) {
      target(r, k) = static_cast<S>(normalized_truth[static_cast<std::size_t>(seg.start - 1 + k)]);
      weight(r, k) = S(1);
    }
  }
  const Var<S> init = ad::gather_rows(outputs, std::move(rows));
  result.predictions = decode_sequences(tape, p, init, steps, feedback, &target);
  const Mat<S>& pred = result.predictions.value();
  for (Eigen::Index r = 0; r < m; ++r) {
    const S n = weight.row(r).sum();
    result.outcome.segment_losses.push_back(
        static_cast<Real>((weight.row(r).array() * (pred.row(r) - target.row(r)).array().square()).sum() / n));
  }
  result.loss = ad::weighted_mse(result.predictions, std::move(target), std::move(weight));
  result.outcome.loss_ssl = static_cast<Real>(result.loss.scalar());
  return result;
}

inline constexpr Real kScoreLogEpsilon = 1e-8;

/// (sum_scores + log(loss_ssl + eps))^2 in closed form.
Real score_loss_value(Real sum_scores, Real loss_ssl);

/// Differentiable score loss; loss_ssl enters as a constant.
template <typename S>
Var<S> score_loss(const Var<S>& segment_scores, Real loss_ssl) {
  const S target = static_cast<S>(std::log(loss_ssl + kScoreLogEpsilon));
  return ad::square(ad::affine(ad::sum(segment_scores), S(1), target));
}

}  // namespace lptm
