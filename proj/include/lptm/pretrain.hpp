// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// The pre-training loop: seeded batches drawn from a corpus, one ssl_step
// per batch, periodic held-out evaluation, and optional early stopping.

#pragma once

#include "lptm/data.hpp"
#include "lptm/model.hpp"

#include <functional>
#include <optional>

namespace lptm {

struct PretrainOptions {
  int steps = 500;
  int batch_size = 4;
  int window = 96;
  Real lr = 1e-3;
  int eval_every = 50;    // 0 disables held-out evaluation
  int eval_windows = 16;
  int patience = 50;      // held-out evaluations without improvement before stopping; 0 never stops early
  std::uint64_t seed = 0;
};

struct PretrainEvalRecord {
  std::int64_t step = 0;
  SslEvaluation heldout;
};

struct PretrainResult {
  std::vector<SslStepStats> steps;
  std::vector<PretrainEvalRecord> evaluations;
  bool stopped_early = false;
};

struct PretrainCallbacks {
  std::function<void(const SslStepStats&)> on_step;
  std::function<void(const PretrainEvalRecord&)> on_eval;
};

/// Creates the model's domain set from the corpus.
Model make_model(const ModelConfig& config, const Corpus& corpus, std::uint64_t seed);

PretrainResult pretrain(Model& model, const Corpus& corpus, const SslConfig& ssl, const PretrainOptions& options,
                        const PretrainCallbacks& callbacks = {});

}  // namespace lptm
