// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/pretrain.hpp"

#include <limits>

namespace lptm {

Model make_model(const ModelConfig& config, const Corpus& corpus, std::uint64_t seed) {
  return Model(config, corpus.domain_ids(), seed);
}

PretrainResult pretrain(Model& model, const Corpus& corpus, const SslConfig& ssl, const PretrainOptions& options,
                        const PretrainCallbacks& callbacks) {
  if (options.steps < 0) throw ConfigError("pretrain steps must be non-negative");
  if (options.batch_size < 1) throw ConfigError("pretrain batch_size must be positive");
  if (options.window < 2) throw ConfigError("pretrain window must be at least 2");
  PretrainResult result;
  Adam optimizer(AdamConfig{options.lr});
  Rng rng(options.seed);
  Rng batch_rng = rng.split();
  Rng mask_rng = rng.split();
  const std::uint64_t eval_seed = rng.next();
  std::vector<Window> heldout;
  if (options.eval_every > 0 && options.eval_windows > 0) {
    heldout = heldout_windows(corpus, options.eval_windows, options.window, eval_seed);
  }
  Real best = std::numeric_limits<Real>::infinity();
  int stale = 0;
  for (int s = 0; s < options.steps; ++s) {
    const std::vector<Window> batch = sample_pretrain_batch(corpus, options.batch_size, options.window, batch_rng);
    result.steps.push_back(ssl_step(model, optimizer, batch, ssl, mask_rng));
    if (callbacks.on_step) callbacks.on_step(result.steps.back());
    if (!heldout.empty() && (s + 1) % options.eval_every == 0) {
      PretrainEvalRecord rec{model.step, evaluate_ssl(model, heldout, ssl, eval_seed)};
      result.evaluations.push_back(rec);
      if (callbacks.on_eval) callbacks.on_eval(rec);
      if (rec.heldout.loss_ssl < best) {
        best = rec.heldout.loss_ssl;
        stale = 0;
      } else if (options.patience > 0 && ++stale >= options.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace lptm
