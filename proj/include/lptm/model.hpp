// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// The assembled model and its training/inference procedures: masked
// pre-training steps, zero-shot forecasting through the trailing-mask
// decoder, and two-stage (linear probe, then full) fine-tuning.

#pragma once

#include "lptm/backbone.hpp"
#include "lptm/core.hpp"
#include "lptm/heads.hpp"
#include "lptm/optim.hpp"
#include "lptm/revin.hpp"
#include "lptm/segmenter.hpp"
#include "lptm/ssl.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lptm {

enum class SegmentationMode { adaptive, fixed };

struct ModelConfig {
  SegmenterConfig segmenter;
  BackboneConfig backbone;
  ChooseOptions choose;
  SegmentationMode segmentation = SegmentationMode::adaptive;
  int patch_length = 8;
  bool revin_affine = true;
  DecoderFeedback decoder_feedback = DecoderFeedback::free_running;
  int forecast_decoder_layers = 4;
  std::string fallback_domain;  // segmenter used for unseen domains; empty = first domain

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct SslConfig {
  Real gamma_randmask = 0.2;
  Real gamma_lastmask = 0.4;
  bool use_randmask = true;
  bool use_lastmask = true;
  int score_update_interval = 10;
};

class Model {
 public:
  Model(ModelConfig config, std::vector<std::string> domains, std::uint64_t seed);

  ModelConfig config;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  RevinParams<Real> revin;
  std::map<std::string, SegmenterParams<Real>> segmenters;
  BackboneParams<Real> backbone;
  Param<Real> mask_embedding;
  DecoderParams<Real> randmask_decoder;
  DecoderParams<Real> lastmask_decoder;
  std::optional<ForecastHeadParams<Real>> forecast_head;
  std::optional<ClassifyHeadParams<Real>> classify_head;

  std::vector<std::string> domains() const;

  /// Segmenter of `domain`, or the fallback domain's segmenter if unseen.
  SegmenterParams<Real>& segmenter_for(const std::string& domain);
  /// Like segmenter_for, but an unseen domain gets its own copy of the fallback.
  SegmenterParams<Real>& ensure_segmenter(const std::string& domain);

  ForecastHeadParams<Real>& ensure_forecast_head(int horizon);
  ClassifyHeadParams<Real>& ensure_classify_head(int num_classes);

  /// Every parameter in checkpoint order.
  std::vector<NamedParam> parameters();
  template <typename F>
  void visit(F&& f);

  void zero_grad();
  void set_trainable(const std::function<bool(const std::string&)>& predicate);
};

template <typename F>
void Model::visit(F&& f) {
  revin.visit("revin", f);
  for (auto& [domain, seg] : segmenters) seg.visit("segmenter/" + domain, f);
  backbone.visit("backbone", f);
  f(std::string("ssl/mask_embedding"), mask_embedding);
  randmask_decoder.visit("ssl/randmask_decoder", f);
  lastmask_decoder.visit("ssl/lastmask_decoder", f);
  if (forecast_head) forecast_head->visit("head/forecast", f);
  if (classify_head) classify_head->visit("head/classify", f);
}

bool is_score_param(const std::string& name);
bool is_head_param(const std::string& name);

/// FNV-1a over parameter names, shapes, and raw value bytes.
std::uint64_t parameter_checksum(Model& model);
/// L2 norm of the accumulated gradients of parameters matching `predicate`.
Real gradient_norm(Model& model, const std::function<bool(const std::string&)>& predicate);

// ---------------------------------------------------------------------------
// Forward pipeline

struct EncodedSeries {
  NormalizedInput<Real> input;
  std::vector<Real> truth;  // instance-normalized values, constant targets
  Var<Real> hidden;
  TokenSequence<Real> tokens;
};

/// Normalize, encode, select segments, and embed one series on `tape`.
EncodedSeries encode_series(Tape<Real>& tape, Model& model, SegmenterParams<Real>& segmenter,
                            std::span<const Real> values);

/// Segments chosen for a series (no gradient bookkeeping).
SegmentSet segment_series(Model& model, const std::string& domain, std::span<const Real> values);

// ---------------------------------------------------------------------------
// Pre-training

struct Window {
  std::vector<Real> values;
  std::string domain;
};

struct SslStepStats {
  std::int64_t step = 0;
  std::optional<Real> loss_randmask;
  std::optional<Real> loss_lastmask;
  Real loss_ssl = 0.0;
  std::optional<Real> loss_g;  // present on score-update steps
  Real segments_mean = 0.0;
  int segments_min = 0;
  int segments_max = 0;
};

/// One optimizer step over a batch. Both enabled tasks run on every window;
/// the score loss is added, and the score parameters stepped, only when the
/// incremented step counter is a multiple of score_update_interval.
SslStepStats ssl_step(Model& model, Adam& optimizer, std::span<const Window> batch, const SslConfig& ssl, Rng& rng);

struct SslEvaluation {
  Real loss_ssl = 0.0;       // mean over windows of the summed task losses
  Real mean_baseline = 0.0;  // same masks, predicting each masked segment set's mean
};

/// Held-out SSL loss with fixed mask plans; parameters are not modified.
SslEvaluation evaluate_ssl(Model& model, std::span<const Window> windows, const SslConfig& ssl, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Downstream

/// Zero-shot horizon through the trailing-mask decoder: ceil(K / Lbar)
/// placeholder tokens are appended after t and decoded. K = 0 returns empty.
std::vector<Real> zero_shot_forecast(Model& model, std::span<const Real> context, const std::string& domain, int horizon);

/// Forecast with a fine-tuned head (original units).
std::vector<Real> forecast_series(Model& model, std::span<const Real> context, const std::string& domain);

std::vector<Real> classify_series(Model& model, std::span<const Real> values, const std::string& domain);

struct FineTuneTask {
  SeriesKind kind = SeriesKind::forecast;
  int horizon = 4;
  int context = 64;
  int stride = 1;
  int num_classes = 2;
};

struct FineTuneSchedule {
  int epochs = 10;
  Real probe_fraction = 0.3;
  bool linear_probe = true;
  std::optional<int> probe_epochs;
  std::optional<int> full_epochs;
  Real lr = 1e-3;
  int batch_size = 8;
  int max_batches_per_epoch = 0;  // 0 = full pass
  std::uint64_t seed = 0;

  /// (probe, full) epoch counts. Throws ConfigError when probing is requested with zero probe epochs.
  std::pair<int, int> stage_epochs() const;
};

struct FineTuneResult {
  std::vector<Real> probe_losses;  // per epoch
  std::vector<Real> full_losses;
  Real probe_frozen_grad_norm = 0.0;  // max over probe steps, non-head parameters
};

struct TrainingExample {
  std::vector<Real> context;
  std::vector<Real> target;  // forecast horizon
  int label = 0;             // classification
  std::string domain;
};

std::vector<TrainingExample> make_examples(std::span<const TimeSeries> series, const FineTuneTask& task);

/// Linear probing (heads only) followed by full fine-tuning of every module.
FineTuneResult fine_tune(Model& model, std::span<const TimeSeries> train, const FineTuneTask& task,
                         const FineTuneSchedule& schedule);

}  // namespace lptm
