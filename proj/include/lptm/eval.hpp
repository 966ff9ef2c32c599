// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Metrics, evaluation protocols, and experiment records. Forecast errors are
// reported in raw units: predictions and truth both pass through the series'
// dataset scale before scoring.

#pragma once

#include "lptm/data.hpp"
#include "lptm/model.hpp"
#include "lptm/pretrain.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lptm {

/// sqrt(mean((pred - truth)^2)). LengthError on mismatch or empty input.
Real rmse(std::span<const Real> pred, std::span<const Real> truth);
/// Fraction of exact matches. LengthError on mismatch or empty input.
Real accuracy(std::span<const int> pred, std::span<const int> truth);

enum class Protocol { zero_shot, fine_tuned, data_efficiency, ablation };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& name);

struct EvalReport {
  std::string task;
  std::string metric;
  Protocol protocol = Protocol::zero_shot;
  std::vector<Real> values;  // one per run
  std::vector<std::uint64_t> seeds;
  Real mean = 0.0;
  Real std = 0.0;  // population std over runs
  nlohmann::json metadata = nlohmann::json::object();

  /// Sets mean and std from values.
  void recompute();
};

EvalReport make_report(std::string task, std::string metric, Protocol protocol, std::vector<Real> values,
                       std::vector<std::uint64_t> seeds, nlohmann::json metadata = nlohmann::json::object());

// ---------------------------------------------------------------------------
// Rolling-origin forecasting

enum class EvalRegion { tail, test_split };

struct ForecastEvalOptions {
  int horizon = 4;
  int context = 64;  // points preceding each origin; fewer near the series start
  EvalRegion region = EvalRegion::tail;
  Real tail_fraction = 0.2;  // tail region: the last floor(fraction * t) points
};

/// 0-based index of the first evaluated point of `series`.
std::size_t evaluation_start(const TimeSeries& series, const ForecastEvalOptions& options);

/// Forecast of `horizon` points in the series' stored scale.
using Forecaster = std::function<std::vector<Real>(std::span<const Real> context, const TimeSeries& series, int horizon)>;

struct ForecastWindow {
  std::string series_id;
  std::size_t origin = 0;          // 0-based index of the first forecast point
  std::vector<Real> prediction;    // raw units
  std::vector<Real> truth;         // raw units
};

struct ForecastEvaluation {
  Real rmse = 0.0;  // pooled over every forecast point
  std::vector<ForecastWindow> windows;
};

/// Origins start at evaluation_start and advance by the horizon; the last
/// window is cut short at the series end.
ForecastEvaluation rolling_origin(std::span<const TimeSeries> series, const Forecaster& forecaster,
                                  const ForecastEvalOptions& options);

Forecaster zero_shot_forecaster(Model& model);
/// Uses the fine-tuned forecast head; its horizon overrides options.horizon.
Forecaster head_forecaster(Model& model);

/// No parameter updates; the model's parameter checksum is unchanged.
EvalReport zero_shot_protocol(Model& model, std::span<const TimeSeries> series, const ForecastEvalOptions& options);
EvalReport zero_shot_protocol(const Forecaster& forecaster, std::span<const TimeSeries> series,
                              const ForecastEvalOptions& options, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Fine-tuned evaluation

/// Full recipe for one pre-train, fine-tune, evaluate cycle.
struct Experiment {
  std::string task_name;  // report task id; empty uses the task kind
  ModelConfig model;
  SslConfig ssl;
  PretrainOptions pretrain;
  FineTuneTask task;
  FineTuneSchedule schedule;
  ForecastEvalOptions eval{.horizon = 4, .context = 64, .region = EvalRegion::test_split};
};

/// Classification instances split by position within each class: every
/// fifth instance goes to test. Returned series carry no temporal split.
std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> split_instances(std::span<const TimeSeries> series);

/// Fine-tunes `model` in place on `target` and returns the test metric:
/// raw-scale RMSE over the test split (forecast) or held-out accuracy (classify).
Real fine_tune_and_score(Model& model, std::span<const TimeSeries> target, const Experiment& experiment,
                         std::uint64_t seed, FineTuneResult* result = nullptr);

/// One run per seed, each starting from a copy of `pretrained`.
EvalReport fine_tuned_protocol(const Model& pretrained, std::span<const TimeSeries> target,
                               const Experiment& experiment, std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------
// Data-efficiency sweep

/// Keeps the first k% of each series' training region; later regions are
/// untouched. Series without a split are truncated as a whole.
TimeSeries truncate_training(const TimeSeries& series, Real k_percent);

/// Scores one truncated training set. Returns one report per call.
using FitAndScore = std::function<EvalReport(std::span<const TimeSeries> truncated, Real k_percent)>;

/// One report per k, ascending in k, each tagged data_efficiency with k in metadata.
std::vector<EvalReport> data_efficiency_sweep(std::span<const TimeSeries> dataset, std::vector<Real> k_list,
                                              const FitAndScore& fit_and_score);
std::vector<EvalReport> data_efficiency_sweep(const Model& pretrained, std::span<const TimeSeries> dataset,
                                              std::vector<Real> k_list, const Experiment& experiment,
                                              std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------
// Ablations

enum class Ablation { no_segment, no_pretrain, no_linprob, only_randmask, only_lastmask };

std::string to_string(Ablation a);
/// ConfigError on an unknown name.
Ablation ablation_from_string(const std::string& name);

/// Experiment with the ablations applied.
Experiment apply_ablations(Experiment experiment, std::span<const Ablation> ablations);

/// Runs the ablated variant once per seed. Pre-training is repeated with the
/// ablated settings unless no_pretrain is set; `checkpoint`, when given and no
/// ablation touches pre-training, replaces it. `on_step` sees every
/// pre-training step record.
EvalReport ablation_run(std::span<const std::string> overrides, const Experiment& experiment, const Corpus& corpus,
                        std::span<const TimeSeries> target, std::span<const std::uint64_t> seeds,
                        const Model* checkpoint = nullptr,
                        const std::function<void(std::uint64_t, const SslStepStats&)>& on_step = {});

// ---------------------------------------------------------------------------
// Segment statistics

struct SegmentLengthProfile {
  Real peak_mean = 0.0;     // mean covering-segment length over peak steps
  Real offpeak_mean = 0.0;  // same over off-peak steps
};

/// Each time-step is assigned the mean length of the segments covering it.
SegmentLengthProfile segment_length_profile(const SegmentSet& segments, const std::vector<bool>& peak_mask);

// ---------------------------------------------------------------------------
// Records and exports

/// Worker cap: LPTM_KIT_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
int worker_threads();

/// Runs fn(k) for k in [0, n) on up to worker_threads() threads. The first
/// exception thrown is rethrown after every worker finishes.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Appends one {task, protocol, seed, metric, value} line per run and one
/// summary line with mean, std, and metadata.
void append_report(const std::filesystem::path& path, const EvalReport& report);
std::vector<nlohmann::json> read_records(const std::filesystem::path& path);

/// Two whitespace-separated columns per line.
void write_plot_data(const std::filesystem::path& path, std::span<const std::pair<Real, Real>> points);

/// Series values (index, value) followed, after a blank line, by each segment
/// start and end index with the value there.
void write_segment_overlay(const std::filesystem::path& path, std::span<const Real> values, const SegmentSet& segments);

/// Block format:
///   series <id> <t>
///   values v1 ... vt
///   <start> <end> <score>      (one line per segment)
///   end
void write_segment_block(std::ostream& out, const std::string& id, std::span<const Real> values,
                         const SegmentSet& segments);

/// One JSON line: {"series": id, <key>: values}.
void write_prediction(std::ostream& out, const std::string& id, const std::string& key, std::span<const Real> values);

}  // namespace lptm
