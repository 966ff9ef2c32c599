// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <thread>

namespace lptm {

Real rmse(std::span<const Real> pred, std::span<const Real> truth) {
  if (pred.size() != truth.size()) {
    throw LengthError("rmse: " + std::to_string(pred.size()) + " predictions for " + std::to_string(truth.size()) +
                      " targets");
  }
  if (pred.empty()) throw LengthError("rmse: empty input");
  Real sq = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) sq += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  return std::sqrt(sq / static_cast<Real>(pred.size()));
}

Real accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw LengthError("accuracy: " + std::to_string(pred.size()) + " predictions for " +
                      std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw LengthError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == truth[k] ? 1 : 0;
  return static_cast<Real>(hits) / static_cast<Real>(pred.size());
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::zero_shot:
      return "zero_shot";
    case Protocol::fine_tuned:
      return "fine_tuned";
    case Protocol::data_efficiency:
      return "data_efficiency";
    case Protocol::ablation:
      return "ablation";
  }
  return "zero_shot";
}

Protocol protocol_from_string(const std::string& name) {
  for (Protocol p : {Protocol::zero_shot, Protocol::fine_tuned, Protocol::data_efficiency, Protocol::ablation}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown protocol '" + name + "'");
}

void EvalReport::recompute() {
  if (values.empty()) {
    mean = 0.0;
    std = 0.0;
    return;
  }
  const Real n = static_cast<Real>(values.size());
  mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  Real sq = 0.0;
  for (Real v : values) sq += (v - mean) * (v - mean);
  std = std::sqrt(sq / n);
}

EvalReport make_report(std::string task, std::string metric, Protocol protocol, std::vector<Real> values,
                       std::vector<std::uint64_t> seeds, nlohmann::json metadata) {
  EvalReport r;
  r.task = std::move(task);
  r.metric = std::move(metric);
  r.protocol = protocol;
  r.values = std::move(values);
  r.seeds = std::move(seeds);
  r.metadata = std::move(metadata);
  r.recompute();
  return r;
}

// ---------------------------------------------------------------------------

std::size_t evaluation_start(const TimeSeries& series, const ForecastEvalOptions& options) {
  const std::size_t t = series.values.size();
  if (options.region == EvalRegion::test_split) {
    if (!series.split) throw ConfigError("series '" + series.id + "' has no split for test-split evaluation");
    return std::min(series.split->val_end, t);
  }
  if (!(options.tail_fraction > 0.0 && options.tail_fraction <= 1.0)) {
    throw ConfigError("tail_fraction must lie in (0, 1]");
  }
  const auto held = static_cast<std::size_t>(std::floor(options.tail_fraction * static_cast<Real>(t) + 1e-9));
  return t - std::min(held, t);
}

ForecastEvaluation rolling_origin(std::span<const TimeSeries> series, const Forecaster& forecaster,
                                  const ForecastEvalOptions& options) {
  if (options.horizon < 1) throw DomainError("forecast horizon must be at least 1");
  if (options.context < 2) throw DomainError("forecast context must be at least 2");
  ForecastEvaluation out;
  std::vector<Real> preds, truths;
  const auto k = static_cast<std::size_t>(options.horizon);
  for (const TimeSeries& s : series) {
    const std::size_t t = s.values.size();
    for (std::size_t origin = evaluation_start(s, options); origin < t; origin += k) {
      if (origin < 2) continue;
      const std::size_t begin = origin - std::min(origin, static_cast<std::size_t>(options.context));
      const std::span<const Real> context(s.values.data() + begin, origin - begin);
      const std::vector<Real> pred = forecaster(context, s, options.horizon);
      const std::size_t n = std::min(k, t - origin);
      if (pred.size() < n) throw LengthError("forecaster returned " + std::to_string(pred.size()) + " points, expected " + std::to_string(n));
      ForecastWindow w;
      w.series_id = s.id;
      w.origin = origin;
      for (std::size_t h = 0; h < n; ++h) {
        w.prediction.push_back(s.dataset_scale.to_raw(pred[h]));
        w.truth.push_back(s.dataset_scale.to_raw(s.values[origin + h]));
      }
      preds.insert(preds.end(), w.prediction.begin(), w.prediction.end());
      truths.insert(truths.end(), w.truth.begin(), w.truth.end());
      out.windows.push_back(std::move(w));
    }
  }
  if (preds.empty()) throw DomainError("no evaluation windows in the selected region");
  out.rmse = rmse(preds, truths);
  return out;
}

Forecaster zero_shot_forecaster(Model& model) {
  return [&model](std::span<const Real> context, const TimeSeries& s, int horizon) {
    return zero_shot_forecast(model, context, s.domain_id, horizon);
  };
}

Forecaster head_forecaster(Model& model) {
  return [&model](std::span<const Real> context, const TimeSeries& s, int) {
    return forecast_series(model, context, s.domain_id);
  };
}

EvalReport zero_shot_protocol(const Forecaster& forecaster, std::span<const TimeSeries> series,
                              const ForecastEvalOptions& options, std::uint64_t seed) {
  const ForecastEvaluation ev = rolling_origin(series, forecaster, options);
  nlohmann::json meta = {{"horizon", options.horizon},
                         {"context", options.context},
                         {"windows", ev.windows.size()},
                         {"series", series.size()}};
  if (options.region == EvalRegion::tail) meta["tail_fraction"] = options.tail_fraction;
  return make_report("forecast", "rmse", Protocol::zero_shot, {ev.rmse}, {seed}, std::move(meta));
}

EvalReport zero_shot_protocol(Model& model, std::span<const TimeSeries> series, const ForecastEvalOptions& options) {
  return zero_shot_protocol(zero_shot_forecaster(model), series, options, model.seed);
}

// ---------------------------------------------------------------------------

std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> split_instances(std::span<const TimeSeries> series) {
  std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> out;
  std::map<int, int> seen;
  for (const TimeSeries& s : series) {
    if (!s.class_label) throw ValueError("series '" + s.id + "' has no class label");
    TimeSeries copy = s;
    copy.split.reset();
    (seen[*s.class_label]++ % 5 == 4 ? out.second : out.first).push_back(std::move(copy));
  }
  if (out.second.empty() && out.first.size() > 1) {
    out.second.push_back(out.first.back());
    out.first.pop_back();
  }
  return out;
}

namespace {

std::string task_id(const Experiment& e) {
  return e.task_name.empty() ? to_string(e.task.kind) : e.task_name;
}

std::string metric_of(const Experiment& e) { return e.task.kind == SeriesKind::classify ? "accuracy" : "rmse"; }

int argmax(std::span<const Real> v) {
  return static_cast<int>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

}  // namespace

Real fine_tune_and_score(Model& model, std::span<const TimeSeries> target, const Experiment& experiment,
                         std::uint64_t seed, FineTuneResult* result) {
  FineTuneSchedule schedule = experiment.schedule;
  schedule.seed = seed;
  if (experiment.task.kind == SeriesKind::classify) {
    const auto [train, test] = split_instances(target);
    FineTuneResult r = fine_tune(model, train, experiment.task, schedule);
    if (result) *result = std::move(r);
    std::vector<int> pred, truth;
    for (const TimeSeries& s : test) {
      pred.push_back(argmax(classify_series(model, s.values, s.domain_id)));
      truth.push_back(*s.class_label);
    }
    return accuracy(pred, truth);
  }
  FineTuneResult r = fine_tune(model, target, experiment.task, schedule);
  if (result) *result = std::move(r);
  ForecastEvalOptions eval = experiment.eval;
  eval.horizon = experiment.task.horizon;
  eval.context = experiment.task.context;
  return rolling_origin(target, head_forecaster(model), eval).rmse;
}

EvalReport fine_tuned_protocol(const Model& pretrained, std::span<const TimeSeries> target,
                               const Experiment& experiment, std::span<const std::uint64_t> seeds) {
  std::vector<Real> values(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t k) {
    Model model = pretrained;
    values[k] = fine_tune_and_score(model, target, experiment, seeds[k]);
  });
  const auto [probe, full] = experiment.schedule.stage_epochs();
  nlohmann::json meta = {{"probe_epochs", probe}, {"full_epochs", full}, {"horizon", experiment.task.horizon}};
  return make_report(task_id(experiment), metric_of(experiment), Protocol::fine_tuned, std::move(values),
                     std::vector<std::uint64_t>(seeds.begin(), seeds.end()), std::move(meta));
}

// ---------------------------------------------------------------------------

TimeSeries truncate_training(const TimeSeries& series, Real k_percent) {
  if (!series.split) return truncate_fraction(series, k_percent);
  TimeSeries region = series;
  region.values.resize(series.split->train_end);
  region.split.reset();
  region.peak_mask.clear();
  const TimeSeries kept = truncate_fraction(region, k_percent);
  TimeSeries out = series;
  out.split->train_end = kept.values.size();
  return out;
}

std::vector<EvalReport> data_efficiency_sweep(std::span<const TimeSeries> dataset, std::vector<Real> k_list,
                                              const FitAndScore& fit_and_score) {
  std::sort(k_list.begin(), k_list.end());
  std::vector<EvalReport> out;
  for (Real k : k_list) {
    std::vector<TimeSeries> truncated;
    for (const TimeSeries& s : dataset) truncated.push_back(truncate_training(s, k));
    EvalReport r = fit_and_score(truncated, k);
    r.protocol = Protocol::data_efficiency;
    r.metadata["k_percent"] = k;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EvalReport> data_efficiency_sweep(const Model& pretrained, std::span<const TimeSeries> dataset,
                                              std::vector<Real> k_list, const Experiment& experiment,
                                              std::span<const std::uint64_t> seeds) {
  return data_efficiency_sweep(dataset, std::move(k_list), [&](std::span<const TimeSeries> truncated, Real) {
    return fine_tuned_protocol(pretrained, truncated, experiment, seeds);
  });
}

// ---------------------------------------------------------------------------

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::no_segment:
      return "no_segment";
    case Ablation::no_pretrain:
      return "no_pretrain";
    case Ablation::no_linprob:
      return "no_linprob";
    case Ablation::only_randmask:
      return "only_randmask";
    case Ablation::only_lastmask:
      return "only_lastmask";
  }
  return "no_segment";
}

Ablation ablation_from_string(const std::string& name) {
  for (Ablation a : {Ablation::no_segment, Ablation::no_pretrain, Ablation::no_linprob, Ablation::only_randmask,
                     Ablation::only_lastmask}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation override '" + name + "'");
}

Experiment apply_ablations(Experiment e, std::span<const Ablation> ablations) {
  for (Ablation a : ablations) {
    switch (a) {
      case Ablation::no_segment:
        e.model.segmentation = SegmentationMode::fixed;
        break;
      case Ablation::no_pretrain:
        e.pretrain.steps = 0;
        break;
      case Ablation::no_linprob:
        e.schedule.linear_probe = false;
        e.schedule.probe_epochs.reset();
        break;
      case Ablation::only_randmask:
        e.ssl.use_lastmask = false;
        break;
      case Ablation::only_lastmask:
        e.ssl.use_randmask = false;
        break;
    }
  }
  if (!e.ssl.use_randmask && !e.ssl.use_lastmask) throw ConfigError("only_randmask and only_lastmask are exclusive");
  return e;
}

EvalReport ablation_run(std::span<const std::string> overrides, const Experiment& experiment, const Corpus& corpus,
                        std::span<const TimeSeries> target, std::span<const std::uint64_t> seeds,
                        const Model* checkpoint,
                        const std::function<void(std::uint64_t, const SslStepStats&)>& on_step) {
  std::vector<Ablation> ablations;
  for (const std::string& name : overrides) ablations.push_back(ablation_from_string(name));
  const Experiment ex = apply_ablations(experiment, ablations);
  const auto has = [&](Ablation a) { return std::find(ablations.begin(), ablations.end(), a) != ablations.end(); };
  const bool random_init = has(Ablation::no_pretrain);
  const bool pretraining_changed = has(Ablation::no_segment) || has(Ablation::only_randmask) || has(Ablation::only_lastmask);
  const bool from_checkpoint = checkpoint != nullptr && !random_init && !pretraining_changed;

  std::vector<std::string> domains = corpus.domain_ids();
  for (const TimeSeries& s : target) domains.push_back(s.domain_id);

  std::vector<Real> values(seeds.size());
  std::vector<std::size_t> randmask_records(seeds.size(), 0), lastmask_records(seeds.size(), 0);
  std::mutex log_mutex;
  parallel_for(seeds.size(), [&](std::size_t k) {
    const std::uint64_t seed = seeds[k];
    Model model = from_checkpoint ? *checkpoint : Model(ex.model, domains, seed);
    if (!from_checkpoint && !random_init) {
      PretrainOptions po = ex.pretrain;
      po.seed = seed;
      PretrainCallbacks cb;
      cb.on_step = [&](const SslStepStats& st) {
        if (st.loss_randmask) ++randmask_records[k];
        if (st.loss_lastmask) ++lastmask_records[k];
        if (on_step) {
          const std::lock_guard lock(log_mutex);
          on_step(seed, st);
        }
      };
      pretrain(model, corpus, ex.ssl, po, cb);
    }
    values[k] = fine_tune_and_score(model, target, ex, seed);
  });

  nlohmann::json meta = {
      {"overrides", overrides},
      {"init", random_init ? "random" : (from_checkpoint ? "checkpoint" : "pretrained")},
      {"pretrain_steps", random_init || from_checkpoint ? 0 : ex.pretrain.steps},
      {"linear_probe", ex.schedule.linear_probe},
      {"segmentation", ex.model.segmentation == SegmentationMode::fixed ? "fixed" : "adaptive"},
      {"ssl_tasks", nlohmann::json::array()},
      {"randmask_step_records", std::accumulate(randmask_records.begin(), randmask_records.end(), std::size_t{0})},
      {"lastmask_step_records", std::accumulate(lastmask_records.begin(), lastmask_records.end(), std::size_t{0})},
  };
  if (ex.ssl.use_randmask) meta["ssl_tasks"].push_back("randmask");
  if (ex.ssl.use_lastmask) meta["ssl_tasks"].push_back("lastmask");
  if (has(Ablation::no_segment)) meta["patch_length"] = ex.model.patch_length;
  return make_report(task_id(ex), metric_of(ex), Protocol::ablation, std::move(values),
                     std::vector<std::uint64_t>(seeds.begin(), seeds.end()), std::move(meta));
}

// ---------------------------------------------------------------------------

SegmentLengthProfile segment_length_profile(const SegmentSet& segments, const std::vector<bool>& peak_mask) {
  const int t = segments.series_length();
  if (peak_mask.size() != static_cast<std::size_t>(t)) {
    throw LengthError("peak mask has " + std::to_string(peak_mask.size()) + " entries for a length-" +
                      std::to_string(t) + " series");
  }
  std::vector<Real> total(static_cast<std::size_t>(t), 0.0), count(static_cast<std::size_t>(t), 0.0);
  for (const Segment& s : segments.segments()) {
    for (int k = s.start; k <= s.end; ++k) {
      total[static_cast<std::size_t>(k - 1)] += s.length();
      count[static_cast<std::size_t>(k - 1)] += 1.0;
    }
  }
  Real peak = 0.0, off = 0.0;
  int n_peak = 0, n_off = 0;
  for (int k = 0; k < t; ++k) {
    const Real mean = total[static_cast<std::size_t>(k)] / count[static_cast<std::size_t>(k)];
    if (peak_mask[static_cast<std::size_t>(k)]) {
      peak += mean;
      ++n_peak;
    } else {
      off += mean;
      ++n_off;
    }
  }
  return {n_peak > 0 ? peak / n_peak : 0.0, n_off > 0 ? off / n_off : 0.0};
}

// ---------------------------------------------------------------------------

int worker_threads() {
  if (const char* env = std::getenv("LPTM_KIT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(worker_threads()));
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::mutex mutex;
  std::size_t next = 0;
  std::exception_ptr error;
  const auto work = [&] {
    for (;;) {
      std::size_t k;
      {
        const std::lock_guard lock(mutex);
        if (next >= n || error) return;
        k = next++;
      }
      try {
        fn(k);
      } catch (...) {
        const std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

void append_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot write report '" + path.string() + "'");
  for (std::size_t k = 0; k < report.values.size(); ++k) {
    const nlohmann::json rec = {{"record", "run"},
                                {"task", report.task},
                                {"protocol", to_string(report.protocol)},
                                {"seed", k < report.seeds.size() ? report.seeds[k] : k},
                                {"metric", report.metric},
                                {"value", report.values[k]}};
    out << rec.dump() << '\n';
  }
  const nlohmann::json summary = {{"record", "summary"},
                                  {"task", report.task},
                                  {"protocol", to_string(report.protocol)},
                                  {"metric", report.metric},
                                  {"runs", report.values.size()},
                                  {"mean", report.mean},
                                  {"std", report.std},
                                  {"metadata", report.metadata}};
  out << summary.dump() << '\n';
}

std::vector<nlohmann::json> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

void write_plot_data(const std::filesystem::path& path, std::span<const std::pair<Real, Real>> points) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write plot data '" + path.string() + "'");
  out << std::setprecision(10);
  for (const auto& [x, y] : points) out << x << ' ' << y << '\n';
}

void write_segment_overlay(const std::filesystem::path& path, std::span<const Real> values, const SegmentSet& segments) {
  std::vector<std::pair<Real, Real>> points;
  for (std::size_t k = 0; k < values.size(); ++k) points.emplace_back(static_cast<Real>(k + 1), values[k]);
  write_plot_data(path, points);
  std::ofstream out(path, std::ios::app);
  out << std::setprecision(10) << '\n';
  for (const Segment& s : segments.segments()) {
    out << s.start << ' ' << values[static_cast<std::size_t>(s.start - 1)] << '\n';
    out << s.end << ' ' << values[static_cast<std::size_t>(s.end - 1)] << '\n';
  }
}

void write_segment_block(std::ostream& out, const std::string& id, std::span<const Real> values,
                         const SegmentSet& segments) {
  out << "series " << id << ' ' << values.size() << '\n' << "values";
  out << std::setprecision(17);
  for (Real v : values) out << ' ' << v;
  out << '\n';
  for (const Segment& s : segments.segments()) out << s.start << ' ' << s.end << ' ' << s.score << '\n';
  out << "end\n";
}

void write_prediction(std::ostream& out, const std::string& id, const std::string& key, std::span<const Real> values) {
  const nlohmann::json rec = {{"series", id}, {key, std::vector<Real>(values.begin(), values.end())}};
  out << rec.dump() << '\n';
}

}  // namespace lptm
