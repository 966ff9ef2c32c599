// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "lptm/checkpoint.hpp"
#include "lptm/config.hpp"
#include "lptm/eval.hpp"
#include "lptm/pretrain.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

namespace lptm::cli {

namespace {

struct Flags {
  std::string config;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string protocol;
  std::string input;
  std::vector<std::string> overrides;
};

/// Writes each record to the console stream and to a log file in the run directory.
class Log {
 public:
  Log(std::ostream& console, const std::filesystem::path& file) : console_(console) {
    std::filesystem::create_directories(file.parent_path());
    file_.open(file, std::ios::trunc);
    if (!file_) throw ConfigError("cannot write log '" + file.string() + "'");
  }
  void operator()(const nlohmann::json& record) {
    const std::string line = record.dump();
    console_ << line << '\n';
    file_ << line << '\n';
  }

 private:
  std::ostream& console_;
  std::ofstream file_;
};

nlohmann::json step_record(const SslStepStats& s) {
  nlohmann::json r = {{"event", "step"}, {"step", s.step}, {"loss_ssl", s.loss_ssl}};
  if (s.loss_randmask) r["loss_randmask"] = *s.loss_randmask;
  if (s.loss_lastmask) r["loss_lastmask"] = *s.loss_lastmask;
  if (s.loss_g) r["loss_g"] = *s.loss_g;
  r["segments_mean"] = s.segments_mean;
  r["segments_min"] = s.segments_min;
  r["segments_max"] = s.segments_max;
  return r;
}

RunConfig load_config(const Flags& flags) {
  std::vector<std::string> overrides = flags.overrides;
  if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
  if (!flags.out.empty()) overrides.push_back("out=" + nlohmann::json(flags.out).dump());
  return load_run_config(flags.config, overrides);
}

Corpus load_corpus(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("config key 'corpus' must name a corpus manifest");
  return load_manifest(cfg.corpus, cfg.seed);
}

std::vector<TimeSeries> load_target(const RunConfig& cfg) {
  const Corpus corpus = cfg.target_manifest.empty() ? load_corpus(cfg) : load_manifest(cfg.target_manifest, cfg.seed);
  std::vector<TimeSeries> out;
  for (const auto& [domain, series] : corpus.domains) {
    if (!cfg.target_domain.empty() && domain != cfg.target_domain) continue;
    for (const TimeSeries& s : series) {
      if (cfg.experiment.task.kind == SeriesKind::classify && !s.class_label) continue;
      out.push_back(s);
    }
  }
  if (out.empty()) throw DomainError("no downstream series match target.domain '" + cfg.target_domain + "'");
  return out;
}

Model require_checkpoint(const Flags& flags) {
  if (flags.checkpoint.empty()) throw ConfigError("--checkpoint is required for this command");
  return load_checkpoint(flags.checkpoint);
}

std::vector<Real> raw(const TimeSeries& s, std::span<const Real> values) {
  std::vector<Real> out;
  for (Real v : values) out.push_back(s.dataset_scale.to_raw(v));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const Flags& flags, std::ostream& console) {
  const RunConfig cfg = load_config(flags);
  const Corpus corpus = load_corpus(cfg);
  Log log(console, cfg.out / "pretrain_log.jsonl");
  Model model = make_model(cfg.experiment.model, corpus, cfg.seed);
  PretrainCallbacks cb;
  cb.on_step = [&](const SslStepStats& s) { log(step_record(s)); };
  cb.on_eval = [&](const PretrainEvalRecord& e) {
    log({{"event", "eval"},
         {"step", e.step},
         {"heldout_loss_ssl", e.heldout.loss_ssl},
         {"heldout_mean_baseline", e.heldout.mean_baseline}});
  };
  const PretrainResult result = pretrain(model, corpus, cfg.experiment.ssl, cfg.experiment.pretrain, cb);
  const std::filesystem::path path = cfg.out / "checkpoint.lptm";
  save_checkpoint(model, path, {{"command", "pretrain"}, {"stopped_early", result.stopped_early}});
  log({{"event", "done"},
       {"checkpoint", path.string()},
       {"steps", result.steps.size()},
       {"parameter_checksum", parameter_checksum(model)}});
  return kExitOk;
}

int cmd_finetune(const Flags& flags, std::ostream& console) {
  const RunConfig cfg = load_config(flags);
  Model model = require_checkpoint(flags);
  const std::vector<TimeSeries> target = load_target(cfg);
  Log log(console, cfg.out / "finetune_log.jsonl");
  FineTuneResult result;
  const Real score = fine_tune_and_score(model, target, cfg.experiment, cfg.seed, &result);
  for (std::size_t k = 0; k < result.probe_losses.size(); ++k) {
    log({{"event", "epoch"}, {"stage", "probe"}, {"epoch", k + 1}, {"loss", result.probe_losses[k]}});
  }
  for (std::size_t k = 0; k < result.full_losses.size(); ++k) {
    log({{"event", "epoch"}, {"stage", "full"}, {"epoch", k + 1}, {"loss", result.full_losses[k]}});
  }
  const auto [probe, full] = cfg.experiment.schedule.stage_epochs();
  const bool classify = cfg.experiment.task.kind == SeriesKind::classify;
  const EvalReport report =
      make_report(classify ? "classify" : "forecast", classify ? "accuracy" : "rmse", Protocol::fine_tuned, {score},
                  {cfg.seed},
                  {{"probe_epochs", probe},
                   {"full_epochs", full},
                   {"probe_frozen_grad_norm", result.probe_frozen_grad_norm},
                   {"series", target.size()}});
  append_report(cfg.out / "report.jsonl", report);

  std::ofstream preds(cfg.out / "predictions.jsonl", std::ios::trunc);
  for (const TimeSeries& s : target) {
    if (classify) {
      write_prediction(preds, s.id, "logits", classify_series(model, s.values, s.domain_id));
      continue;
    }
    const std::size_t origin = evaluation_start(s, cfg.experiment.eval);
    if (origin < 2) continue;
    const std::size_t begin = origin - std::min<std::size_t>(origin, static_cast<std::size_t>(cfg.experiment.task.context));
    const std::vector<Real> pred =
        forecast_series(model, std::span<const Real>(s.values.data() + begin, origin - begin), s.domain_id);
    write_prediction(preds, s.id, "horizon", raw(s, pred));
  }
  const std::filesystem::path path = cfg.out / "finetuned.lptm";
  save_checkpoint(model, path, {{"command", "finetune"}});
  log({{"event", "done"}, {"checkpoint", path.string()}, {"metric", report.metric}, {"value", score}});
  return kExitOk;
}

int cmd_evaluate(const Flags& flags, std::ostream& console) {
  const RunConfig cfg = load_config(flags);
  const Protocol protocol = protocol_from_string(flags.protocol);
  if (protocol == Protocol::fine_tuned) throw ConfigError("use the finetune command for the fine_tuned protocol");
  Log log(console, cfg.out / "evaluate_log.jsonl");
  const std::filesystem::path report_path = cfg.out / "report.jsonl";

  if (protocol == Protocol::zero_shot) {
    Model model = require_checkpoint(flags);
    const std::vector<TimeSeries> target = load_target(cfg);
    const std::uint64_t before = parameter_checksum(model);
    const ForecastEvaluation ev = rolling_origin(target, zero_shot_forecaster(model), cfg.zero_shot);
    const bool unchanged = before == parameter_checksum(model);
    EvalReport report = make_report("forecast", "rmse", Protocol::zero_shot, {ev.rmse}, {model.seed},
                                    {{"horizon", cfg.zero_shot.horizon},
                                     {"context", cfg.zero_shot.context},
                                     {"tail_fraction", cfg.zero_shot.tail_fraction},
                                     {"windows", ev.windows.size()},
                                     {"parameter_checksum_unchanged", unchanged}});
    append_report(report_path, report);
    std::ofstream preds(cfg.out / "predictions.jsonl", std::ios::trunc);
    std::vector<std::pair<Real, Real>> points;
    for (const ForecastWindow& w : ev.windows) {
      write_prediction(preds, w.series_id + "@" + std::to_string(w.origin + 1), "horizon", w.prediction);
      if (w.series_id != ev.windows.front().series_id) continue;
      for (std::size_t h = 0; h < w.prediction.size(); ++h) {
        points.emplace_back(static_cast<Real>(w.origin + h + 1), w.prediction[h]);
      }
    }
    write_plot_data(cfg.out / "zero_shot.dat", points);
    log({{"event", "report"}, {"protocol", "zero_shot"}, {"rmse", ev.rmse}, {"parameter_checksum_unchanged", unchanged}});
    return kExitOk;
  }

  if (protocol == Protocol::data_efficiency) {
    const Model model = require_checkpoint(flags);
    const std::vector<TimeSeries> target = load_target(cfg);
    const std::vector<EvalReport> reports =
        data_efficiency_sweep(model, target, cfg.k_list, cfg.experiment, cfg.eval_seeds);
    std::vector<std::pair<Real, Real>> points;
    for (const EvalReport& r : reports) {
      append_report(report_path, r);
      points.emplace_back(r.metadata["k_percent"].get<Real>(), r.mean);
      log({{"event", "report"}, {"protocol", "data_efficiency"}, {"k_percent", r.metadata["k_percent"]}, {r.metric, r.mean}});
    }
    write_plot_data(cfg.out / "data_efficiency.dat", points);
    return kExitOk;
  }

  const Corpus corpus = load_corpus(cfg);
  const std::vector<TimeSeries> target = load_target(cfg);
  std::optional<Model> checkpoint;
  if (!flags.checkpoint.empty()) checkpoint.emplace(load_checkpoint(flags.checkpoint));
  std::vector<std::pair<Real, Real>> points;
  for (const std::string& name : cfg.ablations) {
    const std::vector<std::string> overrides{name};
    const EvalReport r = ablation_run(
        overrides, cfg.experiment, corpus, target, cfg.eval_seeds, checkpoint ? &*checkpoint : nullptr,
        [&](std::uint64_t seed, const SslStepStats& s) {
          nlohmann::json rec = step_record(s);
          rec["ablation"] = name;
          rec["seed"] = seed;
          log(rec);
        });
    append_report(report_path, r);
    points.emplace_back(static_cast<Real>(points.size() + 1), r.mean);
    log({{"event", "report"}, {"protocol", "ablation"}, {"ablation", name}, {r.metric, r.mean}, {"metadata", r.metadata}});
  }
  write_plot_data(cfg.out / "ablation.dat", points);
  return kExitOk;
}

int cmd_segment(const Flags& flags, std::ostream& console) {
  const RunConfig cfg = load_config(flags);
  Model model = require_checkpoint(flags);
  if (flags.input.empty()) throw ConfigError("--input is required for the segment command");
  const std::string domain = cfg.segment_domain.empty() ? model.domains().front() : cfg.segment_domain;
  IngestOptions opts;
  opts.normalize = cfg.segment_normalize;
  const std::vector<TimeSeries> series = ingest_csv(flags.input, domain, opts);
  Log log(console, cfg.out / "segment_log.jsonl");
  std::ofstream out(cfg.out / "segments.txt", std::ios::trunc);
  if (!out) throw ConfigError("cannot write segment export under '" + cfg.out.string() + "'");
  for (const TimeSeries& s : series) {
    const SegmentSet segments = segment_series(model, domain, s.values);
    write_segment_block(out, s.id, s.values, segments);
    std::string file = s.id;
    std::replace_if(file.begin(), file.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_'; }, '_');
    write_segment_overlay(cfg.out / "segments" / (file + ".dat"), s.values, segments);
    log({{"event", "segments"}, {"series", s.id}, {"length", s.values.size()}, {"segments", segments.size()},
         {"mean_length", segments.mean_length()}});
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lptm: segment-token time-series pre-training, fine-tuning, and evaluation"};
  app.require_subcommand(1);
  Flags flags;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "JSON run configuration");
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
    cmd->add_option("--out", flags.out, "output directory (overrides config)");
    cmd->add_option("--override", flags.overrides, "KEY=VALUE config override; repeatable");
  };
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "masked pre-training on a corpus manifest");
  add_common(pretrain_cmd);
  CLI::App* finetune_cmd = app.add_subcommand("finetune", "two-stage fine-tuning and test evaluation");
  add_common(finetune_cmd);
  finetune_cmd->add_option("--checkpoint", flags.checkpoint, "pre-trained checkpoint");
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "run an evaluation protocol");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint to evaluate");
  evaluate_cmd->add_option("--protocol", flags.protocol, "zero_shot | data_efficiency | ablation")->required();
  CLI::App* segment_cmd = app.add_subcommand("segment", "export learned segments of CSV series");
  add_common(segment_cmd);
  segment_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint providing the segmenters");
  segment_cmd->add_option("--input", flags.input, "CSV file to segment");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (pretrain_cmd->parsed()) return cmd_pretrain(flags, out);
    if (finetune_cmd->parsed()) return cmd_finetune(flags, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(flags, out);
    return cmd_segment(flags, out);
  } catch (const ChecksumError& e) {
    err << "error: checksum: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: data: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace lptm::cli
