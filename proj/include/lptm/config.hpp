// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration for the command-line tool. A config file is a JSON object
// overlaid on the defaults below; any key absent from the defaults is
// rejected. Overrides use dotted paths, e.g. `pretrain.steps=50`.
//
//   corpus                 path of the pre-training corpus manifest
//   target.manifest        downstream data manifest; empty reuses the corpus
//   target.domain          keep only this domain of the downstream data; empty keeps all
//   seed, out              master seed; output directory
//   model.*                architecture (see model_config_from_json)
//   ssl.*                  gamma_randmask, gamma_lastmask, use_randmask, use_lastmask, score_update_interval
//   pretrain.*             steps, batch_size, window, lr, eval_every, eval_windows, patience
//   finetune.*             task, horizon, context, stride, num_classes, epochs, probe_fraction,
//                          linear_probe, probe_epochs, full_epochs, lr, batch_size, max_batches_per_epoch
//   evaluate.*             horizon, context, tail_fraction, seeds, k_list, ablations
//   segment.*              domain, normalize

#pragma once

#include "lptm/eval.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace lptm {

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path target_manifest;
  std::string target_domain;
  std::uint64_t seed = 0;
  std::filesystem::path out = "runs/lptm";
  Experiment experiment;  // model, ssl, pretrain, finetune settings
  ForecastEvalOptions zero_shot;
  std::vector<std::uint64_t> eval_seeds{0};
  std::vector<Real> k_list{20, 50, 100};
  std::vector<std::string> ablations{"no_segment"};
  std::string segment_domain;
  bool segment_normalize = false;
};

/// Every key with its default value.
nlohmann::json default_config_json();

/// Overlays `overrides` on `base`. Keys missing from `base` raise ConfigError
/// naming the full dotted path; `null` defaults accept any value.
nlohmann::json overlay(const nlohmann::json& base, const nlohmann::json& overrides, const std::string& path = "");

/// Applies one `dotted.key=value` assignment. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Reads `path` (may be empty for pure defaults), applies overrides, and
/// resolves relative manifest paths against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace lptm
