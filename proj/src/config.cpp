// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/config.hpp"

#include <fstream>

namespace lptm {

namespace {

nlohmann::json optional_int(const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

template <typename T>
T read(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  const Experiment& e = c.experiment;
  return {
      {"corpus", c.corpus.string()},
      {"target", {{"manifest", c.target_manifest.string()}, {"domain", c.target_domain}}},
      {"seed", c.seed},
      {"out", c.out.string()},
      {"model", to_json(e.model)},
      {"ssl",
       {{"gamma_randmask", e.ssl.gamma_randmask},
        {"gamma_lastmask", e.ssl.gamma_lastmask},
        {"use_randmask", e.ssl.use_randmask},
        {"use_lastmask", e.ssl.use_lastmask},
        {"score_update_interval", e.ssl.score_update_interval}}},
      {"pretrain",
       {{"steps", e.pretrain.steps},
        {"batch_size", e.pretrain.batch_size},
        {"window", e.pretrain.window},
        {"lr", e.pretrain.lr},
        {"eval_every", e.pretrain.eval_every},
        {"eval_windows", e.pretrain.eval_windows},
        {"patience", e.pretrain.patience}}},
      {"finetune",
       {{"task", to_string(e.task.kind)},
        {"horizon", e.task.horizon},
        {"context", e.task.context},
        {"stride", e.task.stride},
        {"num_classes", e.task.num_classes},
        {"epochs", e.schedule.epochs},
        {"probe_fraction", e.schedule.probe_fraction},
        {"linear_probe", e.schedule.linear_probe},
        {"probe_epochs", optional_int(e.schedule.probe_epochs)},
        {"full_epochs", optional_int(e.schedule.full_epochs)},
        {"lr", e.schedule.lr},
        {"batch_size", e.schedule.batch_size},
        {"max_batches_per_epoch", e.schedule.max_batches_per_epoch}}},
      {"evaluate",
       {{"horizon", c.zero_shot.horizon},
        {"context", c.zero_shot.context},
        {"tail_fraction", c.zero_shot.tail_fraction},
        {"seeds", c.eval_seeds},
        {"k_list", c.k_list},
        {"ablations", c.ablations}}},
      {"segment", {{"domain", c.segment_domain}, {"normalize", c.segment_normalize}}},
  };
}

nlohmann::json default_config_json() {
  RunConfig c;
  c.experiment.pretrain.steps = 500;
  c.experiment.pretrain.window = 96;
  c.experiment.schedule.max_batches_per_epoch = 16;
  return to_json(c);
}

nlohmann::json overlay(const nlohmann::json& base, const nlohmann::json& overrides, const std::string& path) {
  if (!overrides.is_object()) {
    throw ConfigError((path.empty() ? std::string("config") : path) + " must be an object");
  }
  nlohmann::json out = base;
  for (const auto& [key, value] : overrides.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    const nlohmann::json& def = base[key];
    if (def.is_object()) {
      out[key] = overlay(def, value, full);
    } else if (def.is_null() || value.is_null() || def.type() == value.type() ||
               (def.is_number() && value.is_number())) {
      out[key] = value;
    } else {
      throw ConfigError("config key '" + full + "' expects " + def.type_name() + ", got " + value.type_name());
    }
  }
  return out;
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // Build a nested object from the dotted path and overlay it.
  nlohmann::json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t at; (at = rest.find('.')) != std::string::npos; rest = rest.substr(at + 1)) {
    parts.push_back(rest.substr(0, at));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = nlohmann::json{{*it, patch}};
  }
  config = overlay(config, patch);
}

RunConfig run_config_from_json(const nlohmann::json& input) {
  const nlohmann::json j = overlay(default_config_json(), input);
  RunConfig c;
  try {
    c.corpus = j.at("corpus").get<std::string>();
    c.target_manifest = j.at("target").at("manifest").get<std::string>();
    c.target_domain = j.at("target").at("domain").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = j.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Experiment& e = c.experiment;
  e.model = model_config_from_json(j.at("model"));

  e.ssl.gamma_randmask = read<Real>(j, "ssl", "gamma_randmask");
  e.ssl.gamma_lastmask = read<Real>(j, "ssl", "gamma_lastmask");
  e.ssl.use_randmask = read<bool>(j, "ssl", "use_randmask");
  e.ssl.use_lastmask = read<bool>(j, "ssl", "use_lastmask");
  e.ssl.score_update_interval = read<int>(j, "ssl", "score_update_interval");
  if (!(e.ssl.gamma_randmask >= 0.0 && e.ssl.gamma_randmask <= 1.0)) throw ConfigError("ssl.gamma_randmask must lie in [0, 1]");
  if (!(e.ssl.gamma_lastmask > 0.0 && e.ssl.gamma_lastmask <= 1.0)) throw ConfigError("ssl.gamma_lastmask must lie in (0, 1]");
  if (!e.ssl.use_randmask && !e.ssl.use_lastmask) throw ConfigError("at least one SSL task must be enabled");

  e.pretrain.steps = read<int>(j, "pretrain", "steps");
  e.pretrain.batch_size = read<int>(j, "pretrain", "batch_size");
  e.pretrain.window = read<int>(j, "pretrain", "window");
  e.pretrain.lr = read<Real>(j, "pretrain", "lr");
  e.pretrain.eval_every = read<int>(j, "pretrain", "eval_every");
  e.pretrain.eval_windows = read<int>(j, "pretrain", "eval_windows");
  e.pretrain.patience = read<int>(j, "pretrain", "patience");
  e.pretrain.seed = c.seed;

  e.task.kind = series_kind_from_string(read<std::string>(j, "finetune", "task"));
  if (e.task.kind == SeriesKind::pretrain) throw ConfigError("finetune.task must be forecast or classify");
  e.task.horizon = read<int>(j, "finetune", "horizon");
  e.task.context = read<int>(j, "finetune", "context");
  e.task.stride = read<int>(j, "finetune", "stride");
  e.task.num_classes = read<int>(j, "finetune", "num_classes");
  e.schedule.epochs = read<int>(j, "finetune", "epochs");
  e.schedule.probe_fraction = read<Real>(j, "finetune", "probe_fraction");
  e.schedule.linear_probe = read<bool>(j, "finetune", "linear_probe");
  const auto opt = [&](const char* key) -> std::optional<int> {
    const nlohmann::json& v = j.at("finetune").at(key);
    if (v.is_null()) return std::nullopt;
    return read<int>(j, "finetune", key);
  };
  e.schedule.probe_epochs = opt("probe_epochs");
  e.schedule.full_epochs = opt("full_epochs");
  e.schedule.lr = read<Real>(j, "finetune", "lr");
  e.schedule.batch_size = read<int>(j, "finetune", "batch_size");
  e.schedule.max_batches_per_epoch = read<int>(j, "finetune", "max_batches_per_epoch");
  e.schedule.seed = c.seed;
  e.schedule.stage_epochs();
  if (e.task.horizon < 1) throw ConfigError("finetune.horizon must be at least 1");
  if (e.task.context < 2) throw ConfigError("finetune.context must be at least 2");
  e.eval.horizon = e.task.horizon;
  e.eval.context = e.task.context;
  e.eval.region = EvalRegion::test_split;

  c.zero_shot.horizon = read<int>(j, "evaluate", "horizon");
  c.zero_shot.context = read<int>(j, "evaluate", "context");
  c.zero_shot.tail_fraction = read<Real>(j, "evaluate", "tail_fraction");
  c.zero_shot.region = EvalRegion::tail;
  c.eval_seeds = read<std::vector<std::uint64_t>>(j, "evaluate", "seeds");
  c.k_list = read<std::vector<Real>>(j, "evaluate", "k_list");
  c.ablations = read<std::vector<std::string>>(j, "evaluate", "ablations");
  for (const std::string& a : c.ablations) ablation_from_string(a);
  if (c.eval_seeds.empty()) throw ConfigError("evaluate.seeds must not be empty");

  c.segment_domain = read<std::string>(j, "segment", "domain");
  c.segment_normalize = read<bool>(j, "segment", "normalize");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config '" + path.string() + "': " + e.what());
    }
  }
  nlohmann::json merged = overlay(default_config_json(), j);
  for (const std::string& o : overrides) apply_override(merged, o);
  RunConfig c = run_config_from_json(merged);
  const std::filesystem::path base = path.empty() ? std::filesystem::path() : path.parent_path();
  if (!c.corpus.empty() && c.corpus.is_relative()) c.corpus = base / c.corpus;
  if (!c.target_manifest.empty() && c.target_manifest.is_relative()) c.target_manifest = base / c.target_manifest;
  return c;
}

}  // namespace lptm
