// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace lptm {

namespace {

std::string to_string(SegmentationMode m) { return m == SegmentationMode::adaptive ? "adaptive" : "fixed"; }
std::string to_string(NormPlacement n) { return n == NormPlacement::pre ? "pre" : "post"; }
std::string to_string(PruneBy p) { return p == PruneBy::score ? "score" : "end_index"; }
std::string to_string(DecoderFeedback f) { return f == DecoderFeedback::free_running ? "free_running" : "teacher_forced"; }

template <typename E>
E parse_enum(const std::string& value, std::initializer_list<std::pair<const char*, E>> options, const char* key) {
  for (const auto& [name, e] : options) {
    if (value == name) return e;
  }
  throw ConfigError(std::string("invalid value '") + value + "' for " + key);
}

ad::Mat<Real> column(std::span<const Real> values) {
  ad::Mat<Real> m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t k = 0; k < values.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = values[k];
  return m;
}

std::vector<Real> flatten_rows(const ad::Mat<Real>& m) {
  std::vector<Real> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

constexpr std::uint64_t kHeadSeedTag = 0x6c70746d68656164ULL;

}  // namespace

void ModelConfig::validate() const {
  backbone.validate();
  if (segmenter.hidden < 1 || segmenter.score_dim < 1) throw ConfigError("segmenter sizes must be positive");
  if (segmenter.pos_dim < 2 || segmenter.pos_dim % 2 != 0) throw ConfigError("pos_dim must be a positive even number");
  if (segmenter.max_segment_length < 1) throw ConfigError("max_segment_length must be positive");
  if (patch_length < 2) throw ConfigError("patch_length must be at least 2");
  if (forecast_decoder_layers < 0) throw ConfigError("forecast_decoder_layers must be non-negative");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"gru_hidden", c.segmenter.hidden},
      {"score_dim", c.segmenter.score_dim},
      {"pos_dim", c.segmenter.pos_dim},
      {"max_segment_length", c.segmenter.max_segment_length},
      {"model_dim", c.backbone.model_dim},
      {"num_layers", c.backbone.num_layers},
      {"num_heads", c.backbone.num_heads},
      {"feedforward_dim", c.backbone.feedforward_dim},
      {"dropout", c.backbone.dropout},
      {"norm", to_string(c.backbone.norm)},
      {"prune_by", to_string(c.choose.prune_by)},
      {"exhaustive_prune", c.choose.exhaustive},
      {"segmentation", to_string(c.segmentation)},
      {"patch_length", c.patch_length},
      {"revin_affine", c.revin_affine},
      {"decoder_feedback", to_string(c.decoder_feedback)},
      {"forecast_decoder_layers", c.forecast_decoder_layers},
      {"fallback_domain", c.fallback_domain},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (!j.is_object()) throw ConfigError("model config must be an object");
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  try {
    c.segmenter.hidden = j.value("gru_hidden", c.segmenter.hidden);
    c.segmenter.score_dim = j.value("score_dim", c.segmenter.score_dim);
    c.segmenter.pos_dim = j.value("pos_dim", c.segmenter.pos_dim);
    c.segmenter.max_segment_length = j.value("max_segment_length", c.segmenter.max_segment_length);
    c.backbone.model_dim = j.value("model_dim", c.backbone.model_dim);
    c.segmenter.model_dim = c.backbone.model_dim;
    c.backbone.num_layers = j.value("num_layers", c.backbone.num_layers);
    c.backbone.num_heads = j.value("num_heads", c.backbone.num_heads);
    c.backbone.feedforward_dim = j.value("feedforward_dim", c.backbone.feedforward_dim);
    c.backbone.dropout = j.value("dropout", c.backbone.dropout);
    c.backbone.norm = parse_enum<NormPlacement>(j.value("norm", std::string("pre")),
                                                {{"pre", NormPlacement::pre}, {"post", NormPlacement::post}}, "norm");
    c.choose.prune_by = parse_enum<PruneBy>(j.value("prune_by", std::string("score")),
                                            {{"score", PruneBy::score}, {"end_index", PruneBy::end_index}}, "prune_by");
    c.choose.exhaustive = j.value("exhaustive_prune", c.choose.exhaustive);
    c.segmentation = parse_enum<SegmentationMode>(
        j.value("segmentation", std::string("adaptive")),
        {{"adaptive", SegmentationMode::adaptive}, {"fixed", SegmentationMode::fixed}}, "segmentation");
    c.patch_length = j.value("patch_length", c.patch_length);
    c.revin_affine = j.value("revin_affine", c.revin_affine);
    c.decoder_feedback = parse_enum<DecoderFeedback>(
        j.value("decoder_feedback", std::string("free_running")),
        {{"free_running", DecoderFeedback::free_running}, {"teacher_forced", DecoderFeedback::teacher_forced}},
        "decoder_feedback");
    c.forecast_decoder_layers = j.value("forecast_decoder_layers", c.forecast_decoder_layers);
    c.fallback_domain = j.value("fallback_domain", c.fallback_domain);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig c, std::vector<std::string> domain_ids, std::uint64_t s)
    : config(std::move(c)), seed(s) {
  config.segmenter.model_dim = config.backbone.model_dim;
  config.validate();
  if (domain_ids.empty()) throw ConfigError("model needs at least one domain");
  std::sort(domain_ids.begin(), domain_ids.end());
  domain_ids.erase(std::unique(domain_ids.begin(), domain_ids.end()), domain_ids.end());
  Rng rng(seed);
  revin.affine = config.revin_affine;
  for (const auto& d : domain_ids) {
    Rng r = rng.split();
    segmenters.emplace(d, SegmenterParams<Real>(config.segmenter, r));
  }
  Rng br = rng.split();
  backbone = BackboneParams<Real>(config.backbone, br);
  const int dim = config.backbone.model_dim;
  mask_embedding = Param<Real>(uniform_matrix<Real>(1, dim, 1.0 / std::sqrt(Real(dim)), rng));
  Rng dr = rng.split();
  randmask_decoder = DecoderParams<Real>(dim, dr);
  Rng lr = rng.split();
  lastmask_decoder = DecoderParams<Real>(dim, lr);
}

std::vector<std::string> Model::domains() const {
  std::vector<std::string> out;
  for (const auto& [d, _] : segmenters) out.push_back(d);
  return out;
}

SegmenterParams<Real>& Model::segmenter_for(const std::string& domain) {
  if (auto it = segmenters.find(domain); it != segmenters.end()) return it->second;
  if (!config.fallback_domain.empty()) {
    if (auto it = segmenters.find(config.fallback_domain); it != segmenters.end()) return it->second;
  }
  return segmenters.begin()->second;
}

SegmenterParams<Real>& Model::ensure_segmenter(const std::string& domain) {
  if (auto it = segmenters.find(domain); it != segmenters.end()) return it->second;
  SegmenterParams<Real> copy = segmenter_for(domain);
  return segmenters.emplace(domain, std::move(copy)).first->second;
}

ForecastHeadParams<Real>& Model::ensure_forecast_head(int horizon) {
  if (!forecast_head || forecast_head->horizon() != horizon) {
    Rng rng(seed ^ kHeadSeedTag ^ static_cast<std::uint64_t>(horizon));
    forecast_head.emplace(ForecastHeadConfig{config.forecast_decoder_layers, horizon}, config.backbone, rng);
  }
  return *forecast_head;
}

ClassifyHeadParams<Real>& Model::ensure_classify_head(int num_classes) {
  if (!classify_head || classify_head->num_classes() != num_classes) {
    Rng rng(seed ^ kHeadSeedTag ^ (static_cast<std::uint64_t>(num_classes) << 32));
    classify_head.emplace(ClassifyHeadConfig{num_classes}, config.backbone.model_dim, rng);
  }
  return *classify_head;
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  visit([&](const std::string& name, Param<Real>& p) { out.emplace_back(name, &p); });
  return out;
}

void Model::zero_grad() {
  visit([](const std::string&, Param<Real>& p) { p.zero_grad(); });
}

void Model::set_trainable(const std::function<bool(const std::string&)>& predicate) {
  visit([&](const std::string& name, Param<Real>& p) { p.trainable = predicate(name); });
}

bool is_score_param(const std::string& name) { return name.find("/score/") != std::string::npos; }
bool is_head_param(const std::string& name) { return name.rfind("head/", 0) == 0; }

std::uint64_t parameter_checksum(Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  };
  model.visit([&](const std::string& name, Param<Real>& p) {
    mix(name.data(), name.size());
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    mix(shape, sizeof(shape));
    mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(Real));
  });
  return h;
}

Real gradient_norm(Model& model, const std::function<bool(const std::string&)>& predicate) {
  Real sq = 0.0;
  model.visit([&](const std::string& name, Param<Real>& p) {
    if (predicate(name) && p.grad.size() > 0) sq += p.grad.squaredNorm();
  });
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------

EncodedSeries encode_series(Tape<Real>& tape, Model& model, SegmenterParams<Real>& segmenter,
                            std::span<const Real> values) {
  validate_values(values);
  EncodedSeries enc;
  const Var<Real> x = tape.constant(column(values));
  enc.input = revin_normalize(tape, model.revin, x);
  enc.truth = normalize(values).first;
  enc.hidden = encode(tape, segmenter, enc.input.values);
  const int t = static_cast<int>(values.size());
  SegmentSet segments;
  if (model.config.segmentation == SegmentationMode::adaptive) {
    const int max_len = effective_max_len(t, model.config.segmenter.max_segment_length);
    segments = choose_segments(get_scores(enc.hidden.value(), segmenter, max_len), model.config.choose);
  } else {
    segments = fixed_patches(t, model.config.patch_length);
  }
  enc.tokens = embed_segments(tape, segmenter, enc.hidden, std::move(segments));
  return enc;
}

SegmentSet segment_series(Model& model, const std::string& domain, std::span<const Real> values) {
  validate_values(values);
  SegmenterParams<Real>& seg = model.segmenter_for(domain);
  const int t = static_cast<int>(values.size());
  if (model.config.segmentation == SegmentationMode::fixed) return fixed_patches(t, model.config.patch_length);
  Tape<Real> tape;
  auto input = revin_normalize(tape, model.revin, tape.constant(column(values)));
  const Var<Real> hidden = encode(tape, seg, input.values);
  const int max_len = effective_max_len(t, model.config.segmenter.max_segment_length);
  return choose_segments(get_scores(hidden.value(), seg, max_len), model.config.choose);
}

namespace {

struct TaskLoss {
  Var<Real> loss;
  Real value = 0.0;
  Real baseline = 0.0;
};

Real mean_baseline(const SegmentSet& segments, const MaskPlan& plan, std::span<const Real> truth) {
  std::vector<Real> vals;
  for (int pos : plan.masked) {
    const Segment& s = segments[static_cast<std::size_t>(pos - 1)];
    for (int k = s.start; k <= s.end; ++k) vals.push_back(truth[static_cast<std::size_t>(k - 1)]);
  }
  if (vals.empty()) return 0.0;
  const Real m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<Real>(vals.size());
  Real sq = 0.0;
  for (Real v : vals) sq += (v - m) * (v - m);
  return sq / static_cast<Real>(vals.size());
}

TaskLoss run_task(Tape<Real>& tape, Model& model, const EncodedSeries& enc, const MaskPlan& plan,
                  const Var<Real>& mask_leaf, DecoderParams<Real>& decoder, Rng* dropout_rng) {
  const TokenSequence<Real> masked = apply_mask(enc.tokens, plan, mask_leaf);
  const Var<Real> outputs = backbone_forward(tape, model.backbone, masked.tokens(), model.config.backbone, dropout_rng);
  auto dec = decode_masked(tape, decoder, outputs, enc.tokens.segments, plan, enc.truth, model.config.decoder_feedback);
  return {dec.loss, dec.outcome.loss_ssl, mean_baseline(enc.tokens.segments, plan, enc.truth)};
}

}  // namespace

SslStepStats ssl_step(Model& model, Adam& optimizer, std::span<const Window> batch, const SslConfig& ssl, Rng& rng) {
  if (batch.empty()) throw DomainError("empty pre-training batch");
  if (!ssl.use_randmask && !ssl.use_lastmask) throw ConfigError("at least one SSL task must be enabled");
  model.step += 1;
  SslStepStats stats;
  stats.step = model.step;
  const bool adaptive = model.config.segmentation == SegmentationMode::adaptive;
  const bool score_step = adaptive && ssl.score_update_interval > 0 && model.step % ssl.score_update_interval == 0;
  Rng* dropout_rng = model.config.backbone.dropout > 0.0 ? &rng : nullptr;

  model.zero_grad();
  Tape<Real> tape;
  const Var<Real> mask_leaf = tape.leaf(model.mask_embedding);
  std::vector<Var<Real>> window_losses;
  Real rand_total = 0.0, last_total = 0.0, ssl_total = 0.0, g_total = 0.0;
  stats.segments_min = std::numeric_limits<int>::max();
  for (const Window& w : batch) {
    SegmenterParams<Real>& seg = model.ensure_segmenter(w.domain);
    const EncodedSeries enc = encode_series(tape, model, seg, w.values);
    const int tokens = static_cast<int>(enc.tokens.size());
    stats.segments_mean += tokens;
    stats.segments_min = std::min(stats.segments_min, tokens);
    stats.segments_max = std::max(stats.segments_max, tokens);
    std::vector<Var<Real>> parts;
    Real window_ssl = 0.0;
    if (ssl.use_randmask) {
      const TaskLoss l = run_task(tape, model, enc, plan_randmask(tokens, ssl.gamma_randmask, rng), mask_leaf,
                                  model.randmask_decoder, dropout_rng);
      parts.push_back(l.loss);
      rand_total += l.value;
      window_ssl += l.value;
    }
    if (ssl.use_lastmask) {
      const TaskLoss l = run_task(tape, model, enc, plan_lastmask(tokens, ssl.gamma_lastmask), mask_leaf,
                                  model.lastmask_decoder, dropout_rng);
      parts.push_back(l.loss);
      last_total += l.value;
      window_ssl += l.value;
    }
    ssl_total += window_ssl;
    if (score_step) {
      const Var<Real> scores = segment_scores(tape, seg, enc.hidden, enc.tokens.segments.segments());
      const Var<Real> lg = score_loss(scores, window_ssl);
      g_total += lg.scalar();
      parts.push_back(lg);
    }
    Var<Real> total = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) total = ad::add(total, parts[k]);
    window_losses.push_back(total);
  }
  const Real n = static_cast<Real>(batch.size());
  const Var<Real> loss = ad::scale(ad::sum(ad::concat_rows<Real>(window_losses)), 1.0 / n);
  tape.backward(loss);

  std::vector<NamedParam> params = model.parameters();
  if (!score_step) {
    std::erase_if(params, [](const NamedParam& p) { return is_score_param(p.first); });
  }
  optimizer.step(params);

  if (ssl.use_randmask) stats.loss_randmask = rand_total / n;
  if (ssl.use_lastmask) stats.loss_lastmask = last_total / n;
  stats.loss_ssl = ssl_total / n;
  if (score_step) stats.loss_g = g_total / n;
  stats.segments_mean /= n;
  return stats;
}

SslEvaluation evaluate_ssl(Model& model, std::span<const Window> windows, const SslConfig& ssl, std::uint64_t seed) {
  SslEvaluation out;
  if (windows.empty()) return out;
  Rng rng(seed);
  for (const Window& w : windows) {
    Tape<Real> tape;
    const Var<Real> mask_leaf = tape.constant(model.mask_embedding.value);
    SegmenterParams<Real>& seg = model.segmenter_for(w.domain);
    const EncodedSeries enc = encode_series(tape, model, seg, w.values);
    const int tokens = static_cast<int>(enc.tokens.size());
    if (ssl.use_randmask) {
      const TaskLoss l = run_task(tape, model, enc, plan_randmask(tokens, ssl.gamma_randmask, rng), mask_leaf,
                                  model.randmask_decoder, nullptr);
      out.loss_ssl += l.value;
      out.mean_baseline += l.baseline;
    }
    if (ssl.use_lastmask) {
      const TaskLoss l = run_task(tape, model, enc, plan_lastmask(tokens, ssl.gamma_lastmask), mask_leaf,
                                  model.lastmask_decoder, nullptr);
      out.loss_ssl += l.value;
      out.mean_baseline += l.baseline;
    }
  }
  out.loss_ssl /= static_cast<Real>(windows.size());
  out.mean_baseline /= static_cast<Real>(windows.size());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Real> zero_shot_forecast(Model& model, std::span<const Real> context, const std::string& domain,
                                     int horizon) {
  if (horizon < 0) throw DomainError("forecast horizon must be non-negative");
  if (horizon == 0) return {};
  SegmenterParams<Real>& seg = model.segmenter_for(domain);
  Tape<Real> tape;
  const EncodedSeries enc = encode_series(tape, model, seg, context);
  const int t = static_cast<int>(context.size());
  const int seg_len = std::max(2, static_cast<int>(std::lround(enc.tokens.segments.mean_length())));
  const int extra = (horizon + seg_len - 1) / seg_len;
  std::vector<Segment> placeholders;
  for (int m = 0; m < extra; ++m) {
    const int start = t + 1 + m * seg_len;
    placeholders.push_back({start, start + seg_len - 1, 0.0});
  }
  const Var<Real> mask_leaf = tape.constant(model.mask_embedding.value);
  const Var<Real> content_parts[] = {enc.tokens.content,
                                     ad::gather_rows(mask_leaf, std::vector<Eigen::Index>(static_cast<std::size_t>(extra), 0))};
  const Var<Real> positional_parts[] = {enc.tokens.positional, positional_tokens(tape, seg, placeholders)};
  const Var<Real> tokens = ad::add(ad::concat_rows<Real>(content_parts), ad::concat_rows<Real>(positional_parts));
  const Var<Real> outputs = backbone_forward(tape, model.backbone, tokens, model.config.backbone);
  const Var<Real> tail = ad::slice_rows(outputs, static_cast<Eigen::Index>(enc.tokens.size()), extra);
  const Var<Real> decoded = decode_sequences(tape, model.lastmask_decoder, tail, seg_len, DecoderFeedback::free_running);
  std::vector<Real> flat = flatten_rows(decoded.value());
  flat.resize(static_cast<std::size_t>(horizon));
  const Var<Real> denorm = revin_denormalize(tape, model.revin, tape.constant(column(flat)), enc.input);
  std::vector<Real> out(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) out[static_cast<std::size_t>(k)] = denorm.value()(k, 0);
  return out;
}

std::vector<Real> forecast_series(Model& model, std::span<const Real> context, const std::string& domain) {
  if (!model.forecast_head) throw ConfigError("model has no forecast head; fine-tune for forecasting first");
  SegmenterParams<Real>& seg = model.segmenter_for(domain);
  Tape<Real> tape;
  const EncodedSeries enc = encode_series(tape, model, seg, context);
  const Var<Real> outputs = backbone_forward(tape, model.backbone, enc.tokens.tokens(), model.config.backbone);
  const Var<Real> pred = forecast(tape, *model.forecast_head, model.revin, outputs, enc.input, model.config.backbone.num_heads);
  return std::vector<Real>(pred.value().data(), pred.value().data() + pred.value().size());
}

std::vector<Real> classify_series(Model& model, std::span<const Real> values, const std::string& domain) {
  if (!model.classify_head) throw ConfigError("model has no classification head; fine-tune for classification first");
  SegmenterParams<Real>& seg = model.segmenter_for(domain);
  Tape<Real> tape;
  const EncodedSeries enc = encode_series(tape, model, seg, values);
  const Var<Real> outputs = backbone_forward(tape, model.backbone, enc.tokens.tokens(), model.config.backbone);
  const Var<Real> logits = classify(tape, *model.classify_head, outputs);
  return std::vector<Real>(logits.value().data(), logits.value().data() + logits.value().size());
}

// ---------------------------------------------------------------------------

std::pair<int, int> FineTuneSchedule::stage_epochs() const {
  if (epochs < 0) throw ConfigError("fine-tune epochs must be non-negative");
  int probe = 0, full = epochs;
  if (linear_probe) {
    probe = probe_epochs.value_or(static_cast<int>(std::lround(probe_fraction * epochs)));
    full = full_epochs.value_or(epochs - probe);
    if (probe <= 0) throw ConfigError("linear probing requested with zero probe epochs");
  } else {
    full = full_epochs.value_or(epochs);
  }
  if (full < 0) throw ConfigError("full fine-tune epochs must be non-negative");
  return {probe, full};
}

std::vector<TrainingExample> make_examples(std::span<const TimeSeries> series, const FineTuneTask& task) {
  std::vector<TrainingExample> out;
  for (const TimeSeries& s : series) {
    const std::size_t n = s.split ? s.split->train_end : s.values.size();
    const std::span<const Real> region(s.values.data(), n);
    if (task.kind == SeriesKind::classify) {
      if (!s.class_label) throw ValueError("series '" + s.id + "' has no class label");
      out.push_back({std::vector<Real>(region.begin(), region.end()), {}, *s.class_label, s.domain_id});
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(task.horizon);
    const std::size_t c = static_cast<std::size_t>(task.context);
    if (n < k + 2) continue;
    if (n < c + k) {
      out.push_back({std::vector<Real>(region.begin(), region.end() - static_cast<std::ptrdiff_t>(k)),
                     std::vector<Real>(region.end() - static_cast<std::ptrdiff_t>(k), region.end()), 0, s.domain_id});
      continue;
    }
    for (std::size_t at = 0; at + c + k <= n; at += static_cast<std::size_t>(std::max(1, task.stride))) {
      out.push_back({std::vector<Real>(region.begin() + static_cast<std::ptrdiff_t>(at),
                                       region.begin() + static_cast<std::ptrdiff_t>(at + c)),
                     std::vector<Real>(region.begin() + static_cast<std::ptrdiff_t>(at + c),
                                       region.begin() + static_cast<std::ptrdiff_t>(at + c + k)),
                     0, s.domain_id});
    }
  }
  return out;
}

namespace {

Var<Real> example_loss(Tape<Real>& tape, Model& model, const TrainingExample& ex, const FineTuneTask& task) {
  SegmenterParams<Real>& seg = model.segmenter_for(ex.domain);
  const EncodedSeries enc = encode_series(tape, model, seg, ex.context);
  const Var<Real> outputs = backbone_forward(tape, model.backbone, enc.tokens.tokens(), model.config.backbone);
  if (task.kind == SeriesKind::classify) {
    return ad::softmax_cross_entropy(classify(tape, *model.classify_head, outputs), {ex.label});
  }
  const Var<Real> pred = forecast(tape, *model.forecast_head, model.revin, outputs, enc.input, model.config.backbone.num_heads);
  return ad::weighted_mse(pred, column(ex.target), ad::Mat<Real>(ad::Mat<Real>::Ones(pred.rows(), 1)));
}

}  // namespace

FineTuneResult fine_tune(Model& model, std::span<const TimeSeries> train, const FineTuneTask& task,
                         const FineTuneSchedule& schedule) {
  const auto [probe_epochs, full_epochs] = schedule.stage_epochs();
  if (schedule.batch_size < 1) throw ConfigError("batch_size must be positive");
  const std::vector<TrainingExample> examples = make_examples(train, task);
  if (examples.empty()) throw DomainError("fine-tuning split yields no training examples");
  for (const auto& ex : examples) model.ensure_segmenter(ex.domain);
  if (task.kind == SeriesKind::classify) {
    model.ensure_classify_head(task.num_classes);
  } else {
    model.ensure_forecast_head(task.horizon);
  }

  FineTuneResult result;
  Rng rng(schedule.seed);
  const auto not_head = [](const std::string& name) { return !is_head_param(name); };
  const auto run_stage = [&](int epochs, bool head_only, std::vector<Real>& curve) {
    if (head_only) {
      model.set_trainable(is_head_param);
    } else {
      model.set_trainable([](const std::string&) { return true; });
    }
    Adam optimizer(AdamConfig{schedule.lr});
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
      std::size_t batches = (order.size() + static_cast<std::size_t>(schedule.batch_size) - 1) /
                            static_cast<std::size_t>(schedule.batch_size);
      if (schedule.max_batches_per_epoch > 0) batches = std::min(batches, static_cast<std::size_t>(schedule.max_batches_per_epoch));
      Real epoch_loss = 0.0;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t begin = b * static_cast<std::size_t>(schedule.batch_size);
        const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(schedule.batch_size));
        model.zero_grad();
        Tape<Real> tape;
        std::vector<Var<Real>> losses;
        for (std::size_t k = begin; k < end; ++k) losses.push_back(example_loss(tape, model, examples[order[k]], task));
        const Var<Real> loss =
            ad::scale(ad::sum(ad::concat_rows<Real>(losses)), 1.0 / static_cast<Real>(end - begin));
        tape.backward(loss);
        if (head_only) result.probe_frozen_grad_norm = std::max(result.probe_frozen_grad_norm, gradient_norm(model, not_head));
        optimizer.step(model.parameters());
        epoch_loss += loss.scalar();
      }
      curve.push_back(epoch_loss / static_cast<Real>(batches));
    }
  };
  if (probe_epochs > 0) run_stage(probe_epochs, true, result.probe_losses);
  run_stage(full_epochs, false, result.full_losses);
  model.set_trainable([](const std::string&) { return true; });
  return result;
}

}  // namespace lptm
