// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace lptm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

Real parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
  if (cell.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": blank cell in column '" + column + "'");
  }
  Real v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ValueError("line " + std::to_string(line_no) + ": non-numeric cell '" + cell + "' in column '" + column + "'");
  }
  if (!std::isfinite(v)) {
    throw ValueError("line " + std::to_string(line_no) + ": non-finite cell in column '" + column + "'");
  }
  return v;
}

bool is_time_column(const std::string& name) {
  const std::string n = lower(name);
  return n == "date" || n == "time" || n == "timestamp";
}

}  // namespace

// ---------------------------------------------------------------------------

SplitSpec SplitSpec::parse(const std::string& text) {
  std::vector<Real> parts;
  std::string piece;
  std::istringstream in(text);
  while (std::getline(in, piece, '/')) {
    try {
      parts.push_back(std::stod(piece));
    } catch (const std::exception&) {
      throw ConfigError("invalid split '" + text + "'");
    }
  }
  if (parts.size() != 3) throw ConfigError("split needs three parts, got '" + text + "'");
  const Real total = parts[0] + parts[1] + parts[2];
  if (!(total > 0) || parts[0] < 0 || parts[1] < 0 || parts[2] < 0) throw ConfigError("invalid split '" + text + "'");
  return {parts[0] / total, parts[1] / total, parts[2] / total};
}

SplitSpec SplitSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse(j.get<std::string>());
  if (j.is_array() && j.size() == 3) {
    return parse(std::to_string(j[0].get<Real>()) + "/" + std::to_string(j[1].get<Real>()) + "/" +
                 std::to_string(j[2].get<Real>()));
  }
  throw ConfigError("split must be a 'a/b/c' string or a three-element array");
}

SplitPoints SplitSpec::points(std::size_t length) const {
  const Real t = static_cast<Real>(length);
  auto train_end = static_cast<std::size_t>(std::llround(train * t));
  auto val_end = static_cast<std::size_t>(std::llround((train + val) * t));
  train_end = std::min(train_end, length);
  val_end = std::clamp(val_end, train_end, length);
  return {train_end, val_end};
}

std::size_t Corpus::series_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : domains) n += s.size();
  return n;
}

std::vector<std::string> Corpus::domain_ids() const {
  std::vector<std::string> out;
  for (const auto& [d, _] : domains) out.push_back(d);
  return out;
}

void Corpus::validate() const {
  for (const auto& [d, series] : domains) {
    for (const auto& s : series) {
      if (s.domain_id != d) throw ConfigError("series '" + s.id + "' carries domain '" + s.domain_id + "' but is filed under '" + d + "'");
      validate_series(s);
    }
  }
}

std::vector<TimeSeries> all_series(const Corpus& corpus) {
  std::vector<TimeSeries> out;
  for (const auto& [_, s] : corpus.domains) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TimeSeries> ingest_csv(const std::filesystem::path& path, const std::string& domain_id,
                                   const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row");
  const std::vector<std::string> header = split_line(line);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
    line_numbers.push_back(line_no);
  }

  const auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (lower(header[c]) == lower(name)) return c;
    }
    return std::nullopt;
  };

  std::vector<TimeSeries> out;
  const auto entity_col = find_col("entity");
  const auto value_col = find_col("value");
  if (entity_col && value_col && find_col("time")) {
    // Long layout: rows grouped by entity in file order.
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string& entity = rows[r][*entity_col];
      if (!options.column.empty() && entity != options.column) continue;
      auto [it, inserted] = index.emplace(entity, out.size());
      if (inserted) {
        TimeSeries s;
        s.id = entity;
        out.push_back(std::move(s));
      }
      out[it->second].values.push_back(parse_cell(rows[r][*value_col], line_numbers[r], "value"));
    }
  } else {
    std::vector<std::size_t> cols;
    if (!options.column.empty()) {
      const auto c = find_col(options.column);
      if (!c) throw ConfigError(path.string() + ": no column named '" + options.column + "'");
      cols.push_back(*c);
    } else {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (!is_time_column(header[c])) cols.push_back(c);
      }
    }
    for (std::size_t c : cols) {
      TimeSeries s;
      s.id = header[c];
      for (std::size_t r = 0; r < rows.size(); ++r) s.values.push_back(parse_cell(rows[r][c], line_numbers[r], header[c]));
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw ParseError(path.string() + ": no series found");

  for (auto& s : out) {
    s.domain_id = domain_id;
    s.kind = options.kind;
    validate_series(s);
    s.split = options.split.points(s.values.size());
  }
  if (options.normalize) {
    Real sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : out) {
      const std::size_t end = std::max<std::size_t>(s.split->train_end, 1);
      for (std::size_t k = 0; k < end; ++k) {
        sum += s.values[k];
        ++n;
      }
    }
    const Real mean = sum / static_cast<Real>(n);
    for (const auto& s : out) {
      const std::size_t end = std::max<std::size_t>(s.split->train_end, 1);
      for (std::size_t k = 0; k < end; ++k) sq += (s.values[k] - mean) * (s.values[k] - mean);
    }
    Real stddev = std::sqrt(sq / static_cast<Real>(n));
    if (!(stddev > 0.0)) stddev = 1.0;
    for (auto& s : out) {
      s.dataset_scale = {mean, stddev};
      for (Real& v : s.values) v = (v - mean) / stddev;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Family family_from_string(const std::string& name) {
  if (name == "sinusoid") return Family::sinusoid;
  if (name == "epidemic") return Family::epidemic;
  if (name == "regime_walk") return Family::regime_walk;
  if (name == "shapes") return Family::shapes;
  throw ConfigError("unknown generator family '" + name + "'");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::sinusoid:
      return "sinusoid";
    case Family::epidemic:
      return "epidemic";
    case Family::regime_walk:
      return "regime_walk";
    case Family::shapes:
      return "shapes";
  }
  return "sinusoid";
}

GeneratorSpec generator_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"domain", "family", "count", "length", "noise", "period",
                                                 "amplitude", "phase", "trend", "num_classes"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown generator key '" + key + "'");
  }
  GeneratorSpec g;
  try {
    g.domain = j.at("domain").get<std::string>();
    g.family = family_from_string(j.at("family").get<std::string>());
    g.count = j.value("count", g.count);
    g.length = j.value("length", g.length);
    g.noise = j.value("noise", g.noise);
    if (j.contains("period")) g.period = j["period"].get<Real>();
    if (j.contains("amplitude")) g.amplitude = j["amplitude"].get<Real>();
    if (j.contains("phase")) g.phase = j["phase"].get<Real>();
    if (j.contains("trend")) g.trend = j["trend"].get<Real>();
    g.num_classes = j.value("num_classes", g.num_classes);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator spec: ") + e.what());
  }
  if (g.count < 1 || g.length < 2) throw ConfigError("generator needs count >= 1 and length >= 2");
  return g;
}

namespace {

TimeSeries make_sinusoid(const GeneratorSpec& g, Rng& rng) {
  const Real period = g.period.value_or(rng.uniform(12.0, 48.0));
  const Real amplitude = g.amplitude.value_or(rng.uniform(0.5, 2.0));
  const Real phase = g.phase.value_or(rng.uniform(0.0, 2.0 * std::numbers::pi));
  const Real trend = g.trend.value_or(rng.uniform(-0.5, 0.5));
  TimeSeries s;
  s.values.resize(static_cast<std::size_t>(g.length));
  for (int k = 0; k < g.length; ++k) {
    const Real x = amplitude * std::sin(2.0 * std::numbers::pi * k / period + phase) + trend * k / g.length;
    s.values[static_cast<std::size_t>(k)] = g.noise > 0.0 ? x + rng.normal(0.0, g.noise) : x;
  }
  return s;
}

// Smooth low baseline with one sharp Gaussian peak per season.
TimeSeries make_epidemic(const GeneratorSpec& g, Rng& rng) {
  const Real period = g.period.value_or(std::floor(rng.uniform(40.0, 60.0)));
  const Real base = rng.uniform(0.1, 0.5);
  TimeSeries s;
  s.values.assign(static_cast<std::size_t>(g.length), 0.0);
  s.peak_mask.assign(static_cast<std::size_t>(g.length), false);
  const int seasons = static_cast<int>(std::ceil(g.length / period)) + 1;
  for (int k = 0; k < g.length; ++k) {
    s.values[static_cast<std::size_t>(k)] = base + 0.1 * base * std::cos(2.0 * std::numbers::pi * k / period);
  }
  for (int season = 0; season < seasons; ++season) {
    const Real center = season * period + period * rng.uniform(0.4, 0.6);
    const Real width = rng.uniform(2.0, 3.0);
    const Real height = rng.uniform(3.0, 6.0);
    for (int k = 0; k < g.length; ++k) {
      const Real z = (k - center) / width;
      s.values[static_cast<std::size_t>(k)] += height * std::exp(-0.5 * z * z);
      if (std::abs(k - center) <= 2.0 * width) s.peak_mask[static_cast<std::size_t>(k)] = true;
    }
  }
  if (g.noise > 0.0) {
    for (Real& v : s.values) v += rng.normal(0.0, g.noise);
  }
  return s;
}

// Random walk whose drift and volatility switch between regimes.
TimeSeries make_regime_walk(const GeneratorSpec& g, Rng& rng) {
  static constexpr Real drifts[] = {-0.05, 0.0, 0.05};
  static constexpr Real vols[] = {0.05, 0.2};
  int drift = static_cast<int>(rng.below(3));
  int vol = static_cast<int>(rng.below(2));
  TimeSeries s;
  s.values.resize(static_cast<std::size_t>(g.length));
  Real level = rng.normal();
  for (int k = 0; k < g.length; ++k) {
    if (rng.bernoulli(0.02)) {
      drift = static_cast<int>(rng.below(3));
      vol = static_cast<int>(rng.below(2));
    }
    level += drifts[drift] + vols[vol] * rng.normal();
    s.values[static_cast<std::size_t>(k)] = g.noise > 0.0 ? level + rng.normal(0.0, g.noise) : level;
  }
  return s;
}

// Class k: sine, sawtooth, or square wave with a random period and phase.
TimeSeries make_shape(const GeneratorSpec& g, int label, Rng& rng) {
  const Real period = rng.uniform(10.0, 30.0);
  const Real phase = rng.uniform(0.0, 1.0);
  TimeSeries s;
  s.values.resize(static_cast<std::size_t>(g.length));
  for (int k = 0; k < g.length; ++k) {
    const Real u = std::fmod(k / period + phase, 1.0);
    Real x = 0.0;
    switch (label % 3) {
      case 0:
        x = std::sin(2.0 * std::numbers::pi * u);
        break;
      case 1:
        x = 2.0 * u - 1.0;
        break;
      default:
        x = u < 0.5 ? 1.0 : -1.0;
        break;
    }
    s.values[static_cast<std::size_t>(k)] = x + (label / 3) * 0.5 + (g.noise > 0.0 ? rng.normal(0.0, g.noise) : 0.0);
  }
  s.class_label = label;
  s.kind = SeriesKind::classify;
  return s;
}

}  // namespace

Corpus synth_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  Corpus corpus;
  Rng root(seed);
  for (const GeneratorSpec& g : spec.generators) {
    if (g.count < 1 || g.length < 2) throw ConfigError("generator needs count >= 1 and length >= 2");
    Rng rng = root.split();
    auto& bucket = corpus.domains[g.domain];
    for (int k = 0; k < g.count; ++k) {
      TimeSeries s;
      switch (g.family) {
        case Family::sinusoid:
          s = make_sinusoid(g, rng);
          break;
        case Family::epidemic:
          s = make_epidemic(g, rng);
          break;
        case Family::regime_walk:
          s = make_regime_walk(g, rng);
          break;
        case Family::shapes:
          s = make_shape(g, k % std::max(2, g.num_classes), rng);
          break;
      }
      s.id = g.domain + "/" + to_string(g.family) + "/" + std::to_string(bucket.size());
      s.domain_id = g.domain;
      s.split = spec.split.points(s.values.size());
      bucket.push_back(std::move(s));
    }
  }
  return corpus;
}

Corpus corpus_from_manifest(const nlohmann::json& manifest, const std::filesystem::path& base_dir, std::uint64_t seed) {
  static const std::vector<std::string> known = {"domains", "split", "datasets", "synthetic"};
  if (!manifest.is_object()) throw ConfigError("corpus manifest must be an object");
  for (const auto& [key, _] : manifest.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown manifest key '" + key + "'");
  }
  std::optional<std::vector<std::string>> declared;
  if (manifest.contains("domains")) declared = manifest["domains"].get<std::vector<std::string>>();
  const auto check_domain = [&](const std::string& d) {
    if (declared && std::find(declared->begin(), declared->end(), d) == declared->end()) {
      throw ConfigError("unknown domain '" + d + "' referenced in corpus manifest");
    }
  };
  SplitSpec split{0.7, 0.15, 0.15};
  if (manifest.contains("split")) split = SplitSpec::from_json(manifest["split"]);

  Corpus corpus;
  if (manifest.contains("synthetic")) {
    SyntheticSpec spec;
    spec.split = split;
    for (const auto& g : manifest["synthetic"]) {
      spec.generators.push_back(generator_from_json(g));
      check_domain(spec.generators.back().domain);
    }
    corpus = synth_corpus(spec, seed);
  }
  if (manifest.contains("datasets")) {
    for (const auto& d : manifest["datasets"]) {
      static const std::vector<std::string> dkeys = {"domain", "csv", "column", "split", "normalize", "kind"};
      for (const auto& [key, _] : d.items()) {
        if (std::find(dkeys.begin(), dkeys.end(), key) == dkeys.end()) throw ConfigError("unknown dataset key '" + key + "'");
      }
      const std::string domain = d.at("domain").get<std::string>();
      check_domain(domain);
      IngestOptions opts;
      opts.column = d.value("column", std::string());
      opts.split = d.contains("split") ? SplitSpec::from_json(d["split"]) : split;
      opts.normalize = d.value("normalize", true);
      opts.kind = series_kind_from_string(d.value("kind", std::string("pretrain")));
      std::filesystem::path csv = d.at("csv").get<std::string>();
      if (csv.is_relative()) csv = base_dir / csv;
      auto series = ingest_csv(csv, domain, opts);
      auto& bucket = corpus.domains[domain];
      bucket.insert(bucket.end(), series.begin(), series.end());
    }
  }
  if (corpus.domains.empty()) throw ConfigError("corpus manifest defines no series");
  corpus.validate();
  return corpus;
}

Corpus load_manifest(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corpus manifest '" + path.string() + "': " + e.what());
  }
  return corpus_from_manifest(j, path.parent_path(), seed);
}

// ---------------------------------------------------------------------------

namespace {

Window window_from(const TimeSeries& s, std::size_t begin, std::size_t end, int window, Rng& rng) {
  const std::size_t span = end - begin;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window), span);
  const std::size_t start = begin + (span > w ? rng.below(span - w + 1) : 0);
  return Window{std::vector<Real>(s.values.begin() + static_cast<std::ptrdiff_t>(start),
                                  s.values.begin() + static_cast<std::ptrdiff_t>(start + w)),
                s.domain_id};
}

}  // namespace

std::vector<Window> sample_pretrain_batch(const Corpus& corpus, int batch_size, int window, Rng& rng) {
  if (corpus.domains.empty()) throw DomainError("cannot sample from an empty corpus");
  if (window < 2) throw DomainError("window must be at least 2");
  std::vector<const std::vector<TimeSeries>*> buckets;
  for (const auto& [_, s] : corpus.domains) {
    if (!s.empty()) buckets.push_back(&s);
  }
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const auto& bucket = *buckets[rng.below(buckets.size())];
    const TimeSeries& s = bucket[rng.below(bucket.size())];
    std::size_t end = s.split ? s.split->train_end : s.values.size();
    if (end < 2) end = s.values.size();
    out.push_back(window_from(s, 0, end, window, rng));
  }
  return out;
}

std::vector<Window> sample_pretrain_batch(const Corpus& corpus, int batch_size, int window, std::uint64_t seed) {
  Rng rng(seed);
  return sample_pretrain_batch(corpus, batch_size, window, rng);
}

std::vector<Window> heldout_windows(const Corpus& corpus, int count, int window, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<const TimeSeries*> pool;
  for (const auto& [_, series] : corpus.domains) {
    for (const auto& s : series) pool.push_back(&s);
  }
  if (pool.empty()) throw DomainError("cannot sample from an empty corpus");
  std::vector<Window> out;
  for (int k = 0; k < count; ++k) {
    const TimeSeries& s = *pool[static_cast<std::size_t>(k) % pool.size()];
    std::size_t begin = s.split ? s.split->train_end : 0;
    if (s.values.size() - begin < 2) begin = 0;
    out.push_back(window_from(s, begin, s.values.size(), window, rng));
  }
  return out;
}

TimeSeries truncate_fraction(const TimeSeries& series, Real k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw DomainError("k must lie in (0, 100]");
  const auto keep = static_cast<std::size_t>(std::floor(k_percent / 100.0 * static_cast<Real>(series.values.size()) + 1e-9));
  if (keep < 2) throw DomainError("truncation to " + std::to_string(k_percent) + "% leaves fewer than 2 points");
  TimeSeries out = series;
  out.values.resize(keep);
  if (!out.peak_mask.empty()) out.peak_mask.resize(keep);
  if (out.split) {
    out.split->train_end = std::min(out.split->train_end, keep);
    out.split->val_end = std::min(out.split->val_end, keep);
  }
  return out;
}

}  // namespace lptm
