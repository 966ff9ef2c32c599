// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Corpus assembly: CSV ingestion with dataset-level normalization, seeded
// synthetic generators, corpus manifests, and window sampling.

#pragma once

#include "lptm/core.hpp"
#include "lptm/model.hpp"
#include "lptm/rng.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lptm {

/// Contiguous train/val/test fractions.
struct SplitSpec {
  Real train = 0.6;
  Real val = 0.2;
  Real test = 0.2;

  /// Accepts "12/4/4"-style ratios (normalized to fractions).
  static SplitSpec parse(const std::string& text);
  static SplitSpec from_json(const nlohmann::json& j);
  SplitPoints points(std::size_t length) const;
};

struct Corpus {
  std::map<std::string, std::vector<TimeSeries>> domains;

  std::size_t series_count() const;
  std::vector<std::string> domain_ids() const;
  /// Throws ConfigError if a series' domain_id disagrees with its map key.
  void validate() const;
};

struct IngestOptions {
  std::string column;  // empty: every column except date/time/timestamp
  SplitSpec split;
  bool normalize = true;  // z-score with train-split statistics pooled over the file
  SeriesKind kind = SeriesKind::pretrain;
};

/// Reads a CSV with a header row. Wide layout (one entity per column) or long
/// layout with `entity,time,value` columns. Blank cells raise ParseError and
/// non-numeric cells ValueError, both naming the 1-based line.
std::vector<TimeSeries> ingest_csv(const std::filesystem::path& path, const std::string& domain_id,
                                   const IngestOptions& options = {});

enum class Family { sinusoid, epidemic, regime_walk, shapes };

Family family_from_string(const std::string& name);
std::string to_string(Family family);

struct GeneratorSpec {
  std::string domain;
  Family family = Family::sinusoid;
  int count = 8;
  int length = 256;
  Real noise = 0.05;
  // Sinusoid parameters; drawn per series when unset.
  std::optional<Real> period, amplitude, phase, trend;
  int num_classes = 3;  // shapes family only
};

GeneratorSpec generator_from_json(const nlohmann::json& j);

struct SyntheticSpec {
  std::vector<GeneratorSpec> generators;
  SplitSpec split{0.7, 0.15, 0.15};
};

/// Seeded, reproducible corpus. Epidemic series carry a peak_mask marking
/// time-steps within two widths of each seasonal peak.
Corpus synth_corpus(const SyntheticSpec& spec, std::uint64_t seed);

/// Loads a JSON manifest listing domains, CSV datasets and generator specs.
Corpus load_manifest(const std::filesystem::path& path, std::uint64_t seed);
Corpus corpus_from_manifest(const nlohmann::json& manifest, const std::filesystem::path& base_dir, std::uint64_t seed);

/// Uniform over domains, then over series in the domain, then a window
/// start inside the train region.
std::vector<Window> sample_pretrain_batch(const Corpus& corpus, int batch_size, int window, Rng& rng);
std::vector<Window> sample_pretrain_batch(const Corpus& corpus, int batch_size, int window, std::uint64_t seed);

/// Windows from the region after the train split (held-out data).
std::vector<Window> heldout_windows(const Corpus& corpus, int count, int window, std::uint64_t seed);

/// First floor(k/100 * t) values. Throws DomainError for k outside (0, 100]
/// or a result shorter than 2.
TimeSeries truncate_fraction(const TimeSeries& series, Real k_percent);

/// Series of a corpus flattened in domain order.
std::vector<TimeSeries> all_series(const Corpus& corpus);

}  // namespace lptm
