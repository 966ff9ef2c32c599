// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every module: series, segments, and the error
// hierarchy. Segment indices are 1-based and inclusive throughout.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lptm {

using Real = double;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LengthError : Error {
  using Error::Error;
};
struct ValueError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ChecksumError : Error {
  using Error::Error;
};
struct CheckpointError : Error {
  using Error::Error;
};

enum class SeriesKind { pretrain, forecast, classify };

std::string to_string(SeriesKind kind);
SeriesKind series_kind_from_string(const std::string& name);

/// Affine map applied by dataset-level normalization: stored = (raw - offset) / scale.
struct DatasetScale {
  Real offset = 0.0;
  Real scale = 1.0;

  Real to_raw(Real v) const { return v * scale + offset; }
};

/// Contiguous temporal split of one series: [0, train_end) train,
/// [train_end, val_end) validation, [val_end, t) test (0-based, half open).
struct SplitPoints {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
};

struct TimeSeries {
  std::string id;
  std::vector<Real> values;
  std::string domain_id;
  SeriesKind kind = SeriesKind::pretrain;
  std::vector<Real> forecast_target;
  std::optional<int> class_label;
  DatasetScale dataset_scale;
  std::optional<SplitPoints> split;
  std::vector<bool> peak_mask;  // synthetic epidemic series only; empty otherwise

  std::size_t length() const { return values.size(); }
};

/// Throws LengthError for t < 2 and ValueError for non-finite entries.
const TimeSeries& validate_series(const TimeSeries& series);
void validate_values(std::span<const Real> values);

struct Segment {
  int start = 1;  // 1-based, inclusive
  int end = 2;    // 1-based, inclusive
  Real score = 0.0;

  int length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Ordering used for token order: ascending start, ties by ascending end.
bool segment_order(const Segment& a, const Segment& b);

class SegmentSet {
 public:
  SegmentSet() = default;
  /// Sorts the segments and checks range and full coverage of 1..t.
  SegmentSet(std::vector<Segment> segments, int series_length);

  const std::vector<Segment>& segments() const { return segments_; }
  int series_length() const { return series_length_; }
  std::size_t size() const { return segments_.size(); }
  const Segment& operator[](std::size_t k) const { return segments_[k]; }
  Real mean_length() const;

 private:
  std::vector<Segment> segments_;
  int series_length_ = 0;
};

/// True when every index in 1..t lies inside at least one segment.
bool covers(std::span<const Segment> segments, int series_length);

}  // namespace lptm
