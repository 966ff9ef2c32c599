// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/core.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

std::string to_string(SeriesKind kind) {
  switch (kind) {
    case SeriesKind::pretrain:
      return "pretrain";
    case SeriesKind::forecast:
      return "forecast";
    case SeriesKind::classify:
      return "classify";
  }
  return "pretrain";
}

SeriesKind series_kind_from_string(const std::string& name) {
  if (name == "pretrain") return SeriesKind::pretrain;
  if (name == "forecast") return SeriesKind::forecast;
  if (name == "classify") return SeriesKind::classify;
  throw ConfigError("unknown series kind '" + name + "'");
}

void validate_values(std::span<const Real> values) {
  if (values.size() < 2) {
    throw LengthError("series needs at least 2 time-steps, got " + std::to_string(values.size()));
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw ValueError("non-finite value at time-step " + std::to_string(k + 1));
    }
  }
}

const TimeSeries& validate_series(const TimeSeries& series) {
  validate_values(series.values);
  return series;
}

bool segment_order(const Segment& a, const Segment& b) {
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

bool covers(std::span<const Segment> segments, int series_length) {
  std::vector<char> hit(static_cast<std::size_t>(series_length), 0);
  for (const auto& s : segments) {
    for (int k = std::max(s.start, 1); k <= std::min(s.end, series_length); ++k) hit[k - 1] = 1;
  }
  return std::all_of(hit.begin(), hit.end(), [](char c) { return c != 0; });
}

SegmentSet::SegmentSet(std::vector<Segment> segments, int series_length)
    : segments_(std::move(segments)), series_length_(series_length) {
  for (const auto& s : segments_) {
    if (s.start < 1 || s.start >= s.end || s.end > series_length_) {
      throw DomainError("segment (" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                        ") outside 1.." + std::to_string(series_length_));
    }
  }
  std::stable_sort(segments_.begin(), segments_.end(), segment_order);
  if (!covers(segments_, series_length_)) {
    throw DomainError("segment set does not cover 1.." + std::to_string(series_length_));
  }
}

Real SegmentSet::mean_length() const {
  if (segments_.empty()) return 0.0;
  Real total = 0.0;
  for (const auto& s : segments_) total += s.length();
  return total / static_cast<Real>(segments_.size());
}

}  // namespace lptm
