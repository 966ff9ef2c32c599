// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lptm {

SegmentScores::SegmentScores(int series_length, int max_len)
    : t_(series_length), max_len_(std::max(1, max_len)) {
  if (series_length < 2) throw LengthError("score table needs t >= 2");
  table_.assign(static_cast<std::size_t>(t_ - 1) * static_cast<std::size_t>(max_len_),
                std::numeric_limits<Real>::quiet_NaN());
}

int effective_max_len(int series_length, int cap) {
  return std::max(1, std::min(series_length - 1, cap));
}

namespace {

struct Candidate {
  int start;
  int end;
  Real score;
};

// Coverage counts make a removal check O(segment length).
class Coverage {
 public:
  explicit Coverage(int t) : count_(static_cast<std::size_t>(t) + 1, 0) {}
  void add(const Candidate& c) {
    for (int k = c.start; k <= c.end; ++k) ++count_[k];
  }
  void remove(const Candidate& c) {
    for (int k = c.start; k <= c.end; ++k) --count_[k];
  }
  bool removable(const Candidate& c) const {
    for (int k = c.start; k <= c.end; ++k) {
      if (count_[k] < 2) return false;
    }
    return true;
  }

 private:
  std::vector<int> count_;
};

}  // namespace

SegmentSet choose_segments(const SegmentScores& scores, const ChooseOptions& options) {
  const int t = scores.series_length();
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(t - 1));
  for (int i = 1; i < t; ++i) {
    int best = i + 1;
    Real best_score = scores.at(i, best);
    for (int j = i + 2; j <= scores.last_end(i); ++j) {
      if (scores.at(i, j) > best_score) {
        best = j;
        best_score = scores.at(i, j);
      }
    }
    cands.push_back({i, best, best_score});
  }

  const auto key = [&](const Candidate& c) {
    return options.prune_by == PruneBy::score ? c.score : static_cast<Real>(c.end);
  };
  // Removal order: ascending key, ties toward the smaller start.
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(cands[a]) < key(cands[b]); });

  Coverage coverage(t);
  for (const auto& c : cands) coverage.add(c);
  std::vector<char> alive(cands.size(), 1);
  for (std::size_t idx : order) {
    if (coverage.removable(cands[idx])) {
      coverage.remove(cands[idx]);
      alive[idx] = 0;
    } else if (!options.exhaustive) {
      break;
    }
  }

  std::vector<Segment> kept;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (alive[k]) kept.push_back({cands[k].start, cands[k].end, cands[k].score});
  }
  return SegmentSet(std::move(kept), t);
}

SegmentSet fixed_patches(int series_length, int patch_length) {
  if (series_length < 2) throw LengthError("patching needs t >= 2");
  if (patch_length < 2) throw DomainError("patch length must be at least 2");
  const int p = std::min(patch_length, series_length);
  const int count = (series_length + patch_length - 1) / patch_length;
  std::vector<Segment> segs;
  segs.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    int start = 1 + k * patch_length;
    int end = start + p - 1;
    if (end > series_length) {
      end = series_length;
      start = series_length - p + 1;
    }
    segs.push_back({start, end, 0.0});
  }
  return SegmentSet(std::move(segs), series_length);
}

std::vector<Real> positional_encoding(int position, int dim) {
  if (position < 0) throw DomainError("position must be non-negative");
  if (dim <= 0 || dim % 2 != 0) throw DomainError("positional encoding dimension must be positive and even");
  std::vector<Real> out(static_cast<std::size_t>(dim));
  const Real pos = position;
  for (int d = 0; d < dim; ++d) {
    const int e = d % 2 == 0 ? d : d - 1;
    const Real angle = pos / std::pow(10.0, 5.0 * e / dim);
    out[static_cast<std::size_t>(d)] = d % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return out;
}

}  // namespace lptm
