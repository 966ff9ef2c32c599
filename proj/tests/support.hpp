// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Test helpers: central finite differences against the tape gradient, and
// small generators for randomized properties.

#pragma once

#include "lptm/autodiff.hpp"
#include "lptm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lptm::test {

using Real = double;
using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

/// Builds the scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var<Real>(Tape<Real>&)>;

struct GradCheck {
  Real max_relative = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||) over all params
  Real analytic_norm = 0.0;
  Real numeric_norm = 0.0;
};

/// Compares tape gradients of `build` with central differences (step h) for
/// every entry of `params`.
inline GradCheck gradient_check(const std::vector<Param<Real>*>& params, const LossBuilder& build, Real h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<Real> tape;
    tape.backward(build(tape));
  }
  Real diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto* p : params) {
    const Mat<Real> analytic = p->grad;
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      const Real saved = p->value(k);
      p->value(k) = saved + h;
      Tape<Real> plus;
      const Real up = build(plus).scalar();
      p->value(k) = saved - h;
      Tape<Real> minus;
      const Real down = build(minus).scalar();
      p->value(k) = saved;
      const Real numeric = (up - down) / (2.0 * h);
      diff2 += (analytic(k) - numeric) * (analytic(k) - numeric);
      a2 += analytic(k) * analytic(k);
      n2 += numeric * numeric;
    }
  }
  GradCheck out;
  out.analytic_norm = std::sqrt(a2);
  out.numeric_norm = std::sqrt(n2);
  const Real denom = std::max({out.analytic_norm, out.numeric_norm, 1e-12});
  out.max_relative = std::sqrt(diff2) / denom;
  return out;
}

inline Mat<Real> random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, Real scale = 1.0) {
  Mat<Real> m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = rng.normal() * scale;
  return m;
}

inline std::vector<Real> random_series(int t, Rng& rng, Real scale = 1.0) {
  std::vector<Real> v(static_cast<std::size_t>(t));
  for (auto& x : v) x = rng.normal() * scale;
  return v;
}

/// Fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lptm_kit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Repository root, passed by ctest; falls back to the working directory.
inline std::filesystem::path source_dir() {
  const char* env = std::getenv("LPTM_KIT_SOURCE_DIR");
  return env != nullptr ? std::filesystem::path(env) : std::filesystem::current_path();
}

}  // namespace lptm::test
