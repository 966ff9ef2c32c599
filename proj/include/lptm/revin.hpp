// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Reversible instance normalization. Statistics are the mean and population
// standard deviation of the whole input window; the divisor is std + epsilon.
// The tape variants keep both statistics differentiable so gradients flow
// through the normalize and denormalize layers.

#pragma once

#include "lptm/core.hpp"
#include "lptm/layers.hpp"

#include <span>
#include <utility>
#include <vector>

namespace lptm {

inline constexpr Real kRevinEpsilon = 1e-5;

struct InstanceStats {
  Real mean = 0.0;
  Real std = 0.0;
  Real epsilon = kRevinEpsilon;

  Real divisor() const { return std + epsilon; }
};

InstanceStats instance_stats(std::span<const Real> values, Real epsilon = kRevinEpsilon);

/// Returns (x - mean) / (std + eps) and the statistics. Throws ValueError on
/// non-finite input and LengthError on empty input.
std::pair<std::vector<Real>, InstanceStats> normalize(std::span<const Real> values, Real epsilon = kRevinEpsilon);

std::vector<Real> denormalize(std::span<const Real> values, const InstanceStats& stats);

/// Learnable affine terms applied after normalization; identity at init.
template <typename S>
struct RevinParams {
  Param<S> scale{Mat<S>::Ones(1, 1)};
  Param<S> shift{Mat<S>::Zero(1, 1)};
  bool affine = true;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/scale", scale);
    f(prefix + "/shift", shift);
  }
};

template <typename S>
struct NormalizedInput {
  Var<S> values;   // t x 1
  Var<S> mean;     // 1 x 1
  Var<S> divisor;  // 1 x 1, std + epsilon
  InstanceStats stats;
};

template <typename S>
NormalizedInput<S> revin_normalize(Tape<S>& tape, RevinParams<S>& p, const Var<S>& x, S epsilon = S(kRevinEpsilon)) {
  NormalizedInput<S> out;
  out.mean = ad::mean(x);
  const Var<S> centered = ad::sub_scalar(x, out.mean);
  const Var<S> stddev = ad::sqrt(ad::mean(ad::square(centered)));
  out.divisor = ad::affine(stddev, S(1), epsilon);
  out.values = ad::div_scalar(centered, out.divisor);
  if (p.affine) out.values = ad::add_scalar(ad::mul_scalar(out.values, tape.leaf(p.scale)), tape.leaf(p.shift));
  out.stats = InstanceStats{static_cast<Real>(out.mean.scalar()), static_cast<Real>(stddev.scalar()),
                            static_cast<Real>(epsilon)};
  return out;
}

template <typename S>
Var<S> revin_denormalize(Tape<S>& tape, RevinParams<S>& p, const Var<S>& y, const NormalizedInput<S>& input) {
  Var<S> v = y;
  if (p.affine) v = ad::div_scalar(ad::sub_scalar(v, tape.leaf(p.shift)), tape.leaf(p.scale));
  return ad::add_scalar(ad::mul_scalar(v, input.divisor), input.mean);
}

}  // namespace lptm
