// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation as a node holding its value; Var is a light
// handle (tape pointer + node index). Row-vector convention: a sequence of n
// d-dimensional vectors is an n x d matrix and a linear map is x * W.
// Leaves bound to a Param accumulate their gradient into Param::grad when
// Tape::backward runs. Nodes whose inputs carry no gradient store no
// backward closure.

#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace lptm::ad {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Param {
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool trainable = true;

  Param() = default;
  explicit Param(Mat<Scalar> v) : value(std::move(v)), grad(Mat<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Mat<Scalar>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
  bool needs_grad() const { return tape_->needs_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) { return push(std::move(value), false, nullptr, {}); }

  Var<Scalar> scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<Scalar> leaf(Param<Scalar>& param) { return push(param.value, param.trainable, &param, {}); }

  /// Records an op. `backward` receives the node's output gradient.
  Var<Scalar> record(Matrix value, bool needs_grad, Backward backward) {
    return push(std::move(value), needs_grad, nullptr, needs_grad ? std::move(backward) : Backward{});
  }

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Accumulation target for a node's gradient; allocated on first use.
  Matrix& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  Matrix& grad(const Var<Scalar>& v) { return grad(v.id()); }

  /// Seeds d(loss)/d(loss) = 1 on a 1x1 node and propagates to every leaf.
  void backward(const Var<Scalar>& loss) {
    assert(loss.rows() == 1 && loss.cols() == 1);
    if (!needs_grad(loss.id())) return;
    grad(loss.id()).setOnes();
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Param<Scalar>* param = nullptr;
    Backward backward;
  };

  Var<Scalar> push(Matrix value, bool needs_grad, Param<Scalar>* param, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, param, std::move(backward)});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Linear algebra

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  auto& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

/// a * b^T
template <typename S>
Var<S> matmul_bt(const Var<S>& a, const Var<S>& b) {
  auto& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value().transpose(), a.needs_grad() || b.needs_grad(),
                  [ia, ib](Tape<S>& t, const Mat<S>& g) {
                    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
                    if (t.needs_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
                  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  auto& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  auto& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) -= g;
  });
}

/// Elementwise product.
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  auto& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), a.needs_grad() || b.needs_grad(),
                  [ia, ib](Tape<S>& t, const Mat<S>& g) {
                    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
                    if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
                  });
}

/// alpha * a + beta
template <typename S>
Var<S> affine(const Var<S>& a, S alpha, S beta) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = (alpha * a.value().array() + beta).matrix();
  return t.record(std::move(out), a.needs_grad(), [ia, alpha](Tape<S>& t, const Mat<S>& g) { t.grad(ia) += alpha * g; });
}

template <typename S>
Var<S> scale(const Var<S>& a, S alpha) {
  return affine(a, alpha, S(0));
}

/// Adds a 1 x n row vector to every row of a.
template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row) {
  assert(row.rows() == 1 && row.cols() == a.cols());
  auto& t = a.tape();
  const int ia = a.id(), ir = row.id();
  Mat<S> out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), a.needs_grad() || row.needs_grad(), [ia, ir](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

/// x * W + b for a weight W (in x out) and bias b (1 x out).
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& weight, const Var<S>& bias) {
  return add_row(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Broadcasting against a 1x1 node

template <typename S>
Var<S> add_scalar(const Var<S>& a, const Var<S>& s) {
  auto& t = a.tape();
  const int ia = a.id(), is = s.id();
  Mat<S> out = (a.value().array() + s.scalar()).matrix();
  return t.record(std::move(out), a.needs_grad() || s.needs_grad(), [ia, is](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(is)) t.grad(is)(0, 0) += g.sum();
  });
}

template <typename S>
Var<S> sub_scalar(const Var<S>& a, const Var<S>& s) {
  auto& t = a.tape();
  const int ia = a.id(), is = s.id();
  Mat<S> out = (a.value().array() - s.scalar()).matrix();
  return t.record(std::move(out), a.needs_grad() || s.needs_grad(), [ia, is](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(is)) t.grad(is)(0, 0) -= g.sum();
  });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, const Var<S>& s) {
  auto& t = a.tape();
  const int ia = a.id(), is = s.id();
  Mat<S> out = a.value() * s.scalar();
  return t.record(std::move(out), a.needs_grad() || s.needs_grad(), [ia, is](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ia)) t.grad(ia) += g * t.value(is)(0, 0);
    if (t.needs_grad(is)) t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
  });
}

template <typename S>
Var<S> div_scalar(const Var<S>& a, const Var<S>& s) {
  auto& t = a.tape();
  const int ia = a.id(), is = s.id();
  const S d = s.scalar();
  Mat<S> out = a.value() / d;
  return t.record(std::move(out), a.needs_grad() || s.needs_grad(), [ia, is](Tape<S>& t, const Mat<S>& g) {
    const S d = t.value(is)(0, 0);
    if (t.needs_grad(ia)) t.grad(ia) += g / d;
    if (t.needs_grad(is)) t.grad(is)(0, 0) -= g.cwiseProduct(t.value(ia)).sum() / (d * d);
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

namespace detail {

template <typename S, typename F, typename D>
Var<S> unary(const Var<S>& a, F forward, D derivative) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().unaryExpr(forward);
  return t.record(std::move(out), a.needs_grad(), [ia, derivative](Tape<S>& t, const Mat<S>& g) {
    const Mat<S>& x = t.value(ia);
    Mat<S>& gx = t.grad(ia);
    for (Eigen::Index k = 0; k < x.size(); ++k) gx(k) += g(k) * derivative(x(k));
  });
}

}  // namespace detail

template <typename S>
Var<S> tanh(const Var<S>& a) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().array().tanh().matrix();
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), a.needs_grad(), [ia, self](Tape<S>& t, const Mat<S>& g) {
    const auto& y = t.value(self).array();
    t.grad(ia).array() += g.array() * (S(1) - y * y);
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), a.needs_grad(), [ia, self](Tape<S>& t, const Mat<S>& g) {
    const auto& y = t.value(self).array();
    t.grad(ia).array() += g.array() * y * (S(1) - y);
  });
}

/// tanh approximation of GELU.
template <typename S>
Var<S> gelu(const Var<S>& a) {
  constexpr S c = S(0.7978845608028654);  // sqrt(2 / pi)
  constexpr S k = S(0.044715);
  return detail::unary(
      a, [](S x) { return S(0.5) * x * (S(1) + std::tanh(c * (x + k * x * x * x))); },
      [](S x) {
        const S th = std::tanh(c * (x + k * x * x * x));
        return S(0.5) * (S(1) + th) + S(0.5) * x * (S(1) - th * th) * c * (S(1) + S(3) * k * x * x);
      });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return detail::unary(a, [](S x) { return x * x; }, [](S x) { return S(2) * x; });
}

/// Square root with a zero gradient at 0 instead of an infinite one.
template <typename S>
Var<S> sqrt(const Var<S>& a) {
  return detail::unary(
      a, [](S x) { return std::sqrt(x); },
      [](S x) { return x > S(0) ? S(0.5) / std::sqrt(x) : S(0); });
}

template <typename S>
Var<S> log(const Var<S>& a) {
  return detail::unary(a, [](S x) { return std::log(x); }, [](S x) { return S(1) / x; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Var<S> sum(const Var<S>& a) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), a.needs_grad(), [ia](Tape<S>& t, const Mat<S>& g) { t.grad(ia).array() += g(0, 0); });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// Sum over rows: n x d -> 1 x d.
template <typename S>
Var<S> col_sum(const Var<S>& a) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().colwise().sum();
  return t.record(std::move(out), a.needs_grad(), [ia](Tape<S>& t, const Mat<S>& g) {
    t.grad(ia).rowwise() += g.row(0);
  });
}

template <typename S>
Var<S> col_mean(const Var<S>& a) {
  return scale(col_sum(a), S(1) / static_cast<S>(a.rows()));
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index start, Eigen::Index count) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().middleRows(start, count);
  return t.record(std::move(out), a.needs_grad(), [ia, start, count](Tape<S>& t, const Mat<S>& g) {
    t.grad(ia).middleRows(start, count) += g;
  });
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, Eigen::Index start, Eigen::Index count) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value().middleCols(start, count);
  return t.record(std::move(out), a.needs_grad(), [ia, start, count](Tape<S>& t, const Mat<S>& g) {
    t.grad(ia).middleCols(start, count) += g;
  });
}

/// Rows of a selected by index (repeats allowed); gradients scatter-add back.
template <typename S>
Var<S> gather_rows(const Var<S>& a, std::vector<Eigen::Index> rows) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  return t.record(std::move(out), a.needs_grad(), [ia, rows = std::move(rows)](Tape<S>& t, const Mat<S>& g) {
    Mat<S>& ga = t.grad(ia);
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

template <typename S>
Var<S> concat_rows(std::span<const Var<S>> parts) {
  assert(!parts.empty());
  auto& t = parts.front().tape();
  Eigen::Index rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    rows += p.rows();
    needs = needs || p.needs_grad();
  }
  Mat<S> out(rows, parts.front().cols());
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.rows();
  }
  return t.record(std::move(out), needs, [ids, offsets](Tape<S>& t, const Mat<S>& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleRows(offsets[k], t.value(ids[k]).rows());
    }
  });
}

template <typename S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  assert(!parts.empty());
  auto& t = parts.front().tape();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    cols += p.cols();
    needs = needs || p.needs_grad();
  }
  Mat<S> out(parts.front().rows(), cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.cols();
  }
  return t.record(std::move(out), needs, [ids, offsets](Tape<S>& t, const Mat<S>& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.grad(ids[k]) += g.middleCols(offsets[k], t.value(ids[k]).cols());
    }
  });
}

/// Rows with flag set are replaced by `row` (1 x d); the others pass through.
template <typename S>
Var<S> replace_rows(const Var<S>& a, std::vector<bool> flags, const Var<S>& row) {
  assert(static_cast<Eigen::Index>(flags.size()) == a.rows() && row.rows() == 1 && row.cols() == a.cols());
  auto& t = a.tape();
  const int ia = a.id(), ir = row.id();
  Mat<S> out = a.value();
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k]) out.row(static_cast<Eigen::Index>(k)) = row.value().row(0);
  }
  return t.record(std::move(out), a.needs_grad() || row.needs_grad(),
                  [ia, ir, flags = std::move(flags)](Tape<S>& t, const Mat<S>& g) {
                    for (std::size_t k = 0; k < flags.size(); ++k) {
                      const auto r = static_cast<Eigen::Index>(k);
                      if (flags[k]) {
                        if (t.needs_grad(ir)) t.grad(ir).row(0) += g.row(r);
                      } else if (t.needs_grad(ia)) {
                        t.grad(ia).row(r) += g.row(r);
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// Fused layers

/// Row-wise softmax.
template <typename S>
Var<S> softmax_rows(const Var<S>& a) {
  auto& t = a.tape();
  const int ia = a.id();
  Mat<S> out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const S m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), a.needs_grad(), [ia, self](Tape<S>& t, const Mat<S>& g) {
    const Mat<S>& y = t.value(self);
    Mat<S>& ga = t.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

/// Row-wise layer normalization with gain and bias (both 1 x d).
template <typename S>
Var<S> layer_norm_rows(const Var<S>& a, const Var<S>& gain, const Var<S>& bias, S eps = S(1e-5)) {
  auto& t = a.tape();
  const int ia = a.id(), ig = gain.id(), ib = bias.id();
  const Mat<S>& x = a.value();
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat<S> xhat(n, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mu = x.row(r).mean();
    const S var = (x.row(r).array() - mu).square().mean();
    inv(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv(r);
  }
  Mat<S> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const bool needs = a.needs_grad() || gain.needs_grad() || bias.needs_grad();
  return t.record(std::move(out), needs, [ia, ig, ib, xhat, inv](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(ig)) t.grad(ig).row(0) += g.cwiseProduct(xhat).colwise().sum();
    if (t.needs_grad(ib)) t.grad(ib).row(0) += g.colwise().sum();
    if (t.needs_grad(ia)) {
      const auto gain_row = t.value(ig).row(0).array();
      Mat<S>& ga = t.grad(ia);
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const Eigen::Array<S, 1, Eigen::Dynamic> dxhat = g.row(r).array() * gain_row;
        const S m1 = dxhat.mean();
        const S m2 = (dxhat * xhat.row(r).array()).mean();
        ga.row(r).array() += inv(r) * (dxhat - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

/// One gated recurrent unit step for a batch of rows (gate order r, z, n).
/// `input_gates` is x * W_ih + b_ih (m x 3h); `hidden` is m x h.
template <typename S>
Var<S> gru_step(const Var<S>& input_gates, const Var<S>& hidden, const Var<S>& w_hh, const Var<S>& b_hh) {
  auto& t = hidden.tape();
  const Eigen::Index h = hidden.cols();
  const Mat<S>& hv = hidden.value();
  Mat<S> gh = hv * w_hh.value();
  gh.rowwise() += b_hh.value().row(0);
  const Mat<S>& gi = input_gates.value();
  const auto sig = [](S x) { return S(1) / (S(1) + std::exp(-x)); };
  Mat<S> r = (gi.leftCols(h) + gh.leftCols(h)).unaryExpr(sig);
  Mat<S> z = (gi.middleCols(h, h) + gh.middleCols(h, h)).unaryExpr(sig);
  Mat<S> ghn = gh.rightCols(h);
  Mat<S> n = (gi.rightCols(h).array() + r.array() * ghn.array()).tanh().matrix();
  Mat<S> out = ((S(1) - z.array()) * n.array() + z.array() * hv.array()).matrix();
  const int ii = input_gates.id(), ih = hidden.id(), iw = w_hh.id(), ib = b_hh.id();
  const bool needs = input_gates.needs_grad() || hidden.needs_grad() || w_hh.needs_grad() || b_hh.needs_grad();
  return t.record(std::move(out), needs,
                  [ii, ih, iw, ib, h, r = std::move(r), z = std::move(z), n = std::move(n),
                   ghn = std::move(ghn)](Tape<S>& t, const Mat<S>& g) {
                    const Mat<S>& hv = t.value(ih);
                    const auto ga = g.array();
                    const Mat<S> dn = (ga * (S(1) - z.array())).matrix();
                    const Mat<S> dz = (ga * (hv.array() - n.array())).matrix();
                    const Mat<S> dan = (dn.array() * (S(1) - n.array().square())).matrix();
                    const Mat<S> dr = (dan.array() * ghn.array()).matrix();
                    const Mat<S> dar = (dr.array() * r.array() * (S(1) - r.array())).matrix();
                    const Mat<S> daz = (dz.array() * z.array() * (S(1) - z.array())).matrix();
                    Mat<S> dgh(hv.rows(), 3 * h);
                    dgh << dar, daz, (dan.array() * r.array()).matrix();
                    if (t.needs_grad(ii)) {
                      Mat<S>& gi = t.grad(ii);
                      gi.leftCols(h) += dar;
                      gi.middleCols(h, h) += daz;
                      gi.rightCols(h) += dan;
                    }
                    if (t.needs_grad(ih)) {
                      t.grad(ih).array() += ga * z.array();
                      t.grad(ih).noalias() += dgh * t.value(iw).transpose();
                    }
                    if (t.needs_grad(iw)) t.grad(iw).noalias() += hv.transpose() * dgh;
                    if (t.needs_grad(ib)) t.grad(ib).row(0) += dgh.colwise().sum();
                  });
}

/// sum(w * (pred - target)^2) / sum(w); w and target are constants.
template <typename S>
Var<S> weighted_mse(const Var<S>& pred, Mat<S> target, Mat<S> weight) {
  assert(pred.rows() == target.rows() && pred.cols() == target.cols());
  auto& t = pred.tape();
  const int ip = pred.id();
  const S total = weight.sum();
  Mat<S> out(1, 1);
  const Mat<S> diff = pred.value() - target;
  out(0, 0) = total > S(0) ? (weight.array() * diff.array().square()).sum() / total : S(0);
  return t.record(std::move(out), pred.needs_grad() && total > S(0),
                  [ip, target = std::move(target), weight = std::move(weight), total](Tape<S>& t, const Mat<S>& g) {
                    t.grad(ip).array() +=
                        g(0, 0) * S(2) / total * weight.array() * (t.value(ip).array() - target.array());
                  });
}

/// Mean softmax cross-entropy of logit rows against class labels.
template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits, std::vector<int> labels) {
  auto& t = logits.tape();
  const int il = logits.id();
  const Mat<S>& x = logits.value();
  Mat<S> prob(x.rows(), x.cols());
  S loss = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    prob.row(r) = (x.row(r).array() - m).exp().matrix();
    const S z = prob.row(r).sum();
    prob.row(r) /= z;
    loss -= x(r, labels[static_cast<std::size_t>(r)]) - m - std::log(z);
  }
  Mat<S> out(1, 1);
  out(0, 0) = loss / static_cast<S>(x.rows());
  return t.record(std::move(out), logits.needs_grad(),
                  [il, prob = std::move(prob), labels = std::move(labels)](Tape<S>& t, const Mat<S>& g) {
                    Mat<S> d = prob;
                    for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, labels[static_cast<std::size_t>(r)]) -= S(1);
                    t.grad(il) += d * (g(0, 0) / static_cast<S>(d.rows()));
                  });
}

}  // namespace lptm::ad
