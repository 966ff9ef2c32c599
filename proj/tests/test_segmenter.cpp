// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/segmenter.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace lptm;
using namespace lptm::test;

namespace {

SegmentScores random_table(int t, int max_len, Rng& rng, bool discrete) {
  SegmentScores s(t, max_len);
  for (int i = 1; i < t; ++i) {
    for (int j = i + 1; j <= s.last_end(i); ++j) {
      s.set(i, j, discrete ? static_cast<Real>(rng.below(4)) - 1.0 : rng.normal());
    }
  }
  return s;
}

SegmentScores table_3(Real s12, Real s13, Real s23) {
  SegmentScores s(3, 2);
  s.set(1, 2, s12);
  s.set(1, 3, s13);
  s.set(2, 3, s23);
  return s;
}

SegmenterConfig tiny_config(int hidden, int score_dim) {
  SegmenterConfig c;
  c.hidden = hidden;
  c.score_dim = score_dim;
  c.pos_dim = 4;
  c.model_dim = 4;
  return c;
}

Mat<Real> column(const std::vector<Real>& x) {
  Mat<Real> m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t k = 0; k < x.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = x[k];
  return m;
}

}  // namespace

TEST_CASE("scores follow v . tanh(W1 z_i + W2 z_j + b) on a scalar example", "[segmenter]") {
  Rng rng(0);
  SegmenterParams<Real> p(tiny_config(1, 1), rng);
  p.v.value(0, 0) = 2.0;
  p.w1.value(0, 0) = 1.0;
  p.w2.value(0, 0) = 1.0;
  p.b.value(0, 0) = 0.0;
  const Mat<Real> z = column({0.1, 0.2, 0.3});
  const SegmentScores s = get_scores(z, p, 2);
  // 2 tanh(0.3), 2 tanh(0.4), 2 tanh(0.5), evaluated offline.
  CHECK(s.at(1, 2) == Catch::Approx(0.5826252249031818).epsilon(1e-14));
  CHECK(s.at(1, 3) == Catch::Approx(0.7598979245104498).epsilon(1e-14));
  CHECK(s.at(2, 3) == Catch::Approx(0.9242343145200195).epsilon(1e-14));
}

TEST_CASE("zero projection or zero pre-activation gives zero scores", "[segmenter]") {
  Rng rng(1);
  SegmenterParams<Real> p(tiny_config(3, 4), rng);
  const Mat<Real> z = random_matrix(6, 3, rng);
  SegmenterParams<Real> zero_v = p;
  zero_v.v.value.setZero();
  SegmenterParams<Real> zero_w = p;
  zero_w.w1.value.setZero();
  zero_w.w2.value.setZero();
  zero_w.b.value.setZero();
  for (const auto* params : {&zero_v, &zero_w}) {
    const SegmentScores s = get_scores(z, *params, 5);
    for (int i = 1; i < 6; ++i) {
      for (int j = i + 1; j <= s.last_end(i); ++j) CHECK(s.at(i, j) == 0.0);
    }
  }
}

TEST_CASE("score table is limited to j - i <= max_len", "[segmenter]") {
  SegmentScores s(10, 3);
  CHECK(s.has(1, 4));
  CHECK_FALSE(s.has(1, 5));
  CHECK(s.last_end(8) == 10);
  CHECK_FALSE(s.has(3, 3));
  CHECK(effective_max_len(10, 64) == 9);
  CHECK(effective_max_len(100, 16) == 16);
  CHECK(effective_max_len(2, 64) == 1);
  CHECK_THROWS_AS(SegmentScores(1, 3), LengthError);
}

TEST_CASE("two-point series yields the single segment (1,2)", "[segmenter]") {
  SegmentScores s(2, 1);
  s.set(1, 2, -3.0);
  const SegmentSet set = choose_segments(s);
  REQUIRE(set.size() == 1);
  CHECK(set[0].start == 1);
  CHECK(set[0].end == 2);
}

TEST_CASE("three-point examples follow the greedy removal trace", "[segmenter]") {
  SECTION("long first segment absorbs the second") {
    const SegmentSet set = choose_segments(table_3(0.1, 0.9, 0.2));
    REQUIRE(set.size() == 1);
    CHECK(set[0].start == 1);
    CHECK(set[0].end == 3);
  }
  SECTION("neither segment can be removed") {
    const SegmentSet set = choose_segments(table_3(0.9, 0.1, 0.2));
    REQUIRE(set.size() == 2);
    CHECK(set[0] == Segment{1, 2, 0.9});
    CHECK(set[1] == Segment{2, 3, 0.2});
  }
}

TEST_CASE("argmax ties resolve toward the smaller end", "[segmenter]") {
  const SegmentSet set = choose_segments(table_3(0.5, 0.5, 0.7));
  // h(1) = 2 on the tie; both segments are then needed.
  REQUIRE(set.size() == 2);
  CHECK(set[0].end == 2);
}

TEST_CASE("pruning stops at the first blocked removal", "[segmenter]") {
  // t = 4 with candidates (1,2) 0.0, (2,4) 1.0, (3,4) -1.0.
  SegmentScores s(4, 3);
  s.set(1, 2, 0.0);
  s.set(1, 3, -5.0);
  s.set(1, 4, -5.0);
  s.set(2, 3, -5.0);
  s.set(2, 4, 1.0);
  s.set(3, 4, -1.0);
  // Ascending: (3,4) removable, then (1,2) blocked -> stop.
  const SegmentSet set = choose_segments(s);
  REQUIRE(set.size() == 2);
  CHECK(set[0] == Segment{1, 2, 0.0});
  CHECK(set[1] == Segment{2, 4, 1.0});
}

TEST_CASE("choose_segments matches the brute-force removal loop", "[segmenter][property]") {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const int t = 2 + static_cast<int>(rng.below(7));
    const int max_len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(t - 1)));
    const bool discrete = rng.bernoulli(0.3);
    const SegmentScores s = random_table(t, max_len, rng, discrete);
    for (const bool by_end : {false, true}) {
      for (const bool exhaustive : {false, true}) {
        ChooseOptions opt;
        opt.prune_by = by_end ? PruneBy::end_index : PruneBy::score;
        opt.exhaustive = exhaustive;
        const SegmentSet got = choose_segments(s, opt);
        const auto want = oracle_choose(s, by_end, exhaustive);
        INFO("t=" << t << " max_len=" << max_len << " by_end=" << by_end << " exhaustive=" << exhaustive);
        REQUIRE(got.segments() == want);
      }
    }
  }
}

TEST_CASE("chosen segments cover 1..t within the count bounds", "[segmenter][property]") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const int t = 2 + static_cast<int>(rng.below(255));
    const int cap = 1 + static_cast<int>(rng.below(64));
    const int max_len = effective_max_len(t, cap);
    const SegmentScores s = random_table(t, max_len, rng, false);
    const SegmentSet set = choose_segments(s);
    REQUIRE(oracle_covers(set.segments(), t));
    REQUIRE(static_cast<int>(set.size()) <= t - 1);
    // A segment spans at most max_len + 1 points.
    REQUIRE(static_cast<int>(set.size()) >= (t + max_len) / (max_len + 1));
    for (const auto& seg : set.segments()) REQUIRE(seg.end - seg.start <= max_len);
  }
}

TEST_CASE("same weights and input give the same segment set", "[segmenter]") {
  Rng rng(5);
  SegmenterParams<Real> p(tiny_config(6, 5), rng);
  const Mat<Real> x = column(random_series(40, rng));
  const auto run = [&] {
    Tape<Real> tape;
    const Var<Real> hidden = encode(tape, p, tape.constant(x));
    return choose_segments(get_scores(hidden.value(), p, 8));
  };
  CHECK(run().segments() == run().segments());
}

TEST_CASE("encode emits one hidden row of width H per time-step", "[segmenter]") {
  Rng rng(6);
  SegmenterConfig c;
  SegmenterParams<Real> p(c, rng);
  Tape<Real> tape;
  const Var<Real> hidden = encode(tape, p, tape.constant(Mat<Real>::Zero(12, 1)));
  CHECK(hidden.rows() == 12);
  CHECK(hidden.cols() == 50);
}

TEST_CASE("fixed patches produce ceil(t/p) covering segments", "[segmenter]") {
  for (int t = 2; t <= 60; ++t) {
    for (int p = 2; p <= 12; ++p) {
      const SegmentSet set = fixed_patches(t, p);
      REQUIRE(static_cast<int>(set.size()) == (t + p - 1) / p);
      REQUIRE(oracle_covers(set.segments(), t));
      for (const auto& seg : set.segments()) REQUIRE(seg.length() == std::min(p, t));
    }
  }
  CHECK_THROWS_AS(fixed_patches(10, 1), DomainError);
  CHECK_THROWS_AS(fixed_patches(1, 4), LengthError);
}

TEST_CASE("positional encoding closed form", "[segmenter]") {
  const auto zero = positional_encoding(0, 16);
  for (int d = 0; d < 16; ++d) CHECK(zero[d] == (d % 2 == 0 ? 0.0 : 1.0));

  // sin(1), cos(1), sin(10^-2.5), cos(10^-2.5), evaluated offline.
  const auto one = positional_encoding(1, 4);
  CHECK(one[0] == Catch::Approx(0.8414709848078965).epsilon(1e-14));
  CHECK(one[1] == Catch::Approx(0.5403023058681398).epsilon(1e-14));
  CHECK(one[2] == Catch::Approx(0.0031622723897082477).epsilon(1e-12));
  CHECK(one[3] == Catch::Approx(0.9999950000041666).epsilon(1e-14));

  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    for (Real v : positional_encoding(static_cast<int>(rng.below(100000)), 16)) REQUIRE(std::abs(v) <= 1.0);
  }
  CHECK_THROWS_AS(positional_encoding(-1, 4), DomainError);
  CHECK_THROWS_AS(positional_encoding(1, 3), DomainError);
}

TEST_CASE("segment attention on a 2-step segment matches a scalar computation", "[segmenter]") {
  Rng rng(10);
  SegmenterParams<Real> p(tiny_config(1, 1), rng);
  p.attn_query.value(0, 0) = 1.2;
  p.attn_key.value(0, 0) = 0.7;
  p.attn_value.value(0, 0) = 2.0;
  Tape<Real> tape;
  const Var<Real> hidden = tape.constant(column({0.5, -1.0}));
  const Var<Real> e = segment_attention(tape, p, hidden, SegmentSet({{1, 2, 0.0}}, 2));
  // Row softmax of the 2x2 score matrix, outputs summed; evaluated offline.
  CHECK(e.value()(0, 0) == Catch::Approx(-1.3796099367612031).epsilon(1e-13));
}

TEST_CASE("identical hidden rows give identical segment content", "[segmenter]") {
  Rng rng(11);
  SegmenterParams<Real> p(tiny_config(3, 3), rng);
  Mat<Real> z(8, 3);
  for (int r = 0; r < 8; ++r) z.row(r) << 0.3, -0.2, 0.9;
  Tape<Real> tape;
  const SegmentSet set({{1, 3, 0}, {3, 5, 0}, {6, 8, 0}}, 8);
  const Var<Real> e = segment_attention(tape, p, tape.constant(z), set);
  const Mat<Real> single = z.row(0) * p.attn_value.value;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) CHECK(e.value()(r, c) == Catch::Approx(3.0 * single(0, c)).epsilon(1e-12));
  }
  const TokenSequence<Real> tokens = embed_segments(tape, p, tape.constant(z), set);
  CHECK(tokens.size() == 3);
  CHECK(tokens.tokens().rows() == 3);
  CHECK(tokens.tokens().cols() == 4);
}

TEST_CASE("differentiable scores agree with the score table", "[segmenter]") {
  Rng rng(12);
  SegmenterParams<Real> p(tiny_config(3, 4), rng);
  Tape<Real> tape;
  const Var<Real> hidden = encode(tape, p, tape.constant(column(random_series(7, rng))));
  const SegmentScores table = get_scores(hidden.value(), p, 6);
  const std::vector<Segment> segs{{1, 2, 0}, {2, 7, 0}, {4, 6, 0}};
  const Var<Real> s = segment_scores(tape, p, hidden, segs);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    CHECK(s.value()(static_cast<Eigen::Index>(k), 0) ==
          Catch::Approx(table.at(segs[k].start, segs[k].end)).epsilon(1e-13));
  }
}

TEST_CASE("score gradients match finite differences on a t=5, H=3 instance", "[segmenter]") {
  Rng rng(13);
  SegmenterParams<Real> p(tiny_config(3, 3), rng);
  p.b.value = random_matrix(1, 3, rng, 0.3);
  const Mat<Real> x = column(random_series(5, rng));
  const std::vector<Segment> segs{{1, 3, 0}, {2, 4, 0}, {4, 5, 0}, {1, 5, 0}};
  const auto build = [&](Tape<Real>& tape) {
    const Var<Real> hidden = encode(tape, p, tape.constant(x));
    Rng wrng(3);
    return ad::sum(ad::mul(segment_scores(tape, p, hidden, segs), tape.constant(random_matrix(4, 1, wrng))));
  };
  const auto check =
      gradient_check({&p.v, &p.w1, &p.w2, &p.b, &p.gru.w_ih, &p.gru.b_ih, &p.gru.w_hh, &p.gru.b_hh}, build);
  CHECK(check.analytic_norm > 0.0);
  CHECK(check.max_relative < 1e-4);
}

TEST_CASE("token gradients reach attention and projection weights", "[segmenter]") {
  Rng rng(14);
  SegmenterParams<Real> p(tiny_config(3, 3), rng);
  const Mat<Real> x = column(random_series(6, rng));
  const SegmentSet set({{1, 3, 0}, {3, 6, 0}}, 6);
  const auto build = [&](Tape<Real>& tape) {
    const Var<Real> hidden = encode(tape, p, tape.constant(x));
    const auto tokens = embed_segments(tape, p, hidden, set);
    return ad::sum(ad::square(tokens.tokens()));
  };
  const auto check = gradient_check(
      {&p.attn_query, &p.attn_key, &p.attn_value, &p.content, &p.positional, &p.token_bias, &p.gru.w_ih}, build);
  CHECK(check.max_relative < 1e-4);
}
