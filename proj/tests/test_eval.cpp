// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lptm/eval.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <atomic>
#include <fstream>
#include <sstream>

using namespace lptm;
using namespace lptm::test;

namespace {

TimeSeries ramp(int t) {
  TimeSeries s;
  s.id = "ramp";
  s.domain_id = "sine";
  s.kind = SeriesKind::forecast;
  for (int k = 0; k < t; ++k) s.values.push_back(k);
  s.split = SplitSpec{0.7, 0.15, 0.15}.points(static_cast<std::size_t>(t));
  return s;
}

/// Reads the future straight from the series the context was cut from.
std::vector<Real> oracle(std::span<const Real> context, const TimeSeries& s, int horizon) {
  const auto origin = static_cast<std::size_t>(context.data() + context.size() - s.values.data());
  std::vector<Real> out;
  for (int h = 0; h < horizon; ++h) {
    const std::size_t k = origin + static_cast<std::size_t>(h);
    out.push_back(k < s.values.size() ? s.values[k] : 0.0);
  }
  return out;
}

Experiment tiny_experiment() {
  Experiment ex;
  ex.model = tiny_model_config();
  ex.pretrain.steps = 3;
  ex.pretrain.window = 32;
  ex.pretrain.batch_size = 2;
  ex.pretrain.eval_every = 0;
  ex.task.horizon = 4;
  ex.task.context = 24;
  ex.task.stride = 8;
  ex.schedule.epochs = 2;
  ex.schedule.probe_epochs = 1;
  ex.schedule.full_epochs = 1;
  ex.schedule.max_batches_per_epoch = 2;
  ex.eval.horizon = 4;
  ex.eval.context = 24;
  return ex;
}

Corpus tiny_corpus() {
  GeneratorSpec g;
  g.domain = "sine";
  g.family = Family::sinusoid;
  g.count = 2;
  g.length = 80;
  return synth_corpus({{g}, {0.7, 0.15, 0.15}}, 1);
}

}  // namespace

TEST_CASE("rmse examples and properties", "[eval]") {
  const std::vector<Real> a{1.0, 2.0}, b{2.0, 4.0};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == Catch::Approx(1.5811388300841898).epsilon(1e-14));
  CHECK(rmse(a, b) == rmse(b, a));
  CHECK_THROWS_AS(rmse(a, std::vector<Real>{1.0}), LengthError);
  CHECK_THROWS_AS(rmse(std::vector<Real>{}, std::vector<Real>{}), LengthError);
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto x = random_series(5, rng), y = random_series(5, rng);
    REQUIRE(rmse(x, y) > 0.0);
  }
}

TEST_CASE("accuracy examples", "[eval]") {
  const std::vector<int> truth{0, 1, 2, 1};
  CHECK(accuracy(std::vector<int>{0, 1, 2, 0}, truth) == 0.75);
  CHECK(accuracy(truth, truth) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 0, 0, 0}, truth) == 0.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{1}, truth), LengthError);
}

TEST_CASE("protocol names round trip", "[eval]") {
  for (Protocol p : {Protocol::zero_shot, Protocol::fine_tuned, Protocol::data_efficiency, Protocol::ablation}) {
    CHECK(protocol_from_string(to_string(p)) == p);
  }
  CHECK_THROWS_AS(protocol_from_string("few_shot"), ConfigError);
}

TEST_CASE("report mean and population std", "[eval]") {
  const EvalReport r = make_report("t", "rmse", Protocol::fine_tuned, {1.0, 2.0, 3.0, 6.0}, {0, 1, 2, 3});
  CHECK(r.mean == 3.0);
  CHECK(r.std == Catch::Approx(std::sqrt(3.5)).epsilon(1e-14));
  EvalReport copy = r;
  copy.recompute();
  CHECK(std::abs(copy.mean - r.mean) < 1e-9);
  CHECK(std::abs(copy.std - r.std) < 1e-9);
  CHECK(make_report("t", "rmse", Protocol::zero_shot, {0.7}, {0}).std == 0.0);
}

TEST_CASE("tail evaluation on t=100 stays inside the last 20 points", "[eval]") {
  const std::vector<TimeSeries> series{ramp(100)};
  ForecastEvalOptions opt;
  opt.horizon = 6;
  opt.context = 30;
  CHECK(evaluation_start(series[0], opt) == 80);
  std::vector<std::size_t> seen_context_end;
  const Forecaster spy = [&](std::span<const Real> context, const TimeSeries& s, int horizon) {
    seen_context_end.push_back(static_cast<std::size_t>(context.data() + context.size() - s.values.data()));
    CHECK(context.size() == 30);
    return oracle(context, s, horizon);
  };
  const ForecastEvaluation ev = rolling_origin(series, spy, opt);
  CHECK(ev.rmse == 0.0);
  REQUIRE(ev.windows.size() == 4);
  for (const auto& w : ev.windows) {
    CHECK(w.origin >= 80);
    CHECK(w.origin + w.truth.size() <= 100);
    // 1-based indices of scored points lie in 81..100.
    CHECK(w.truth.front() + 1 >= 81.0);
  }
  CHECK(seen_context_end == std::vector<std::size_t>{80, 86, 92, 98});
  CHECK(ev.windows.back().truth.size() == 2);
}

TEST_CASE("test-split region starts at the end of validation", "[eval]") {
  const TimeSeries s = ramp(100);
  ForecastEvalOptions opt;
  opt.region = EvalRegion::test_split;
  CHECK(evaluation_start(s, opt) == 85);
  TimeSeries bare = s;
  bare.split.reset();
  CHECK_THROWS_AS(evaluation_start(bare, opt), ConfigError);
}

TEST_CASE("errors are scored in raw units", "[eval]") {
  TimeSeries s = ramp(50);
  s.dataset_scale = {10.0, 3.0};
  const std::vector<TimeSeries> series{s};
  const Forecaster off_by_one = [](std::span<const Real> context, const TimeSeries& ts, int horizon) {
    auto out = oracle(context, ts, horizon);
    for (auto& v : out) v += 1.0;
    return out;
  };
  ForecastEvalOptions opt;
  opt.horizon = 5;
  CHECK(rolling_origin(series, off_by_one, opt).rmse == Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("zero-shot protocol leaves the model unchanged and is reproducible", "[eval]") {
  Model model(tiny_model_config(), {"sine"}, 3);
  const auto series = sine_targets(2, 60);
  ForecastEvalOptions opt;
  opt.horizon = 4;
  opt.context = 24;
  const auto before = parameter_checksum(model);
  const EvalReport a = zero_shot_protocol(model, series, opt);
  CHECK(parameter_checksum(model) == before);
  const EvalReport b = zero_shot_protocol(model, series, opt);
  CHECK(a.values == b.values);
  CHECK(a.protocol == Protocol::zero_shot);
  CHECK(a.metadata["windows"] == 6);
}

TEST_CASE("data-efficiency sweep is ascending and monotone under a size-driven oracle", "[eval]") {
  const std::vector<TimeSeries> dataset{ramp(200), ramp(120)};
  const FitAndScore by_size = [](std::span<const TimeSeries> truncated, Real) {
    Real n = 0;
    for (const auto& s : truncated) n += static_cast<Real>(s.split->train_end);
    return make_report("f", "rmse", Protocol::fine_tuned, {100.0 / n}, {0});
  };
  const auto reports = data_efficiency_sweep(dataset, {100, 20, 50}, by_size);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].metadata["k_percent"] == 20.0);
  CHECK(reports[2].metadata["k_percent"] == 100.0);
  for (const auto& r : reports) CHECK(r.protocol == Protocol::data_efficiency);
  CHECK(reports[0].mean >= reports[1].mean);
  CHECK(reports[1].mean >= reports[2].mean);
}

TEST_CASE("training truncation keeps later regions fixed", "[eval]") {
  const TimeSeries s = ramp(100);
  const TimeSeries t = truncate_training(s, 50);
  CHECK(t.values == s.values);
  CHECK(t.split->train_end == 35);
  CHECK(t.split->val_end == s.split->val_end);
  TimeSeries inst;
  inst.values = std::vector<Real>(40, 1.0);
  CHECK(truncate_training(inst, 50).values.size() == 20);
}

TEST_CASE("ablation names parse and unknown ones are rejected", "[eval]") {
  for (const char* name : {"no_segment", "no_pretrain", "no_linprob", "only_randmask", "only_lastmask"}) {
    CHECK(to_string(ablation_from_string(name)) == name);
  }
  CHECK_THROWS_AS(ablation_from_string("no_backbone"), ConfigError);
  const std::vector<Ablation> both{Ablation::only_randmask, Ablation::only_lastmask};
  CHECK_THROWS_AS(apply_ablations(Experiment{}, both), ConfigError);
  const std::vector<Ablation> patch{Ablation::no_segment, Ablation::no_linprob};
  const Experiment e = apply_ablations(Experiment{}, patch);
  CHECK(e.model.segmentation == SegmentationMode::fixed);
  CHECK_FALSE(e.schedule.linear_probe);
}

TEST_CASE("fixed patching yields ceil(t/p) tokens", "[eval]") {
  for (int p : {2, 5, 8}) {
    ModelConfig c = tiny_model_config();
    c.segmentation = SegmentationMode::fixed;
    c.patch_length = p;
    Model model(c, {"sine"}, 1);
    for (int t : {2, 9, 37, 64}) {
      Tape<Real> tape;
      const auto enc = encode_series(tape, model, model.segmenter_for("sine"), sine_values(t));
      REQUIRE(static_cast<int>(enc.tokens.size()) == (t + p - 1) / p);
    }
  }
}

TEST_CASE("ablation runs record their settings", "[eval]") {
  const Experiment ex = tiny_experiment();
  const Corpus corpus = tiny_corpus();
  const auto target = sine_targets(2, 80);
  const std::vector<std::uint64_t> seeds{1};

  std::atomic<int> rand_steps{0};
  const std::vector<std::string> only_last{"only_lastmask"};
  const EvalReport last = ablation_run(only_last, ex, corpus, target, seeds, nullptr,
                                       [&](std::uint64_t, const SslStepStats& st) { rand_steps += st.loss_randmask ? 1 : 0; });
  CHECK(rand_steps == 0);
  CHECK(last.metadata["randmask_step_records"] == 0);
  CHECK(last.metadata["lastmask_step_records"] == 3);
  CHECK(last.metadata["ssl_tasks"] == nlohmann::json::array({"lastmask"}));
  CHECK(last.protocol == Protocol::ablation);

  const std::vector<std::string> scratch{"no_pretrain"};
  const EvalReport random = ablation_run(scratch, ex, corpus, target, seeds);
  CHECK(random.metadata["init"] == "random");
  CHECK(random.metadata["pretrain_steps"] == 0);

  const std::vector<std::string> patches{"no_segment"};
  const EvalReport fixed = ablation_run(patches, ex, corpus, target, seeds);
  CHECK(fixed.metadata["segmentation"] == "fixed");
  CHECK(fixed.metadata["patch_length"] == 8);
  CHECK(std::isfinite(fixed.values[0]));
}

TEST_CASE("classification instances split every fifth per class", "[eval]") {
  std::vector<TimeSeries> inst;
  for (int k = 0; k < 20; ++k) {
    TimeSeries s;
    s.id = std::to_string(k);
    s.values = {0.0, 1.0};
    s.class_label = k % 2;
    inst.push_back(s);
  }
  const auto [train, test] = split_instances(inst);
  CHECK(train.size() == 16);
  CHECK(test.size() == 4);
  for (const auto& s : test) CHECK(std::stoi(s.id) % 10 >= 8);
}

TEST_CASE("segment length profile averages covering segments", "[eval]") {
  const SegmentSet set({{1, 4, 0}, {4, 5, 0}, {5, 6, 0}}, 6);
  const std::vector<bool> peak{false, false, false, true, true, true};
  const SegmentLengthProfile p = segment_length_profile(set, peak);
  // Per-step means: 4, 4, 4, 3, 2, 2.
  CHECK(p.offpeak_mean == Catch::Approx(4.0));
  CHECK(p.peak_mean == Catch::Approx(7.0 / 3.0));
  CHECK_THROWS_AS(segment_length_profile(set, std::vector<bool>(5, false)), LengthError);
}

TEST_CASE("report records append as run and summary lines", "[eval]") {
  const auto dir = scratch_dir("eval_records");
  const auto path = dir / "r.jsonl";
  append_report(path, make_report("f", "rmse", Protocol::fine_tuned, {1.0, 3.0}, {4, 5}, {{"k", 1}}));
  append_report(path, make_report("f", "rmse", Protocol::zero_shot, {2.0}, {0}));
  const auto recs = read_records(path);
  REQUIRE(recs.size() == 5);
  CHECK(recs[0]["record"] == "run");
  CHECK(recs[1]["seed"] == 5);
  CHECK(recs[2]["record"] == "summary");
  CHECK(recs[2]["mean"] == 2.0);
  CHECK(recs[2]["metadata"]["k"] == 1);
  CHECK(recs[4]["protocol"] == "zero_shot");
}

TEST_CASE("plot and segment exports have the documented layout", "[eval]") {
  const auto dir = scratch_dir("eval_exports");
  const std::vector<std::pair<Real, Real>> pts{{20, 1.5}, {50, 1.25}};
  write_plot_data(dir / "p.dat", pts);
  std::ifstream in(dir / "p.dat");
  Real x, y;
  in >> x >> y;
  CHECK(x == 20.0);
  CHECK(y == 1.5);

  std::ostringstream block;
  const std::vector<Real> v{0.5, 1.0};
  write_segment_block(block, "s1", v, SegmentSet({{1, 2, 0.25}}, 2));
  CHECK(block.str() == "series s1 2\nvalues 0.5 1\n1 2 0.25\nend\n");

  std::ostringstream pred;
  write_prediction(pred, "s1", "forecast", v);
  CHECK(nlohmann::json::parse(pred.str())["forecast"][1] == 1.0);
}

TEST_CASE("parallel_for visits every index and rethrows failures", "[eval]") {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), [&](std::size_t k) { hits[k] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(5, [](std::size_t k) {
                    if (k == 3) throw ValueError("boom");
                  }),
                  ValueError);
}
