// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "metric_oracles.hpp"
#include "stackdedup/errors.hpp"
#include "stackdedup/eval.hpp"
#include "stackdedup/pipeline.hpp"
#include "test_util.hpp"

namespace stackdedup {
namespace {

using testing::make_trace;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Ranks every known category by a fixed score per query id and logs calls.
class ScriptedPipeline : public SimilarityPipeline {
 public:
  std::map<std::string, std::vector<CategoryScore>> script;
  std::vector<std::string> log;

  std::string name() const override { return "scripted"; }
  void reset() override {
    log.push_back("reset");
    n_ = 0;
  }
  void add(const StackTrace& r, const std::string& c) override {
    log.push_back("add " + r.report_id + " " + c);
    ++n_;
  }
  RankResult rank(const StackTrace& q) override {
    log.push_back("rank " + q.report_id);
    RankResult r;
    r.categories = script[q.report_id];
    r.retrieval_ms = 1.0;
    return r;
  }
  std::size_t size() const override { return n_; }

 private:
  std::size_t n_ = 0;
};

TEST(Replay, RulesAndOrder) {
  const std::vector<StackTrace> history{make_trace("h1", 1, {"a"}, "A"),
                                        make_trace("h2", 2, {"b"}, "B")};
  // Out of order on purpose; replay sorts by arrival.
  const std::vector<StackTrace> queries{make_trace("q3", 30, {"c", "d"}, "C"),
                                        make_trace("q1", 10, {"a"}, "A"),  // same content as h1
                                        make_trace("q2", 20, {"x"}, "B"),
                                        make_trace("q4", 40, {"e"}, "C")};
  ScriptedPipeline p;
  p.script["q2"] = {{"B", 0.9}, {"A", 0.1}};
  p.script["q3"] = {{"A", 0.3}};
  p.script["q4"] = {{"C", 0.8}};
  const auto ev = replay(p, history, queries);
  ASSERT_EQ(ev.size(), queries.size());
  EXPECT_EQ(ev[0].report_id, "q1");
  EXPECT_TRUE(ev[0].skipped);
  EXPECT_FALSE(ev[0].prediction.has_value());
  EXPECT_FALSE(ev[1].truth_new);
  EXPECT_EQ(ev[1].top_category(), "B");
  EXPECT_TRUE(ev[2].truth_new);  // first report of C
  EXPECT_FALSE(ev[3].truth_new);
  EXPECT_EQ(ev[3].top_score(), 0.8);
  const std::vector<std::string> want{"reset",    "add h1 A", "add h2 B", "add q1 A", "rank q2",
                                      "add q2 B", "rank q3",  "add q3 C", "rank q4",  "add q4 C"};
  EXPECT_EQ(p.log, want);
  const auto counts = count_events(ev);
  EXPECT_EQ(counts.skipped, 1u);
  EXPECT_EQ(counts.attached + counts.new_category + counts.skipped, ev.size());
}

TEST(Replay, NoHistoryMeansNoPrediction) {
  ScriptedPipeline p;
  const auto ev = replay(p, {}, {make_trace("q", 1, {"a"}, "A"), make_trace("r", 2, {"b"}, "A")});
  EXPECT_FALSE(ev[0].prediction.has_value());
  EXPECT_TRUE(ev[0].truth_new);
  EXPECT_EQ(ev[0].top_score(), -kInf);
  EXPECT_EQ(ev[0].top_category(), "");
  EXPECT_TRUE(ev[1].prediction.has_value());
}

TEST(Replay, UnlabeledIsError) {
  ScriptedPipeline p;
  EXPECT_THROW(replay(p, {}, {make_trace("q", 1, {"a"})}), DataError);
  EXPECT_THROW(replay(p, {make_trace("h", 1, {"a"})}, {}), DataError);
}

TEST(Replay, SplitHelpersUseTheRightHistory) {
  DatasetSplit s;
  s.train = {make_trace("t", 1, {"a"}, "A")};
  s.validation = {make_trace("v", 2, {"b"}, "B")};
  s.test = {make_trace("x", 3, {"c"}, "A")};
  ScriptedPipeline p;
  replay_validation(p, s);
  EXPECT_EQ(p.log, (std::vector<std::string>{"reset", "add t A", "rank v", "add v B"}));
  p.log.clear();
  replay_test(p, s);
  EXPECT_EQ(p.log, (std::vector<std::string>{"reset", "add t A", "add v B", "rank x", "add x A"}));
}

EvalEvent event(bool is_new, double score, std::string top = "", std::string truth = "") {
  EvalEvent e;
  e.truth_new = is_new;
  e.true_category = truth;
  e.prediction = std::vector<CategoryScore>{{top, score}};
  return e;
}

TEST(Metrics, AccAt1) {
  std::vector<EvalEvent> ev{event(false, 0.9, "a", "a"), event(false, 0.8, "b", "a"),
                            event(false, 0.7, "c", "c"), event(true, 0.1, "a", "z")};
  EvalEvent skipped = event(false, 0.5, "x", "y");
  skipped.skipped = true;
  ev.push_back(skipped);
  EXPECT_NEAR(*acc_at_1(ev), 2.0 / 3, 1e-12);
  EXPECT_FALSE(acc_at_1(std::vector<EvalEvent>{event(true, 0.1)}).has_value());
}

TEST(Metrics, AucExamples) {
  const std::vector<double> sep{0.9, 0.8, 0.1, 0.2};
  const std::vector<char> lab{0, 0, 1, 1};
  EXPECT_EQ(roc_auc(sep, lab), 1.0);
  const std::vector<double> same{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(roc_auc(same, lab), 0.5);
  const std::vector<char> one{1, 1, 1, 1};
  EXPECT_THROW(roc_auc(sep, one), std::invalid_argument);
}

TEST(Metrics, OraclesOnRandomEventSets) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 200; ++round) {
    const auto set = testing::random_event_set(rng);
    const auto r = testing::compare_with_oracles(set);
    ASSERT_TRUE(r.ok) << "round " << round << ": " << r.detail;
  }
}

TEST(Calibration, SeparableCase) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  const std::vector<char> lab{0, 0, 1, 1};
  const auto c = calibrate_threshold(s, lab);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);  // the only midpoint inside (0.2, 0.8)
  EXPECT_EQ(c.f1, 1.0);
  EXPECT_EQ(f1_new_category(s, lab, c.threshold), 1.0);
  const std::vector<char> all_new{1, 1, 1, 1};
  EXPECT_THROW(calibrate_threshold(s, all_new), std::invalid_argument);
}

TEST(Calibration, InfiniteCandidates) {
  // Nothing separates: all new is best, which needs T = +inf.
  const std::vector<double> s{0.5, 0.4};
  const std::vector<char> lab{1, 0};
  const auto c = calibrate_threshold(s, lab);
  EXPECT_EQ(c.threshold, kInf);
  EXPECT_NEAR(c.f1, 2.0 / 3, 1e-12);
}

TEST(Latency, StageStats) {
  const auto s = stage_stats({4, 1, 3, 2, 5});
  EXPECT_EQ(s.mean_ms, 3.0);
  EXPECT_EQ(s.p50_ms, 3.0);
  EXPECT_NEAR(s.p95_ms, 4.8, 1e-12);
  EXPECT_NEAR(s.stddev_ms, std::sqrt(2.0), 1e-12);
  EXPECT_LE(s.p50_ms, s.p95_ms);
  EXPECT_EQ(stage_stats({}).mean_ms, 0.0);
}

TEST(Latency, NoRerankerMeansZeroSecondStage) {
  ScriptedPipeline p;
  std::vector<StackTrace> q;
  for (int i = 0; i < 5; ++i) q.push_back(make_trace("q" + std::to_string(i), i, {"a"}, "A"));
  const auto l = measure_latency(p, {make_trace("h", 0, {"h"}, "A")}, q, {.warmup = 2});
  EXPECT_EQ(l.rerank.mean_ms, 0.0);
  EXPECT_EQ(l.queries, 5u);
  EXPECT_LE(l.total.p50_ms, l.total.p95_ms);
  // No state updates while timing.
  EXPECT_EQ(p.size(), 1u);
}

TEST(Evaluate, EndToEndWithEditBaseline) {
  DatasetSplit s;
  auto add = [](std::vector<StackTrace>& v, std::string id, std::int64_t ts,
                std::vector<std::string> f, std::string c) {
    v.push_back(make_trace(std::move(id), ts, std::move(f), std::move(c)));
  };
  add(s.train, "t1", 1, {"a", "b", "c"}, "A");
  add(s.train, "t2", 2, {"x", "y", "z"}, "B");
  add(s.validation, "v1", 3, {"a", "b", "d"}, "A");
  add(s.validation, "v2", 4, {"p", "q", "r"}, "C");
  add(s.test, "s1", 5, {"x", "y", "w"}, "B");
  add(s.test, "s2", 6, {"m", "n", "o"}, "D");
  add(s.test, "s3", 7, {"a", "b", "c"}, "A");  // identical to t1
  EditPipeline p(10);
  std::vector<EvalEvent> ev;
  const auto rep = evaluate(p, s, 0, &ev);
  ASSERT_EQ(ev.size(), 3u);
  EXPECT_EQ(*rep.acc_at_1, 1.0);
  EXPECT_EQ(*rep.roc_auc, 1.0);
  ASSERT_TRUE(rep.calibration.has_value());
  EXPECT_EQ(*rep.f1_at_threshold, 1.0);
  EXPECT_EQ(rep.counts.skipped, 1u);
  const auto j = to_json(rep);
  EXPECT_EQ(j["pipeline"], "edit");
  EXPECT_EQ(j["counts"]["skipped"], 1);
  std::ostringstream os;
  write_events(os, ev);
  const std::string lines = os.str();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 3);
  const std::vector<MetricsReport> reps{rep};
  const auto table = format_table(reps, "toy");
  EXPECT_NE(table.find("edit"), std::string::npos);
  EXPECT_NE(table.find("Acc@1"), std::string::npos);
}

TEST(Evaluate, DeterministicExceptLatency) {
  DatasetSplit s;
  std::mt19937_64 rng(3);
  std::int64_t ts = 0;
  for (auto* part : {&s.train, &s.validation, &s.test})
    for (int i = 0; i < 15; ++i) {
      const int c = static_cast<int>(rng() % 5);
      std::vector<std::string> frames{"c" + std::to_string(c)};
      for (int k = 0; k < 3; ++k) frames.push_back("n" + std::to_string(rng() % 9));
      part->push_back(make_trace("r" + std::to_string(ts), ts, frames, "g" + std::to_string(c)));
      ++ts;
    }
  LerchPipeline p(10);
  auto a = to_json(evaluate(p, s, 0));
  auto b = to_json(evaluate(p, s, 0));
  a.erase("latency");
  b.erase("latency");
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace stackdedup
