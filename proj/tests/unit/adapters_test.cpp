// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "stackdedup/adapters.hpp"
#include "stackdedup/errors.hpp"
#include "test_util.hpp"

namespace stackdedup {
namespace {

using nlohmann::json;

TEST(Adapters, ParseNames) {
  EXPECT_EQ(parse_adapter("ubuntu"), DatasetAdapter::kUbuntu);
  EXPECT_EQ(parse_adapter("netbeans"), DatasetAdapter::kNetBeans);
  EXPECT_EQ(to_string(DatasetAdapter::kGnome), "gnome");
  EXPECT_THROW(parse_adapter("jira"), UsageError);
}

TEST(Adapters, Timestamps) {
  EXPECT_EQ(parse_timestamp_ms(json(1262304000)), 1262304000000);
  EXPECT_EQ(parse_timestamp_ms(json(1262304000123LL)), 1262304000123);
  EXPECT_EQ(parse_timestamp_ms(json("2010-01-01 00:00:00")), 1262304000000);
  EXPECT_EQ(parse_timestamp_ms(json("2010-01-01T00:00:01.5Z")), 1262304001500);
  EXPECT_EQ(parse_timestamp_ms(json("2010-01-01T02:00:00+02:00")), 1262304000000);
  EXPECT_EQ(parse_timestamp_ms(json("2010-01-01")), 1262304000000);
  EXPECT_THROW(parse_timestamp_ms(json("yesterday")), std::invalid_argument);
  EXPECT_THROW(parse_timestamp_ms(json(-4)), std::invalid_argument);
}

TEST(Adapters, BugRecordJava) {
  const auto j = json::parse(R"j({
    "bug_id": 17, "creation_ts": 100, "dup_id": 12,
    "stacktrace": {"exception": ["java.lang.NPE"],
                   "frames": [{"function": "org.a.B.c", "depth": 0},
                              {"function": "org.a.D.e(D.java:9)"}]}})j");
  const auto r = parse_bug_record(j, DatasetAdapter::kEclipse, 1);
  EXPECT_EQ(r.trace.report_id, "17");
  EXPECT_EQ(r.trace.timestamp, 100000);
  EXPECT_EQ(r.duplicate_of, "12");
  ASSERT_EQ(r.trace.frames.size(), 2u);
  EXPECT_EQ(r.trace.frames[1].normalized, "org.a.D.e");
}

TEST(Adapters, ChainedExceptionsConcatenate) {
  const auto j = json::parse(R"({"bug_id": "x", "creation_ts": 5,
    "stacktrace": [{"frames": [{"function": "a"}]}, {"frames": [{"function": "b"}, "c"]}]})");
  const auto r = parse_bug_record(j, DatasetAdapter::kNetBeans, 1);
  ASSERT_EQ(r.trace.frames.size(), 3u);
  EXPECT_EQ(r.trace.frames[2].raw, "c");
}

TEST(Adapters, UnknownNativeFramesDroppedForCReleases) {
  const auto j = json::parse(R"({"bug_id": 1, "creation_ts": 5,
    "stacktrace": {"frames": [{"function": "??"}, {"function": "g_main_loop_run"}]}})");
  EXPECT_EQ(parse_bug_record(j, DatasetAdapter::kUbuntu, 1).trace.frames.size(), 1u);
  EXPECT_EQ(parse_bug_record(j, DatasetAdapter::kEclipse, 1).trace.frames.size(), 2u);
  const auto only_unknown = json::parse(
      R"({"bug_id": 2, "creation_ts": 5, "stacktrace": {"frames": [{"function": "??"}]}})");
  EXPECT_THROW(parse_bug_record(only_unknown, DatasetAdapter::kGnome, 4), ParseError);
}

TEST(Adapters, MissingFieldsNamed) {
  try {
    parse_bug_record(json::parse(R"({"bug_id": 1, "stacktrace": []})"), DatasetAdapter::kUbuntu,
                     9);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "creation_ts");
    EXPECT_EQ(e.line(), 9u);
  }
}

TEST(Adapters, DuplicateChainsResolveToRoot) {
  std::vector<BugRecord> recs(5);
  const char* ids[] = {"1", "2", "3", "4", "5"};
  const char* dups[] = {"", "1", "2", "99", ""};
  for (int i = 0; i < 5; ++i) {
    recs[i].trace = testing::make_trace(ids[i], i, {"f"});
    recs[i].duplicate_of = dups[i];
  }
  const auto out = resolve_duplicates(recs);
  EXPECT_EQ(out[0].category_id, "1");
  EXPECT_EQ(out[1].category_id, "1");
  EXPECT_EQ(out[2].category_id, "1");
  EXPECT_EQ(out[3].category_id, "99");  // root outside the release
  EXPECT_EQ(out[4].category_id, "5");
}

TEST(Adapters, CycleCollapsesToSmallest) {
  std::vector<BugRecord> recs(3);
  recs[0].trace = testing::make_trace("b", 0, {"f"});
  recs[0].duplicate_of = "c";
  recs[1].trace = testing::make_trace("c", 1, {"f"});
  recs[1].duplicate_of = "b";
  recs[2].trace = testing::make_trace("d", 2, {"f"});
  recs[2].duplicate_of = "c";
  const auto out = resolve_duplicates(recs);
  for (const auto& t : out) EXPECT_EQ(t.category_id, "b");
}

TEST(Adapters, IngestArrayAndLines) {
  testing::TempDir dir("adapters");
  const auto arr = dir.path() / "eclipse.json";
  {
    std::ofstream out(arr);
    out << R"([{"bug_id": 1, "creation_ts": 10, "stacktrace": {"frames": [{"function": "a.B.c"}]}},
               {"bug_id": 2, "creation_ts": 20, "dup_id": 1, "stacktrace": {"frames": ["a.B.c"]}},
               {"bug_id": 3, "creation_ts": 30}])";
  }
  const auto r = ingest_file(arr, DatasetAdapter::kEclipse, false);
  EXPECT_EQ(r.records, 3u);
  EXPECT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.malformed, 1u);
  EXPECT_EQ(r.reports[1].category_id, "1");
  EXPECT_THROW(ingest_file(arr, DatasetAdapter::kEclipse, true), ParseError);

  const auto lines = dir.path() / "ubuntu.jsonl";
  {
    std::ofstream out(lines);
    out << R"({"bug_id": 7, "creation_ts": "2012-05-01 10:00:00", "stacktrace": {"frames": [{"function": "main"}]}})"
        << "\n{broken\n";
  }
  const auto u = ingest_file(lines, DatasetAdapter::kUbuntu, false);
  EXPECT_EQ(u.reports.size(), 1u);
  EXPECT_EQ(u.malformed, 1u);
  EXPECT_EQ(u.reports[0].category_id, "7");
}

}  // namespace
}  // namespace stackdedup
