// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "stackdedup/baselines.hpp"
#include "test_util.hpp"

namespace stackdedup {
namespace {

using testing::make_trace;

TEST(Lerch, HandExample) {
  const std::vector<StackTrace> corpus{make_trace("d1", 1, {"a", "b"}),
                                       make_trace("d2", 2, {"b", "c"})};
  const TfIdfIndex idx(corpus);
  const auto q = make_trace("q", 3, {"a"});
  EXPECT_NEAR(lerch_score(q, corpus[0], idx), std::log(2.0) * std::log(2.0), 1e-12);
  EXPECT_NEAR(std::log(2.0) * std::log(2.0), 0.4805, 1e-4);
  EXPECT_EQ(lerch_score(q, corpus[1], idx), 0.0);
  EXPECT_EQ(idx.idf("b"), 0.0);  // df = N
  EXPECT_EQ(lerch_score(make_trace("q", 3, {"b"}), corpus[0], idx), 0.0);
  EXPECT_NEAR(idx.idf("never"), std::log(2.0), 1e-12);
  EXPECT_EQ(idx.df("b"), 2u);
}

TEST(Lerch, EmptyIndexThrows) {
  const TfIdfIndex idx;
  EXPECT_THROW(idx.idf("a"), std::logic_error);
  EXPECT_THROW(lerch_score(make_trace("q", 0, {"a"}), make_trace("d", 0, {"a"}), idx),
               std::logic_error);
}

// Straight from the formula, over frame strings.
double lerch_oracle(const StackTrace& q, const StackTrace& d, const std::vector<StackTrace>& corpus) {
  std::map<std::string, int> df;
  for (const auto& t : corpus) {
    std::set<std::string> u;
    for (const auto& f : t.frames) u.insert(f.normalized);
    for (const auto& f : u) ++df[f];
  }
  std::set<std::string> qf;
  for (const auto& f : q.frames) qf.insert(f.normalized);
  double s = 0;
  for (const auto& f : qf) {
    int tf = 0;
    for (const auto& g : d.frames) tf += g.normalized == f;
    const double idf = std::log(static_cast<double>(corpus.size()) / std::max(df[f], 1));
    s += tf * idf * idf;
  }
  return s;
}

std::vector<StackTrace> random_corpus(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StackTrace> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> frames;
    const std::size_t len = 1 + rng() % 12;
    for (std::size_t k = 0; k < len; ++k) frames.push_back("f" + std::to_string(rng() % vocab));
    out.push_back(make_trace("d" + std::to_string(i), static_cast<std::int64_t>(i), frames));
  }
  return out;
}

TEST(Lerch, MatchesFormulaOracle) {
  const auto corpus = random_corpus(80, 30, 1);
  const TfIdfIndex idx(corpus);
  const auto queries = random_corpus(20, 35, 2);
  for (const auto& q : queries)
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const double want = lerch_oracle(q, corpus[d], corpus);
      EXPECT_NEAR(idx.score(q, d), want, 1e-9);
      EXPECT_NEAR(lerch_score(q, corpus[d], idx), want, 1e-9);
    }
}

TEST(Lerch, SearchMatchesFullScan) {
  const auto corpus = random_corpus(200, 60, 3);
  const TfIdfIndex idx(corpus);
  for (const auto& q : random_corpus(30, 70, 4)) {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t d = 0; d < corpus.size(); ++d) all.push_back({d, idx.score(q, d)});
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const auto got = idx.search(q, 10);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].first, all[i].first);
      EXPECT_NEAR(got[i].second, all[i].second, 1e-12);
    }
  }
}

TEST(Lerch, IncrementalEqualsBatch) {
  const auto corpus = random_corpus(50, 20, 5);
  TfIdfIndex inc;
  for (const auto& t : corpus) inc.add(t);
  EXPECT_TRUE(inc == TfIdfIndex(corpus));
  EXPECT_EQ(inc.size(), corpus.size());
}

TEST(Lerch, RepeatedFramesCountRaw) {
  const std::vector<StackTrace> corpus{make_trace("d1", 1, {"r", "r", "r", "x"}),
                                       make_trace("d2", 2, {"y"})};
  const TfIdfIndex idx(corpus);
  EXPECT_EQ(idx.term_frequencies(0).at("r"), 3u);
  EXPECT_NEAR(idx.score(make_trace("q", 0, {"r", "r"}), 0), 3 * std::log(2.0) * std::log(2.0),
              1e-12);
}

std::size_t levenshtein_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b,
                               std::size_t i, std::size_t j,
                               std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  std::size_t best = levenshtein_oracle(a, b, i + 1, j + 1, memo) + (a[i] != b[j]);
  best = std::min(best, levenshtein_oracle(a, b, i + 1, j, memo) + 1);
  best = std::min(best, levenshtein_oracle(a, b, i, j + 1, memo) + 1);
  return memo[key] = best;
}

TEST(EditSimilarity, HandExamples) {
  const auto abc = make_trace("q", 0, {"a", "b", "c"});
  EXPECT_EQ(edit_similarity(abc, abc), 1.0);
  EXPECT_EQ(edit_similarity(abc, make_trace("d", 0, {"x", "y", "z"})), 0.0);
  EXPECT_NEAR(edit_similarity(abc, make_trace("d", 0, {"a", "b"})), 1.0 - 1.0 / 3, 1e-12);
  // Frames compare after normalization.
  EXPECT_EQ(edit_similarity(make_trace("q", 0, {"a.B(B.java:3)"}), make_trace("d", 0, {"a.B"})),
            1.0);
}

TEST(EditSimilarity, MatchesRecursiveOracle) {
  const auto traces = random_corpus(60, 6, 6);
  for (std::size_t i = 0; i < traces.size(); ++i)
    for (std::size_t j = 0; j < traces.size(); j += 3) {
      std::vector<std::string> a, b;
      for (const auto& f : traces[i].frames) a.push_back(f.normalized);
      for (const auto& f : traces[j].frames) b.push_back(f.normalized);
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
      const double want = 1.0 - static_cast<double>(levenshtein_oracle(a, b, 0, 0, memo)) /
                                    static_cast<double>(std::max(a.size(), b.size()));
      EXPECT_NEAR(edit_similarity(traces[i], traces[j]), want, 1e-12);
      EXPECT_EQ(edit_similarity(traces[i], traces[j]), edit_similarity(traces[j], traces[i]));
      EXPECT_EQ(edit_similarity(traces[i], traces[j]) == 1.0, a == b);
    }
}

TEST(EditSimilarity, InternedIds) {
  const std::vector<std::uint32_t> a{1, 2, 3, 4}, b{1, 3, 4};
  EXPECT_NEAR(edit_similarity(a, b), 0.75, 1e-12);
  EXPECT_EQ(edit_similarity(std::span<const std::uint32_t>(), std::span<const std::uint32_t>()), 1.0);
}

TEST(Remote, InputTextJoinsFrames) {
  EXPECT_EQ(remote_input_text(make_trace("q", 0, {"a.B", "c.D(D.java:1)"})), "a.B\nc.D");
}

}  // namespace
}  // namespace stackdedup
