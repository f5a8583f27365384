// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "grad_check.hpp"
#include "stackdedup/encoder.hpp"
#include "stackdedup/nn/ops.hpp"

namespace stackdedup {
namespace {

using testing::check_gradients64;
using testing::sample_coords;

TokenizedTrace tokens(std::vector<std::vector<TokenId>> frames) {
  TokenizedTrace t;
  for (std::size_t i = 0; i < frames.size(); ++i) t.frame_keys.push_back("f" + std::to_string(i));
  t.frames = std::move(frames);
  return t;
}

TEST(Aggregation, ParseAndWidth) {
  EXPECT_EQ(parse_aggregation("avg"), Aggregation::kAvg);
  EXPECT_EQ(parse_aggregation("max"), Aggregation::kMax);
  EXPECT_EQ(parse_aggregation("hidden"), Aggregation::kHidden);
  EXPECT_EQ(parse_aggregation("concat"), Aggregation::kConcatAll);
  EXPECT_THROW(parse_aggregation("sum"), std::invalid_argument);
  EXPECT_EQ(to_string(Aggregation::kConcatAll), "concat");
  EXPECT_EQ(aggregated_width(Aggregation::kAvg, 7), 14u);
  EXPECT_EQ(aggregated_width(Aggregation::kConcatAll, 7), 42u);
}

TEST(Aggregation, Values) {
  // Two steps of a hidden-size-1 biLSTM output: [fwd | bwd].
  nn::Graph<double> g(false);
  auto out = nn::ops::constant(g, nn::Tensor<double>({2, 2}, std::vector<double>{1, 4, 3, 2}));
  EXPECT_EQ(aggregate(out, Aggregation::kAvg).value().storage(), (std::vector<double>{2, 3}));
  EXPECT_EQ(aggregate(out, Aggregation::kMax).value().storage(), (std::vector<double>{3, 4}));
  // Forward state at the last step, backward state at the first step.
  EXPECT_EQ(aggregate(out, Aggregation::kHidden).value().storage(), (std::vector<double>{3, 4}));
  EXPECT_EQ(aggregate(out, Aggregation::kConcatAll).value().storage(),
            (std::vector<double>{2, 3, 3, 4, 3, 4}));
}

class EncoderGrad : public ::testing::TestWithParam<Aggregation> {};

TEST_P(EncoderGrad, InfoNceGradientsAllLevels) {
  const EncoderConfig cfg{12, 5, 4, GetParam()};
  TraceEncoder<double> enc("enc", cfg);
  Rng rng(3);
  enc.init(rng);
  const std::vector<TokenizedTrace> a{tokens({{2, 3, 4}, {5, 6}, {2}}), tokens({{7, 8}, {9, 3}}),
                                      tokens({{10, 11, 2}})};
  const std::vector<TokenizedTrace> p{tokens({{2, 3}, {5, 6}}), tokens({{7, 8, 8}, {9}}),
                                      tokens({{10, 11}, {4}})};
  std::vector<const TokenizedTrace*> ap, pp;
  for (auto& t : a) ap.push_back(&t);
  for (auto& t : p) pp.push_back(&t);
  auto params = enc.parameters();
  testing::LossFn<double> loss = [&](nn::Graph<double>& g) {
    return info_nce_batch_loss<double>(g, enc, ap, pp, 0.5, false);
  };
  std::mt19937_64 pick(7);
  const std::vector<std::size_t> used_rows{2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const auto table = check_gradients64(params, loss, sample_coords(params, {0}, pick, used_rows), 50);
  EXPECT_TRUE(table.ok()) << table.worst;
  const auto frame = check_gradients64(params, loss, sample_coords(params, {1, 2, 3, 4, 5, 6}, pick), 50);
  EXPECT_TRUE(frame.ok()) << frame.worst;
  const auto trace = check_gradients64(params, loss, sample_coords(params, {7, 8, 9, 10, 11, 12}, pick), 50);
  EXPECT_TRUE(trace.ok()) << trace.worst;
}

INSTANTIATE_TEST_SUITE_P(Aggregations, EncoderGrad,
                         ::testing::Values(Aggregation::kAvg, Aggregation::kMax,
                                           Aggregation::kHidden, Aggregation::kConcatAll),
                         [](const auto& info) { return to_string(info.param); });

TEST(Encoder, BatchLossMatchesScalarRecomputation) {
  TraceEncoder<double> enc("enc", EncoderConfig{10, 4, 3, Aggregation::kConcatAll});
  Rng rng(5);
  enc.init(rng);
  const std::vector<TokenizedTrace> a{tokens({{2, 3}, {4}}), tokens({{5, 6, 7}}),
                                      tokens({{8}, {9}, {2}}), tokens({{3, 3}})};
  const std::vector<TokenizedTrace> p{tokens({{2}, {4}}), tokens({{5, 6}}), tokens({{8}, {9}}),
                                      tokens({{3}, {7}})};
  std::vector<const TokenizedTrace*> ap, pp;
  for (auto& t : a) ap.push_back(&t);
  for (auto& t : p) pp.push_back(&t);
  const double tau = 0.2;
  for (bool literal : {false, true}) {
    nn::Graph<double> g(false);
    const double got = info_nce_batch_loss<double>(g, enc, ap, pp, tau, literal).value()[0];

    std::vector<std::vector<double>> ea, ep;
    for (auto* t : ap) {
      nn::Graph<double> h(false);
      ea.push_back(enc.embed_trace(h, *t).value().storage());
    }
    for (auto* t : pp) {
      nn::Graph<double> h(false);
      ep.push_back(enc.embed_trace(h, *t).value().storage());
    }
    auto cos = [](const std::vector<double>& x, const std::vector<double>& y) {
      double d = 0, nx = 0, ny = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        d += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
      }
      return d / std::sqrt(nx * ny);
    };
    double want = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) {
      double denom = 0;
      for (std::size_t j = 0; j < ep.size(); ++j)
        if (!literal || j != i) denom += std::exp(cos(ea[i], ep[j]) / tau);
      want += -cos(ea[i], ep[i]) / tau + std::log(denom);
    }
    want /= static_cast<double>(ea.size());
    EXPECT_NEAR(got, want, 1e-5) << (literal ? "literal" : "standard");
  }
}

TEST(Encoder, CacheAndMemoDoNotChangeEmbeddings) {
  TraceEncoder<float> enc("enc", EncoderConfig{10, 4, 3, Aggregation::kMax});
  Rng rng(6);
  enc.init(rng);
  const auto t = tokens({{2, 3}, {4, 5}, {2, 3}});
  nn::Graph<float> g0(false);
  const auto plain = enc.embed_trace(g0, t).value();
  FrameCache<float> cache;
  for (int rep = 0; rep < 2; ++rep) {
    nn::Graph<float> g(false);
    EXPECT_EQ(enc.embed_trace(g, t, nullptr, &cache).value(), plain);
  }
  EXPECT_EQ(cache.size(), 2u);
  FrameMemo<float> memo;
  nn::Graph<float> g1(true);
  EXPECT_EQ(enc.embed_trace(g1, t, &memo).value(), plain);
  EXPECT_EQ(memo.size(), 2u);
  cache.clear();
  EXPECT_EQ(cache.size(), 0u);
}

TEST(Encoder, EmptyFrameRejected) {
  TraceEncoder<float> enc("enc", EncoderConfig{10, 4, 3, Aggregation::kAvg});
  Rng rng(1);
  enc.init(rng);
  nn::Graph<float> g(false);
  EXPECT_THROW(enc.embed_frame(g, {}), nn::ShapeError);
}

TEST(Encoder, ParameterNamesUnique) {
  TraceEncoder<float> enc("enc", EncoderConfig{10, 4, 3, Aggregation::kAvg});
  std::set<std::string> names;
  for (auto* p : enc.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_EQ(names.size(), 13u);
}

}  // namespace
}  // namespace stackdedup
