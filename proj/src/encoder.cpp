// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/encoder.hpp"

#include <cmath>

namespace stackdedup {

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kAvg: return "avg";
    case Aggregation::kMax: return "max";
    case Aggregation::kHidden: return "hidden";
    case Aggregation::kConcatAll: return "concat";
  }
  return "concat";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "avg") return Aggregation::kAvg;
  if (name == "max") return Aggregation::kMax;
  if (name == "hidden") return Aggregation::kHidden;
  if (name == "concat" || name == "concat-all") return Aggregation::kConcatAll;
  throw std::invalid_argument("unknown aggregation '" + std::string(name) +
                              "' (avg, max, hidden, concat)");
}

std::size_t aggregated_width(Aggregation a, std::size_t hidden_dim) {
  return a == Aggregation::kConcatAll ? 6 * hidden_dim : 2 * hidden_dim;
}

template <class Real>
nn::Var<Real> aggregate(nn::Var<Real> outputs, Aggregation mode) {
  switch (mode) {
    case Aggregation::kAvg: return nn::ops::mean_rows(outputs);
    case Aggregation::kMax: return nn::ops::max_rows(outputs);
    case Aggregation::kHidden: return nn::ops::final_hidden(outputs);
    case Aggregation::kConcatAll: {
      const nn::Var<Real> parts[] = {nn::ops::mean_rows(outputs),
                                     nn::ops::max_rows(outputs),
                                     nn::ops::final_hidden(outputs)};
      return nn::ops::concat<Real>(parts);
    }
  }
  throw std::logic_error("aggregate: bad mode");
}

template <class Real>
std::string FrameCache<Real>::key(std::span<const TokenId> ids) {
  return std::string(reinterpret_cast<const char*>(ids.data()),
                     ids.size() * sizeof(TokenId));
}

template <class Real>
bool FrameCache<Real>::lookup(std::span<const TokenId> ids,
                              std::vector<Real>& out) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key(ids));
  if (it == entries_.end()) return false;
  out = it->second;
  return true;
}

template <class Real>
void FrameCache<Real>::store(std::span<const TokenId> ids,
                             std::vector<Real> value) {
  std::lock_guard lock(mu_);
  entries_.emplace(key(ids), std::move(value));
}

template <class Real>
void FrameCache<Real>::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

template <class Real>
std::size_t FrameCache<Real>::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

template <class Real>
TraceEncoder<Real>::TraceEncoder(const std::string& prefix,
                                 const EncoderConfig& config)
    : config_(config),
      token_table_(prefix + ".tokens", {config.vocab_size, config.d_tok}),
      frame_lstm_(prefix + ".frame_lstm", config.d_tok, config.hidden_dim),
      trace_lstm_(prefix + ".trace_lstm",
                  aggregated_width(config.aggregation, config.hidden_dim),
                  config.hidden_dim) {
  if (config.vocab_size < 2 || config.d_tok == 0 || config.hidden_dim == 0)
    throw std::invalid_argument("encoder: vocab_size, d_tok and hidden_dim "
                                "must be positive");
}

template <class Real>
void TraceEncoder<Real>::init(Rng& rng) {
  for (Real& v : token_table_.value.data())
    v = static_cast<Real>(rng.normal() * 0.1);
  frame_lstm_.init(rng);
  trace_lstm_.init(rng);
}

template <class Real>
nn::Var<Real> TraceEncoder<Real>::embed_frame(nn::Graph<Real>& g,
                                              std::span<const TokenId> ids) {
  if (ids.empty()) throw nn::ShapeError("embed_frame: empty token sequence");
  auto tokens = nn::ops::embedding(g, token_table_, ids);
  return aggregate(frame_lstm_.forward(tokens), config_.aggregation);
}

template <class Real>
nn::Var<Real> TraceEncoder<Real>::frame_matrix(nn::Graph<Real>& g,
                                               const TokenizedTrace& trace,
                                               FrameMemo<Real>* memo,
                                               FrameCache<Real>* cache) {
  if (trace.frames.empty()) throw nn::ShapeError("embed_trace: empty trace");
  if (cache) {
    if (g.recording())
      throw std::logic_error("frame cache used on a recording graph");
    const std::size_t w = frame_width();
    nn::Tensor<Real> rows({trace.frames.size(), w});
    std::vector<Real> v;
    for (std::size_t i = 0; i < trace.frames.size(); ++i) {
      const auto& ids = trace.frames[i];
      if (!cache->lookup(ids, v)) {
        nn::Graph<Real> scratch(false);
        const auto& t = embed_frame(scratch, ids).value();
        v.assign(t.raw(), t.raw() + t.size());
        cache->store(ids, v);
      }
      std::copy(v.begin(), v.end(), rows.raw() + i * w);
    }
    return nn::ops::constant(g, std::move(rows));
  }
  std::vector<nn::Var<Real>> rows;
  rows.reserve(trace.frames.size());
  for (const auto& ids : trace.frames) {
    if (memo) {
      auto it = memo->find(ids);
      if (it == memo->end()) it = memo->emplace(ids, embed_frame(g, ids)).first;
      rows.push_back(it->second);
    } else {
      rows.push_back(embed_frame(g, ids));
    }
  }
  return nn::ops::stack<Real>(rows);
}

template <class Real>
nn::Var<Real> TraceEncoder<Real>::encode_frames(nn::Var<Real> frames) {
  return aggregate(trace_lstm_.forward(frames), config_.aggregation);
}

template <class Real>
nn::Var<Real> TraceEncoder<Real>::embed_trace(nn::Graph<Real>& g,
                                              const TokenizedTrace& trace,
                                              FrameMemo<Real>* memo,
                                              FrameCache<Real>* cache) {
  return encode_frames(frame_matrix(g, trace, memo, cache));
}

template <class Real>
nn::ParameterList<Real> TraceEncoder<Real>::parameters() {
  nn::ParameterList<Real> out{&token_table_};
  for (auto* p : frame_lstm_.parameters()) out.push_back(p);
  for (auto* p : trace_lstm_.parameters()) out.push_back(p);
  return out;
}

template <class Real>
nn::Var<Real> info_nce_batch_loss(
    nn::Graph<Real>& g, TraceEncoder<Real>& encoder,
    std::span<const TokenizedTrace* const> anchors,
    std::span<const TokenizedTrace* const> positives, Real temperature,
    bool literal_denominator, FrameMemo<Real>* memo) {
  if (anchors.size() != positives.size())
    throw std::invalid_argument("info_nce: anchors and positives differ in count");
  if (anchors.size() < 2)
    throw std::invalid_argument("info_nce: batch size must be at least 2");
  std::vector<nn::Var<Real>> a, p;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    a.push_back(encoder.embed_trace(g, *anchors[i], memo));
    p.push_back(encoder.embed_trace(g, *positives[i], memo));
  }
  auto sims = nn::ops::cosine_matrix(nn::ops::stack<Real>(a),
                                     nn::ops::stack<Real>(p));
  return nn::ops::info_nce(sims, temperature, literal_denominator);
}

#define STACKDEDUP_INSTANTIATE(Real)                                        \
  template nn::Var<Real> aggregate<Real>(nn::Var<Real>, Aggregation);       \
  template class FrameCache<Real>;                                          \
  template class TraceEncoder<Real>;                                        \
  template nn::Var<Real> info_nce_batch_loss<Real>(                         \
      nn::Graph<Real>&, TraceEncoder<Real>&,                                \
      std::span<const TokenizedTrace* const>,                               \
      std::span<const TokenizedTrace* const>, Real, bool, FrameMemo<Real>*);

STACKDEDUP_INSTANTIATE(float)
STACKDEDUP_INSTANTIATE(double)
#undef STACKDEDUP_INSTANTIATE

}  // namespace stackdedup
