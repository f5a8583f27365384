// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Two-level trace encoder: a biLSTM over the BPE tokens of each frame, then a
// biLSTM over the resulting frame vectors. Both levels reduce their per-step
// outputs with the same aggregation. The embedder and the reranker each own
// one of these (no weight sharing).
#pragma once

#include <map>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackdedup/nn/layers.hpp"
#include "stackdedup/nn/ops.hpp"
#include "stackdedup/tokenizer.hpp"

namespace stackdedup {

enum class Aggregation { kAvg, kMax, kHidden, kConcatAll };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

// Width of an aggregated biLSTM output: 2H, or 6H for concat-all.
std::size_t aggregated_width(Aggregation a, std::size_t hidden_dim);

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_tok = 100;
  std::size_t hidden_dim = 100;
  Aggregation aggregation = Aggregation::kConcatAll;
};

// concat-all joins [avg, max, hidden] in that order.
template <class Real>
nn::Var<Real> aggregate(nn::Var<Real> outputs, Aggregation mode);

// Per-graph memo so each distinct token sequence in a batch is encoded once.
template <class Real>
using FrameMemo = std::map<std::vector<TokenId>, nn::Var<Real>>;

// Frame vectors of a frozen encoder, keyed by token sequence. Thread-safe.
template <class Real>
class FrameCache {
 public:
  FrameCache() = default;
  // Moves carry the entries over; the mutex is never shared.
  FrameCache(FrameCache&& other) noexcept : entries_(std::move(other.entries_)) {}
  FrameCache& operator=(FrameCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    return *this;
  }

  bool lookup(std::span<const TokenId> ids, std::vector<Real>& out) const;
  void store(std::span<const TokenId> ids, std::vector<Real> value);
  void clear();
  std::size_t size() const;

 private:
  static std::string key(std::span<const TokenId> ids);
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<Real>> entries_;
};

template <class Real>
class TraceEncoder {
 public:
  TraceEncoder() = default;
  TraceEncoder(const std::string& prefix, const EncoderConfig& config);

  void init(Rng& rng);

  const EncoderConfig& config() const { return config_; }
  std::size_t frame_width() const {
    return aggregated_width(config_.aggregation, config_.hidden_dim);
  }
  std::size_t embedding_width() const { return frame_width(); }

  nn::Var<Real> embed_frame(nn::Graph<Real>& g, std::span<const TokenId> ids);

  // Frame vectors stacked as rows [F, frame_width]. With a cache the graph
  // must not be recording: cached vectors enter as constants.
  nn::Var<Real> frame_matrix(nn::Graph<Real>& g, const TokenizedTrace& trace,
                             FrameMemo<Real>* memo = nullptr,
                             FrameCache<Real>* cache = nullptr);

  // Trace-level biLSTM plus aggregation over a frame matrix.
  nn::Var<Real> encode_frames(nn::Var<Real> frames);

  nn::Var<Real> embed_trace(nn::Graph<Real>& g, const TokenizedTrace& trace,
                            FrameMemo<Real>* memo = nullptr,
                            FrameCache<Real>* cache = nullptr);

  nn::Parameter<Real>& token_table() { return token_table_; }
  nn::BiLstm<Real>& frame_lstm() { return frame_lstm_; }
  nn::BiLstm<Real>& trace_lstm() { return trace_lstm_; }
  nn::ParameterList<Real> parameters();

 private:
  EncoderConfig config_;
  nn::Parameter<Real> token_table_;
  nn::BiLstm<Real> frame_lstm_;
  nn::BiLstm<Real> trace_lstm_;
};

// In-batch contrastive loss: row i of the cosine matrix between anchors and
// positives has its positive on the diagonal and N-1 negatives elsewhere.
template <class Real>
nn::Var<Real> info_nce_batch_loss(nn::Graph<Real>& g,
                                  TraceEncoder<Real>& encoder,
                                  std::span<const TokenizedTrace* const> anchors,
                                  std::span<const TokenizedTrace* const> positives,
                                  Real temperature, bool literal_denominator,
                                  FrameMemo<Real>* memo = nullptr);

}  // namespace stackdedup
