// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Similarity pipelines behind a common interface: hold a growing history of
// labeled reports and rank categories for an incoming report.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackdedup/baselines.hpp"
#include "stackdedup/embedder.hpp"
#include "stackdedup/index.hpp"
#include "stackdedup/reranker.hpp"

namespace stackdedup {

struct RankResult {
  std::vector<CategoryScore> categories;  // best first; empty without history
  std::string top_report_id;
  double retrieval_ms = 0.0;  // query embedding + retrieval
  double rerank_ms = 0.0;
};

class SimilarityPipeline {
 public:
  virtual ~SimilarityPipeline() = default;
  virtual std::string name() const = 0;
  virtual bool has_reranker() const { return false; }
  virtual void reset() = 0;
  virtual void add(const StackTrace& report, const std::string& category) = 0;
  virtual RankResult rank(const StackTrace& query) = 0;
  virtual std::size_t size() const = 0;
};

struct PipelineOptions {
  std::size_t k = 10;
  SearchMode search_mode = SearchMode::kAuto;
  HnswParams hnsw;
};

// Vector retrieval with an arbitrary trace -> vector function.
class EmbeddingPipeline : public SimilarityPipeline {
 public:
  using EmbedFn = std::function<std::vector<float>(const StackTrace&)>;

  EmbeddingPipeline(std::string name, std::size_t dim, EmbedFn embed,
                    PipelineOptions options = {});

  std::string name() const override { return name_; }
  void reset() override;
  void add(const StackTrace& report, const std::string& category) override;
  RankResult rank(const StackTrace& query) override;
  std::size_t size() const override { return store_.size(); }

  // Adds a precomputed vector (bulk loading; excluded from timing).
  void add_vector(const std::string& report_id, std::span<const float> v,
                  const std::string& category);
  EmbeddingStore& store() { return store_; }

 protected:
  std::vector<SearchHit> retrieve(const StackTrace& query);
  std::vector<float> embedding_for(const StackTrace& report);

  std::string name_;
  std::size_t dim_;
  EmbedFn embed_;
  PipelineOptions options_;
  EmbeddingStore store_;
  // Query vector kept so the following add() of the same report reuses it.
  std::string last_query_id_;
  ContentHash last_query_hash_;
  std::vector<float> last_query_vector_;
};

std::unique_ptr<EmbeddingPipeline> make_embedder_pipeline(
    EmbedderModel& model, const BpeVocab& vocab, const TokenizerConfig& tokenizer,
    PipelineOptions options = {});

// Embedder retrieval of the top K reports, reordered by the cross-encoder.
class RerankedPipeline : public EmbeddingPipeline {
 public:
  RerankedPipeline(EmbedderModel& embedder, RerankerModel& reranker,
                   const BpeVocab& vocab, const TokenizerConfig& tokenizer,
                   PipelineOptions options = {});

  bool has_reranker() const override { return true; }
  void reset() override;
  void add(const StackTrace& report, const std::string& category) override;
  RankResult rank(const StackTrace& query) override;

  // Tokenizes a report whose vector is already in store(), e.g. after
  // loading a persisted index.
  void register_trace(const StackTrace& report);

 private:
  RerankerModel& reranker_;
  const BpeVocab& vocab_;
  TokenizerConfig tokenizer_;
  std::unordered_map<std::string, TokenizedTrace> tokens_;
};

// Lerch TF-IDF over whole frames; the index grows with the history.
class LerchPipeline : public SimilarityPipeline {
 public:
  explicit LerchPipeline(std::size_t k = 10) : k_(k) {}
  std::string name() const override { return "lerch"; }
  void reset() override;
  void add(const StackTrace& report, const std::string& category) override;
  RankResult rank(const StackTrace& query) override;
  std::size_t size() const override { return ids_.size(); }

 private:
  std::size_t k_;
  TfIdfIndex index_;
  std::vector<std::string> ids_;
  std::vector<std::string> categories_;
};

// Exhaustive frame-level edit similarity.
class EditPipeline : public SimilarityPipeline {
 public:
  explicit EditPipeline(std::size_t k = 10) : k_(k) {}
  std::string name() const override { return "edit"; }
  void reset() override;
  void add(const StackTrace& report, const std::string& category) override;
  RankResult rank(const StackTrace& query) override;
  std::size_t size() const override { return ids_.size(); }

 private:
  std::vector<std::uint32_t> intern(const StackTrace& t);

  std::size_t k_;
  std::unordered_map<std::string, std::uint32_t> frame_ids_;
  std::vector<std::vector<std::uint32_t>> frames_;
  std::vector<std::string> ids_;
  std::vector<std::string> categories_;
};

}  // namespace stackdedup
