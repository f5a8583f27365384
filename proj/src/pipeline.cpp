// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/pipeline.hpp"

#include <algorithm>
#include <chrono>

namespace stackdedup {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<SearchHit> to_hits(const std::vector<std::pair<std::size_t, double>>& ranked,
                               const std::vector<std::string>& ids,
                               const std::vector<std::string>& categories) {
  std::vector<SearchHit> hits;
  for (auto [i, s] : ranked) hits.push_back({i, ids[i], categories[i], s});
  return hits;
}

}  // namespace

EmbeddingPipeline::EmbeddingPipeline(std::string name, std::size_t dim, EmbedFn embed,
                                     PipelineOptions options)
    : name_(std::move(name)),
      dim_(dim),
      embed_(std::move(embed)),
      options_(options),
      store_(dim, options.hnsw, options.search_mode != SearchMode::kExact) {
  if (options_.k == 0) throw std::invalid_argument("pipeline: K must be at least 1");
}

void EmbeddingPipeline::reset() {
  store_ = EmbeddingStore(dim_, options_.hnsw, options_.search_mode != SearchMode::kExact);
  last_query_id_.clear();
  last_query_vector_.clear();
}

std::vector<float> EmbeddingPipeline::embedding_for(const StackTrace& report) {
  if (!last_query_id_.empty() && report.report_id == last_query_id_ &&
      content_hash(report) == last_query_hash_)
    return last_query_vector_;
  return embed_(report);
}

void EmbeddingPipeline::add(const StackTrace& report, const std::string& category) {
  store_.add(report.report_id, embedding_for(report), category);
}

void EmbeddingPipeline::add_vector(const std::string& report_id,
                                   std::span<const float> v,
                                   const std::string& category) {
  store_.add(report_id, v, category);
}

std::vector<SearchHit> EmbeddingPipeline::retrieve(const StackTrace& query) {
  last_query_vector_ = embed_(query);
  last_query_id_ = query.report_id;
  last_query_hash_ = content_hash(query);
  if (store_.empty()) return {};
  return store_.search(last_query_vector_, options_.k, options_.search_mode);
}

RankResult EmbeddingPipeline::rank(const StackTrace& query) {
  RankResult r;
  const auto start = Clock::now();
  const auto hits = retrieve(query);
  r.retrieval_ms = ms_since(start);
  if (!hits.empty()) {
    r.categories = category_scores(hits);
    r.top_report_id = hits.front().report_id;
  }
  return r;
}

std::unique_ptr<EmbeddingPipeline> make_embedder_pipeline(
    EmbedderModel& model, const BpeVocab& vocab, const TokenizerConfig& tokenizer,
    PipelineOptions options) {
  auto embed = [&model, &vocab, tokenizer](const StackTrace& t) {
    return model.embed(encode_trace(t, vocab, tokenizer));
  };
  return std::make_unique<EmbeddingPipeline>("embedder", model.dim(), embed, options);
}

RerankedPipeline::RerankedPipeline(EmbedderModel& embedder, RerankerModel& reranker,
                                   const BpeVocab& vocab,
                                   const TokenizerConfig& tokenizer,
                                   PipelineOptions options)
    : EmbeddingPipeline(
          "reranked", embedder.dim(),
          [&embedder, &vocab, tokenizer](const StackTrace& t) {
            return embedder.embed(encode_trace(t, vocab, tokenizer));
          },
          options),
      reranker_(reranker),
      vocab_(vocab),
      tokenizer_(tokenizer) {}

void RerankedPipeline::reset() {
  EmbeddingPipeline::reset();
  tokens_.clear();
}

void RerankedPipeline::add(const StackTrace& report, const std::string& category) {
  EmbeddingPipeline::add(report, category);
  register_trace(report);
}

void RerankedPipeline::register_trace(const StackTrace& report) {
  tokens_[report.report_id] = encode_trace(report, vocab_, tokenizer_);
}

RankResult RerankedPipeline::rank(const StackTrace& query) {
  RankResult r;
  auto start = Clock::now();
  const auto hits = retrieve(query);
  r.retrieval_ms = ms_since(start);
  if (hits.empty()) return r;

  start = Clock::now();
  const auto q = encode_trace(query, vocab_, tokenizer_);
  std::vector<std::pair<std::string, const TokenizedTrace*>> candidates;
  for (const auto& h : hits) candidates.emplace_back(h.report_id, &tokens_.at(h.report_id));
  const auto ranked = reranker_.rerank(q, candidates);
  std::unordered_map<std::string, const SearchHit*> by_id;
  for (const auto& h : hits) by_id.emplace(h.report_id, &h);
  std::vector<SearchHit> reranked;
  for (const auto& c : ranked) {
    SearchHit h = *by_id.at(c.report_id);
    h.similarity = c.score;
    reranked.push_back(std::move(h));
  }
  r.categories = category_scores(reranked);
  r.top_report_id = reranked.front().report_id;
  r.rerank_ms = ms_since(start);
  return r;
}

void LerchPipeline::reset() {
  index_ = TfIdfIndex();
  ids_.clear();
  categories_.clear();
}

void LerchPipeline::add(const StackTrace& report, const std::string& category) {
  index_.add(report);
  ids_.push_back(report.report_id);
  categories_.push_back(category);
}

RankResult LerchPipeline::rank(const StackTrace& query) {
  RankResult r;
  const auto start = Clock::now();
  if (!ids_.empty()) {
    const auto hits = to_hits(index_.search(query, k_), ids_, categories_);
    r.categories = category_scores(hits);
    r.top_report_id = hits.front().report_id;
  }
  r.retrieval_ms = ms_since(start);
  return r;
}

std::vector<std::uint32_t> EditPipeline::intern(const StackTrace& t) {
  std::vector<std::uint32_t> out;
  out.reserve(t.frames.size());
  for (const auto& f : t.frames)
    out.push_back(frame_ids_
                      .emplace(f.normalized, static_cast<std::uint32_t>(frame_ids_.size()))
                      .first->second);
  return out;
}

void EditPipeline::reset() {
  frame_ids_.clear();
  frames_.clear();
  ids_.clear();
  categories_.clear();
}

void EditPipeline::add(const StackTrace& report, const std::string& category) {
  frames_.push_back(intern(report));
  ids_.push_back(report.report_id);
  categories_.push_back(category);
}

RankResult EditPipeline::rank(const StackTrace& query) {
  RankResult r;
  const auto start = Clock::now();
  if (!ids_.empty()) {
    // Unknown query frames get fresh ids, which match nothing stored.
    const auto q = intern(query);
    std::vector<std::pair<std::size_t, double>> scored(frames_.size());
    for (std::size_t i = 0; i < frames_.size(); ++i)
      scored[i] = {i, edit_similarity(q, frames_[i])};
    const std::size_t k = std::min(k_, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end(), [](const auto& a, const auto& b) {
                        return a.second > b.second ||
                               (a.second == b.second && a.first < b.first);
                      });
    scored.resize(k);
    const auto hits = to_hits(scored, ids_, categories_);
    r.categories = category_scores(hits);
    r.top_report_id = hits.front().report_id;
  }
  r.retrieval_ms = ms_since(start);
  return r;
}

}  // namespace stackdedup
