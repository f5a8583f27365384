// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Bi-encoder trace embedding model trained with in-batch contrastive loss.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "stackdedup/encoder.hpp"
#include "stackdedup/trace_model.hpp"

namespace stackdedup {

struct EmbedderConfig {
  std::size_t d_tok = 100;
  std::size_t hidden_dim = 100;
  Aggregation aggregation = Aggregation::kConcatAll;
  double temperature = 0.05;
  std::size_t batch_size = 64;
  std::size_t max_pairs_per_category = 100;
  double lr = 1e-3;
  std::size_t patience = 3;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 1;
  bool infonce_literal = false;
  double clip_norm = 5.0;  // 0 disables clipping

  nlohmann::json to_json() const;
  static EmbedderConfig from_json(const nlohmann::json& j);
};

// Cosine similarity; throws std::domain_error on a zero vector and
// std::invalid_argument on a width mismatch.
double similarity(std::span<const float> a, std::span<const float> b);

// Indices into the training list.
struct TrainingPair {
  std::size_t anchor;
  std::size_t positive;
};

// Per category: all pairs of distinct-content reports, or exactly
// `max_pairs_per_category` of them drawn uniformly when there are more.
// Unlabeled reports are ignored. The returned order is shuffled.
std::vector<TrainingPair> sample_training_pairs(
    const std::vector<StackTrace>& train, std::size_t max_pairs_per_category,
    std::uint64_t seed);

// Groups pairs into batches of at most `batch_size` in which no two pairs
// share a category. Batches that would hold fewer than two pairs are dropped.
std::vector<std::vector<std::size_t>> make_pair_batches(
    const std::vector<TrainingPair>& pairs,
    const std::vector<StackTrace>& train, std::size_t batch_size, Rng& rng);

// Mean reciprocal rank of each query's true category, ranking the
// reference categories by their best member similarity. Queries whose
// category has no reference member are ignored; returns -1 when none remain.
double category_mrr(const std::vector<std::vector<float>>& query_vectors,
                    const std::vector<std::string>& query_categories,
                    const std::vector<std::vector<float>>& reference_vectors,
                    const std::vector<std::string>& reference_categories);

class EmbedderModel {
 public:
  static constexpr const char* kModelKind = "embedder";

  EmbedderModel(std::size_t vocab_size, const EmbedderConfig& config);

  void init();  // seeded from config.seed

  const EmbedderConfig& config() const { return config_; }
  std::size_t dim() const { return encoder_.embedding_width(); }
  TraceEncoder<float>& encoder() { return encoder_; }
  nn::ParameterList<float> parameters() { return encoder_.parameters(); }

  // Frozen-model embedding. Frame vectors are cached across calls; call
  // invalidate_cache() after changing weights.
  std::vector<float> embed(const TokenizedTrace& trace);
  void invalidate_cache() { cache_.clear(); }

  void save(const std::filesystem::path& path);
  static EmbedderModel load(const std::filesystem::path& path);

 private:
  EmbedderConfig config_;
  TraceEncoder<float> encoder_;
  FrameCache<float> cache_;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
  double validation_score = -1.0;
  double seconds = 0.0;
  bool improved = false;
};

struct EmbedderTrainResult {
  EmbedderModel model;
  double initial_validation_mrr = -1.0;
  double best_validation_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
};

// Tokenizes the training and validation parts of `split` with `vocab`,
// trains, and returns the weights of the best validation epoch.
EmbedderTrainResult train_embedder(
    const DatasetSplit& split, const BpeVocab& vocab,
    const TokenizerConfig& tokenizer, const EmbedderConfig& config,
    const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace stackdedup
