// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-encoder that scores a (query, candidate) trace pair. Frames present
// in both traces get a learned significance vector added to their frame
// vectors before the trace-level biLSTM; the two trace vectors are then
// concatenated and mapped to a logit by an MLP.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stackdedup/embedder.hpp"
#include "stackdedup/encoder.hpp"

namespace stackdedup {

struct SharedFrames {
  std::vector<bool> query;
  std::vector<bool> candidate;
};

// Flags every frame whose normalized string occurs anywhere in the other
// trace.
SharedFrames mark_shared_frames(const TokenizedTrace& q, const TokenizedTrace& k);

struct RerankerConfig {
  std::size_t d_tok = 100;
  std::size_t hidden_dim = 100;
  Aggregation aggregation = Aggregation::kConcatAll;
  std::vector<std::size_t> mlp_hidden = {256, 64};
  std::size_t batch_size = 16;  // triplets per optimizer step
  std::size_t max_pairs_per_category = 100;
  double lr = 1e-3;
  std::size_t patience = 3;
  std::size_t max_epochs = 10;
  std::size_t k = 10;  // candidates per validation query
  std::uint64_t seed = 2;
  double clip_norm = 5.0;

  nlohmann::json to_json() const;
  static RerankerConfig from_json(const nlohmann::json& j);
};

// The trainable network, generic over the scalar type so gradient checks can
// run in 64-bit.
template <class Real>
class RerankerNet {
 public:
  RerankerNet(std::size_t vocab_size, const RerankerConfig& config);

  void init(Rng& rng);  // V starts at zero

  nn::Var<Real> score(nn::Graph<Real>& g, const TokenizedTrace& q,
                      const TokenizedTrace& k, FrameMemo<Real>* memo = nullptr,
                      FrameCache<Real>* cache = nullptr);
  nn::Var<Real> triplet_loss(nn::Graph<Real>& g, const TokenizedTrace& anchor,
                             const TokenizedTrace& positive,
                             const TokenizedTrace& negative,
                             FrameMemo<Real>* memo = nullptr);

  TraceEncoder<Real>& encoder() { return encoder_; }
  nn::Parameter<Real>& significance() { return significance_; }
  nn::Mlp<Real>& mlp() { return mlp_; }
  nn::ParameterList<Real> parameters();

 private:
  TraceEncoder<Real> encoder_;
  nn::Parameter<Real> significance_;
  nn::Mlp<Real> mlp_;
};

struct RankedCandidate {
  std::string report_id;
  double score = 0.0;
};

struct Decision {
  bool attach = false;
  std::string category_id;  // category of the top hit when attaching
  double top_score = 0.0;
};

// Attach iff the top score is strictly above the threshold.
Decision decide(const std::vector<RankedCandidate>& ranked,
                const std::vector<std::string>& categories, double threshold);

class RerankerModel {
 public:
  static constexpr const char* kModelKind = "reranker";

  RerankerModel(std::size_t vocab_size, const RerankerConfig& config);

  void init();

  const RerankerConfig& config() const { return config_; }
  RerankerNet<float>& net() { return net_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Frozen-model scoring with cached frame vectors.
  double score_pair(const TokenizedTrace& q, const TokenizedTrace& k);

  // Scores each candidate; sorted descending, ties keep the incoming order.
  std::vector<RankedCandidate> rerank(
      const TokenizedTrace& q,
      const std::vector<std::pair<std::string, const TokenizedTrace*>>& candidates);

  void invalidate_cache() { cache_.clear(); }

  void save(const std::filesystem::path& path);
  static RerankerModel load(const std::filesystem::path& path);

 private:
  RerankerConfig config_;
  std::size_t vocab_size_;
  RerankerNet<float> net_;
  FrameCache<float> cache_;
};

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

// Positive pairs from sample_training_pairs, each extended with a random
// report of a random other category.
std::vector<Triplet> sample_triplets(const std::vector<StackTrace>& train,
                                     std::size_t max_pairs_per_category,
                                     std::uint64_t seed);

struct RerankerTrainResult {
  RerankerModel model;
  double initial_validation_score = -1.0;
  double best_validation_score = -1.0;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
};

// Model selection uses the top-1 category accuracy of reranking the
// embedder's top-K training reports for each validation report with a known
// category. Without an embedder (or without such reports) it falls back to
// the fraction of validation triplets ranked correctly. Ties go to the epoch
// with the lower mean loss on the validation triplets.
RerankerTrainResult train_reranker(
    const DatasetSplit& split, const BpeVocab& vocab,
    const TokenizerConfig& tokenizer, const RerankerConfig& config,
    EmbedderModel* embedder = nullptr,
    const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace stackdedup
