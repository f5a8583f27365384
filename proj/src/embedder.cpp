// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/embedder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "stackdedup/errors.hpp"
#include "stackdedup/kernels.hpp"
#include "stackdedup/nn/optim.hpp"
#include "stackdedup/nn/weights_io.hpp"

namespace stackdedup {

nlohmann::json EmbedderConfig::to_json() const {
  return {{"d_tok", d_tok},
          {"hidden_dim", hidden_dim},
          {"aggregation", to_string(aggregation)},
          {"temperature", temperature},
          {"batch_size", batch_size},
          {"max_pairs_per_category", max_pairs_per_category},
          {"lr", lr},
          {"patience", patience},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"infonce_literal", infonce_literal},
          {"clip_norm", clip_norm}};
}

EmbedderConfig EmbedderConfig::from_json(const nlohmann::json& j) {
  EmbedderConfig c;
  c.d_tok = j.value("d_tok", c.d_tok);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.aggregation = parse_aggregation(j.value("aggregation", std::string("concat")));
  c.temperature = j.value("temperature", c.temperature);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_pairs_per_category =
      j.value("max_pairs_per_category", c.max_pairs_per_category);
  c.lr = j.value("lr", c.lr);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.infonce_literal = j.value("infonce_literal", c.infonce_literal);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

double similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("similarity: width " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0)
    throw std::domain_error("similarity: zero vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<TrainingPair> sample_training_pairs(
    const std::vector<StackTrace>& train, std::size_t max_pairs_per_category,
    std::uint64_t seed) {
  // Distinct-content members per category, in input order.
  std::map<std::string, std::vector<std::size_t>> members;
  std::map<std::string, std::unordered_set<ContentHash>> seen;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].category_id) continue;
    const std::string& cat = *train[i].category_id;
    if (seen[cat].insert(content_hash(train[i])).second)
      members[cat].push_back(i);
  }

  Rng rng(seed);
  std::vector<TrainingPair> pairs;
  for (const auto& [cat, idx] : members) {
    const std::size_t n = idx.size();
    if (n < 2) continue;
    const std::size_t total = n * (n - 1) / 2;
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    if (total <= max_pairs_per_category) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) chosen.emplace_back(a, b);
    } else if (total <= 4 * max_pairs_per_category) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) chosen.emplace_back(a, b);
      // Partial Fisher-Yates: the first k entries are a uniform subset.
      for (std::size_t i = 0; i < max_pairs_per_category; ++i)
        std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
      chosen.resize(max_pairs_per_category);
    } else {
      std::set<std::pair<std::size_t, std::size_t>> picked;
      while (picked.size() < max_pairs_per_category) {
        std::size_t a = rng.below(n), b = rng.below(n);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (picked.insert({a, b}).second) chosen.emplace_back(a, b);
      }
    }
    for (auto [a, b] : chosen) {
      if (rng.below(2)) std::swap(a, b);
      pairs.push_back({idx[a], idx[b]});
    }
  }
  if (pairs.empty())
    throw DataError("no category has two distinct-content training reports");
  rng.shuffle(pairs);
  return pairs;
}

std::vector<std::vector<std::size_t>> make_pair_batches(
    const std::vector<TrainingPair>& pairs,
    const std::vector<StackTrace>& train, std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    by_category[*train[pairs[i].anchor].category_id].push_back(i);

  struct Queue {
    std::vector<std::size_t> items;
    std::size_t next = 0;
    std::size_t remaining() const { return items.size() - next; }
  };
  std::vector<Queue> queues;
  for (auto& [cat, items] : by_category) {
    rng.shuffle(items);
    queues.push_back({std::move(items), 0});
  }
  rng.shuffle(queues);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> order(queues.size());
  for (;;) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Fullest categories first so they are spread over many batches.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return queues[a].remaining() > queues[b].remaining();
    });
    std::vector<std::size_t> batch;
    for (std::size_t q : order) {
      if (batch.size() == batch_size || queues[q].remaining() == 0) break;
      batch.push_back(queues[q].items[queues[q].next++]);
    }
    if (batch.size() < 2) break;
    batches.push_back(std::move(batch));
  }
  rng.shuffle(batches);
  return batches;
}

double category_mrr(const std::vector<std::vector<float>>& query_vectors,
                    const std::vector<std::string>& query_categories,
                    const std::vector<std::vector<float>>& reference_vectors,
                    const std::vector<std::string>& reference_categories) {
  std::map<std::string, std::size_t> cat_index;
  std::vector<std::size_t> ref_cat(reference_categories.size());
  for (std::size_t i = 0; i < reference_categories.size(); ++i)
    ref_cat[i] = cat_index.emplace(reference_categories[i], cat_index.size())
                     .first->second;
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<double> best(cat_index.size());
  for (std::size_t q = 0; q < query_vectors.size(); ++q) {
    auto it = cat_index.find(query_categories[q]);
    if (it == cat_index.end()) continue;
    std::fill(best.begin(), best.end(), -2.0);
    for (std::size_t r = 0; r < reference_vectors.size(); ++r)
      best[ref_cat[r]] = std::max(
          best[ref_cat[r]], similarity(query_vectors[q], reference_vectors[r]));
    const double truth = best[it->second];
    std::size_t rank = 1;
    for (double s : best) rank += s > truth;
    total += 1.0 / static_cast<double>(rank);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : -1.0;
}

EmbedderModel::EmbedderModel(std::size_t vocab_size,
                             const EmbedderConfig& config)
    : config_(config),
      encoder_("embedder",
               EncoderConfig{vocab_size, config.d_tok, config.hidden_dim,
                             config.aggregation}) {}

void EmbedderModel::init() {
  Rng rng(config_.seed);
  encoder_.init(rng);
  invalidate_cache();
}

std::vector<float> EmbedderModel::embed(const TokenizedTrace& trace) {
  nn::Graph<float> g(false);
  const auto& v = encoder_.embed_trace(g, trace, nullptr, &cache_).value();
  return v.storage();
}

void EmbedderModel::save(const std::filesystem::path& path) {
  nn::WeightHeader header;
  header.model_kind = kModelKind;
  header.hyperparameters = config_.to_json();
  header.hyperparameters["vocab_size"] = encoder_.config().vocab_size;
  nn::save_weights<float>(path, header, parameters());
}

EmbedderModel EmbedderModel::load(const std::filesystem::path& path) {
  const auto header = nn::read_weight_header(path);
  if (header.model_kind != kModelKind)
    throw ArtifactError(path.string() + ": expected model kind '" +
                        std::string(kModelKind) + "', found '" +
                        header.model_kind + "'");
  EmbedderConfig config;
  std::size_t vocab_size = 0;
  try {
    config = EmbedderConfig::from_json(header.hyperparameters);
    vocab_size = header.hyperparameters.at("vocab_size").get<std::size_t>();
  } catch (const std::exception& e) {
    throw ArtifactError(path.string() + ": bad hyperparameters: " + e.what());
  }
  EmbedderModel model(vocab_size, config);
  nn::load_weights<float>(path, kModelKind, model.parameters());
  return model;
}

namespace {

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(const nn::ParameterList<float>& params) {
  Snapshot s;
  for (auto* p : params) s.push_back(p->value.storage());
  return s;
}

void restore(const nn::ParameterList<float>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->value.storage() = s[i];
}

double validation_mrr(EmbedderModel& model,
                      const std::vector<TokenizedTrace>& train_tok,
                      const std::vector<StackTrace>& train,
                      const std::vector<TokenizedTrace>& val_tok,
                      const std::vector<StackTrace>& validation) {
  model.invalidate_cache();
  std::vector<std::vector<float>> ref, queries;
  std::vector<std::string> ref_cats, query_cats;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].category_id) continue;
    ref.push_back(model.embed(train_tok[i]));
    ref_cats.push_back(*train[i].category_id);
  }
  const std::set<std::string> known(ref_cats.begin(), ref_cats.end());
  for (std::size_t i = 0; i < validation.size(); ++i) {
    if (!validation[i].category_id || !known.count(*validation[i].category_id))
      continue;
    queries.push_back(model.embed(val_tok[i]));
    query_cats.push_back(*validation[i].category_id);
  }
  const double mrr = category_mrr(queries, query_cats, ref, ref_cats);
  model.invalidate_cache();
  return mrr;
}

}  // namespace

EmbedderTrainResult train_embedder(
    const DatasetSplit& split, const BpeVocab& vocab,
    const TokenizerConfig& tokenizer, const EmbedderConfig& config,
    const std::function<void(const EpochStats&)>& on_epoch) {
  if (config.temperature <= 0.0)
    throw std::invalid_argument("temperature must be positive");
  const auto& train = split.train;
  std::vector<TokenizedTrace> train_tok, val_tok;
  train_tok.reserve(train.size());
  for (const auto& t : train) train_tok.push_back(encode_trace(t, vocab, tokenizer));
  for (const auto& t : split.validation)
    val_tok.push_back(encode_trace(t, vocab, tokenizer));

  EmbedderTrainResult result{EmbedderModel(vocab.size(), config), -1.0, -1.0, 0, {}};
  EmbedderModel& model = result.model;
  model.init();
  if (config.max_epochs == 0) return result;

  const auto pairs =
      sample_training_pairs(train, config.max_pairs_per_category, config.seed);
  auto params = model.parameters();
  nn::Adam<float> adam(params, nn::AdamOptions{config.lr});
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  result.initial_validation_mrr =
      validation_mrr(model, train_tok, train, val_tok, split.validation);
  result.best_validation_mrr = result.initial_validation_mrr;
  Snapshot best = snapshot(params);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& batch : make_pair_batches(pairs, train, config.batch_size, rng)) {
      std::vector<const TokenizedTrace*> anchors, positives;
      for (std::size_t i : batch) {
        anchors.push_back(&train_tok[pairs[i].anchor]);
        positives.push_back(&train_tok[pairs[i].positive]);
      }
      nn::Graph<float> g(true);
      FrameMemo<float> memo;
      auto loss = info_nce_batch_loss<float>(
          g, model.encoder(), anchors, positives,
          static_cast<float>(config.temperature), config.infonce_literal, &memo);
      stats.batch_losses.push_back(loss.value()[0]);
      g.backward(loss);
      if (config.clip_norm > 0) nn::clip_grad_norm(params, config.clip_norm);
      adam.step();
    }
    for (double l : stats.batch_losses) stats.mean_loss += l;
    if (!stats.batch_losses.empty())
      stats.mean_loss /= static_cast<double>(stats.batch_losses.size());

    stats.validation_score =
        validation_mrr(model, train_tok, train, val_tok, split.validation);
    // Without a usable validation task every epoch counts as an improvement.
    stats.improved = stats.validation_score < 0 ||
                     stats.validation_score > result.best_validation_mrr;
    stats.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    if (stats.improved) {
      result.best_validation_mrr = stats.validation_score;
      result.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else {
      ++stale;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (stale >= config.patience) break;
  }
  restore(params, best);
  model.invalidate_cache();
  return result;
}

}  // namespace stackdedup
