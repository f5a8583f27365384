// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/reranker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "stackdedup/errors.hpp"
#include "stackdedup/index.hpp"
#include "stackdedup/nn/optim.hpp"
#include "stackdedup/nn/weights_io.hpp"

namespace stackdedup {

SharedFrames mark_shared_frames(const TokenizedTrace& q, const TokenizedTrace& k) {
  const std::unordered_set<std::string_view> in_q(q.frame_keys.begin(),
                                                  q.frame_keys.end());
  const std::unordered_set<std::string_view> in_k(k.frame_keys.begin(),
                                                  k.frame_keys.end());
  SharedFrames out;
  out.query.reserve(q.frame_keys.size());
  out.candidate.reserve(k.frame_keys.size());
  for (const auto& f : q.frame_keys) out.query.push_back(in_k.count(f) > 0);
  for (const auto& f : k.frame_keys) out.candidate.push_back(in_q.count(f) > 0);
  return out;
}

nlohmann::json RerankerConfig::to_json() const {
  return {{"d_tok", d_tok},
          {"hidden_dim", hidden_dim},
          {"aggregation", to_string(aggregation)},
          {"mlp_hidden", mlp_hidden},
          {"batch_size", batch_size},
          {"max_pairs_per_category", max_pairs_per_category},
          {"lr", lr},
          {"patience", patience},
          {"max_epochs", max_epochs},
          {"k", k},
          {"seed", seed},
          {"clip_norm", clip_norm}};
}

RerankerConfig RerankerConfig::from_json(const nlohmann::json& j) {
  RerankerConfig c;
  c.d_tok = j.value("d_tok", c.d_tok);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.aggregation = parse_aggregation(j.value("aggregation", std::string("concat")));
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_pairs_per_category =
      j.value("max_pairs_per_category", c.max_pairs_per_category);
  c.lr = j.value("lr", c.lr);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.k = j.value("k", c.k);
  c.seed = j.value("seed", c.seed);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

namespace {

std::vector<std::size_t> mlp_sizes(std::size_t trace_width,
                                   const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> sizes{2 * trace_width};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

}  // namespace

template <class Real>
RerankerNet<Real>::RerankerNet(std::size_t vocab_size, const RerankerConfig& config)
    : encoder_("reranker", EncoderConfig{vocab_size, config.d_tok,
                                         config.hidden_dim, config.aggregation}),
      significance_("reranker.significance", {encoder_.frame_width()}),
      mlp_("reranker.mlp", mlp_sizes(encoder_.embedding_width(), config.mlp_hidden)) {}

template <class Real>
void RerankerNet<Real>::init(Rng& rng) {
  encoder_.init(rng);
  significance_.value.fill(Real{0});
  mlp_.init(rng);
}

template <class Real>
nn::Var<Real> RerankerNet<Real>::score(nn::Graph<Real>& g, const TokenizedTrace& q,
                                       const TokenizedTrace& k,
                                       FrameMemo<Real>* memo,
                                       FrameCache<Real>* cache) {
  const auto shared = mark_shared_frames(q, k);
  auto v = nn::ops::param(g, significance_);
  auto fq = nn::ops::add_to_rows(encoder_.frame_matrix(g, q, memo, cache), v,
                                 shared.query);
  auto fk = nn::ops::add_to_rows(encoder_.frame_matrix(g, k, memo, cache), v,
                                 shared.candidate);
  const nn::Var<Real> parts[] = {encoder_.encode_frames(fq),
                                 encoder_.encode_frames(fk)};
  return mlp_.forward(nn::ops::concat<Real>(parts));
}

template <class Real>
nn::Var<Real> RerankerNet<Real>::triplet_loss(nn::Graph<Real>& g,
                                              const TokenizedTrace& anchor,
                                              const TokenizedTrace& positive,
                                              const TokenizedTrace& negative,
                                              FrameMemo<Real>* memo) {
  return nn::ops::bce_triplet(score(g, anchor, positive, memo),
                              score(g, anchor, negative, memo));
}

template <class Real>
nn::ParameterList<Real> RerankerNet<Real>::parameters() {
  auto out = encoder_.parameters();
  out.push_back(&significance_);
  for (auto* p : mlp_.parameters()) out.push_back(p);
  return out;
}

template class RerankerNet<float>;
template class RerankerNet<double>;

Decision decide(const std::vector<RankedCandidate>& ranked,
                const std::vector<std::string>& categories, double threshold) {
  if (ranked.empty()) throw std::invalid_argument("decide: no candidates");
  if (categories.size() != ranked.size())
    throw std::invalid_argument("decide: one category per candidate required");
  Decision d;
  d.top_score = ranked.front().score;
  d.attach = d.top_score > threshold;
  if (d.attach) d.category_id = categories.front();
  return d;
}

RerankerModel::RerankerModel(std::size_t vocab_size, const RerankerConfig& config)
    : config_(config), vocab_size_(vocab_size), net_(vocab_size, config) {}

void RerankerModel::init() {
  Rng rng(config_.seed);
  net_.init(rng);
  invalidate_cache();
}

double RerankerModel::score_pair(const TokenizedTrace& q, const TokenizedTrace& k) {
  nn::Graph<float> g(false);
  return net_.score(g, q, k, nullptr, &cache_).value()[0];
}

std::vector<RankedCandidate> RerankerModel::rerank(
    const TokenizedTrace& q,
    const std::vector<std::pair<std::string, const TokenizedTrace*>>& candidates) {
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& [id, trace] : candidates) out.push_back({id, score_pair(q, *trace)});
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     return a.score > b.score;
                   });
  return out;
}

void RerankerModel::save(const std::filesystem::path& path) {
  nn::WeightHeader header;
  header.model_kind = kModelKind;
  header.hyperparameters = config_.to_json();
  header.hyperparameters["vocab_size"] = vocab_size_;
  nn::save_weights<float>(path, header, net_.parameters());
}

RerankerModel RerankerModel::load(const std::filesystem::path& path) {
  const auto header = nn::read_weight_header(path);
  if (header.model_kind != kModelKind)
    throw ArtifactError(path.string() + ": expected model kind '" +
                        std::string(kModelKind) + "', found '" +
                        header.model_kind + "'");
  RerankerConfig config;
  std::size_t vocab_size = 0;
  try {
    config = RerankerConfig::from_json(header.hyperparameters);
    vocab_size = header.hyperparameters.at("vocab_size").get<std::size_t>();
  } catch (const std::exception& e) {
    throw ArtifactError(path.string() + ": bad hyperparameters: " + e.what());
  }
  RerankerModel model(vocab_size, config);
  nn::load_weights<float>(path, kModelKind, model.net().parameters());
  return model;
}

std::vector<Triplet> sample_triplets(const std::vector<StackTrace>& train,
                                     std::size_t max_pairs_per_category,
                                     std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].category_id) members[*train[i].category_id].push_back(i);
  if (members.size() < 2)
    throw DataError("triplet sampling needs at least two categories");
  std::vector<const std::vector<std::size_t>*> cats;
  std::map<std::string, std::size_t> cat_pos;
  for (const auto& [name, idx] : members) {
    cat_pos[name] = cats.size();
    cats.push_back(&idx);
  }
  const auto pairs = sample_training_pairs(train, max_pairs_per_category, seed);
  Rng rng(seed ^ 0x5851f42d4c957f2dULL);
  std::vector<Triplet> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const std::size_t own = cat_pos.at(*train[p.anchor].category_id);
    std::size_t other = rng.below(cats.size() - 1);
    if (other >= own) ++other;
    const auto& pool = *cats[other];
    out.push_back({p.anchor, p.positive, pool[rng.below(pool.size())]});
  }
  return out;
}

namespace {

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(const nn::ParameterList<float>& params) {
  Snapshot s;
  for (auto* p : params) s.push_back(p->value.storage());
  return s;
}

void restore(const nn::ParameterList<float>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.storage() = s[i];
}

// Candidate lists for the retrieval-based validation task.
struct ValidationTask {
  std::vector<std::size_t> queries;                  // validation indices
  std::vector<std::vector<std::size_t>> candidates;  // train indices, rank order
};

ValidationTask build_retrieval_task(const DatasetSplit& split,
                                    const std::vector<TokenizedTrace>& train_tok,
                                    const std::vector<TokenizedTrace>& val_tok,
                                    EmbedderModel& embedder, std::size_t k) {
  ValidationTask task;
  EmbeddingStore store(embedder.dim(), HnswParams{}, false);
  std::vector<std::size_t> store_to_train;
  std::set<std::string> known;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (!split.train[i].category_id) continue;
    store.add(split.train[i].report_id, embedder.embed(train_tok[i]),
              *split.train[i].category_id);
    store_to_train.push_back(i);
    known.insert(*split.train[i].category_id);
  }
  if (store.empty()) return task;
  for (std::size_t i = 0; i < split.validation.size(); ++i) {
    const auto& cat = split.validation[i].category_id;
    if (!cat || !known.count(*cat)) continue;
    std::vector<std::size_t> cands;
    for (const auto& hit : store.exact_search(embedder.embed(val_tok[i]), k))
      cands.push_back(store_to_train[hit.index]);
    task.queries.push_back(i);
    task.candidates.push_back(std::move(cands));
  }
  return task;
}

double retrieval_accuracy(RerankerModel& model, const DatasetSplit& split,
                          const std::vector<TokenizedTrace>& train_tok,
                          const std::vector<TokenizedTrace>& val_tok,
                          const ValidationTask& task) {
  model.invalidate_cache();
  std::size_t correct = 0;
  for (std::size_t q = 0; q < task.queries.size(); ++q) {
    std::vector<std::pair<std::string, const TokenizedTrace*>> cands;
    for (std::size_t t : task.candidates[q])
      cands.emplace_back(std::to_string(t), &train_tok[t]);
    const auto ranked = model.rerank(val_tok[task.queries[q]], cands);
    const std::size_t top = std::stoul(ranked.front().report_id);
    correct += *split.train[top].category_id ==
               *split.validation[task.queries[q]].category_id;
  }
  model.invalidate_cache();
  return static_cast<double>(correct) / static_cast<double>(task.queries.size());
}

// Fraction of triplets ranked correctly and their mean loss.
std::pair<double, double> triplet_metrics(RerankerModel& model,
                                          const std::vector<Triplet>& triplets,
                                          const std::vector<TokenizedTrace>& tok) {
  if (triplets.empty()) return {-1.0, 0.0};
  model.invalidate_cache();
  std::size_t correct = 0;
  double loss = 0.0;
  for (const auto& t : triplets) {
    const double sp = model.score_pair(tok[t.anchor], tok[t.positive]);
    const double sn = model.score_pair(tok[t.anchor], tok[t.negative]);
    correct += sp > sn;
    loss += std::log1p(std::exp(-sp)) + std::log1p(std::exp(sn));
  }
  model.invalidate_cache();
  const double n = static_cast<double>(triplets.size());
  return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace

RerankerTrainResult train_reranker(
    const DatasetSplit& split, const BpeVocab& vocab,
    const TokenizerConfig& tokenizer, const RerankerConfig& config,
    EmbedderModel* embedder,
    const std::function<void(const EpochStats&)>& on_epoch) {
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<TokenizedTrace> train_tok, val_tok;
  for (const auto& t : split.train) train_tok.push_back(encode_trace(t, vocab, tokenizer));
  for (const auto& t : split.validation) val_tok.push_back(encode_trace(t, vocab, tokenizer));

  RerankerTrainResult result{RerankerModel(vocab.size(), config), -1.0, -1.0, 0, {}};
  RerankerModel& model = result.model;
  model.init();
  if (config.max_epochs == 0) return result;

  ValidationTask task;
  if (embedder) task = build_retrieval_task(split, train_tok, val_tok, *embedder, config.k);
  std::vector<Triplet> val_triplets;
  try {
    val_triplets = sample_triplets(split.validation, 10, config.seed + 1);
  } catch (const DataError&) {
    // Too few validation categories; selection then rests on the retrieval
    // task alone, or on nothing.
  }
  // Primary score, then mean validation triplet loss to break ties (the
  // retrieval accuracy saturates quickly on easy data).
  struct Score {
    double primary = -1.0;
    double loss = 0.0;
  };
  auto validate = [&]() {
    const auto [acc, loss] = triplet_metrics(model, val_triplets, val_tok);
    if (task.queries.empty()) return Score{acc, loss};
    return Score{retrieval_accuracy(model, split, train_tok, val_tok, task), loss};
  };
  auto beats = [](const Score& a, const Score& b) {
    return a.primary > b.primary || (a.primary == b.primary && a.loss < b.loss);
  };

  const auto triplets =
      sample_triplets(split.train, config.max_pairs_per_category, config.seed);
  auto params = model.net().parameters();
  nn::Adam<float> adam(params, nn::AdamOptions{config.lr});
  Rng rng(config.seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::size_t> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Score best_score = validate();
  result.initial_validation_score = best_score.primary;
  result.best_validation_score = best_score.primary;
  Snapshot best = snapshot(params);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      nn::Graph<float> g(true);
      FrameMemo<float> memo;
      std::vector<nn::Var<float>> losses;
      for (std::size_t i = b; i < end; ++i) {
        const auto& t = triplets[order[i]];
        losses.push_back(model.net().triplet_loss(g, train_tok[t.anchor],
                                                  train_tok[t.positive],
                                                  train_tok[t.negative], &memo));
      }
      auto loss = nn::ops::mean<float>(losses);
      stats.batch_losses.push_back(loss.value()[0]);
      g.backward(loss);
      if (config.clip_norm > 0) nn::clip_grad_norm(params, config.clip_norm);
      adam.step();
    }
    for (double l : stats.batch_losses) stats.mean_loss += l;
    if (!stats.batch_losses.empty())
      stats.mean_loss /= static_cast<double>(stats.batch_losses.size());
    const Score score = validate();
    stats.validation_score = score.primary;
    stats.improved = score.primary < 0 || beats(score, best_score);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (stats.improved) {
      best_score = score;
      result.best_validation_score = score.primary;
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
