// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>

#include "stackdedup/binary_io.hpp"
#include "stackdedup/errors.hpp"
#include "stackdedup/kernels.hpp"

namespace stackdedup {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'I', 'X'};

bool better(double a_sim, std::size_t a_idx, double b_sim, std::size_t b_idx) {
  return a_sim > b_sim || (a_sim == b_sim && a_idx < b_idx);
}

}  // namespace

std::string to_string(SearchMode mode) {
  switch (mode) {
    case SearchMode::kAuto: return "auto";
    case SearchMode::kExact: return "exact";
    case SearchMode::kAnn: return "ann";
  }
  return "auto";
}

SearchMode parse_search_mode(std::string_view name) {
  if (name == "auto") return SearchMode::kAuto;
  if (name == "exact") return SearchMode::kExact;
  if (name == "ann") return SearchMode::kAnn;
  throw std::invalid_argument("unknown search mode '" + std::string(name) +
                              "' (auto, exact, ann)");
}

std::vector<CategoryScore> category_scores(const std::vector<SearchHit>& hits) {
  // Hits arrive in rank order, so first appearance is the best-ranked hit.
  std::vector<CategoryScore> out;
  std::unordered_map<std::string, std::size_t> where;
  for (const auto& h : hits) {
    auto [it, fresh] = where.emplace(h.category_id, out.size());
    if (fresh)
      out.push_back({h.category_id, h.similarity});
    else
      out[it->second].score = std::max(out[it->second].score, h.similarity);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CategoryScore& a, const CategoryScore& b) {
                     return a.score > b.score;
                   });
  return out;
}

EmbeddingStore::EmbeddingStore(std::size_t dim, HnswParams params,
                               bool build_graph)
    : dim_(dim), params_(params), build_graph_(build_graph),
      level_rng_(params.seed) {
  if (dim == 0) throw std::invalid_argument("index: dim must be positive");
  if (params.m < 2) throw std::invalid_argument("index: M must be at least 2");
  if (params.ef_construction == 0 || params.ef_search == 0)
    throw std::invalid_argument("index: ef parameters must be positive");
}

std::vector<float> EmbeddingStore::normalized(std::span<const float> v) const {
  if (v.size() != dim_)
    throw std::invalid_argument("index: vector width " + std::to_string(v.size()) +
                                ", expected " + std::to_string(dim_));
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::domain_error("index: zero or non-finite vector");
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  return out;
}

void EmbeddingStore::add(const std::string& report_id,
                         std::span<const float> vector,
                         const std::string& category_id) {
  if (positions_.count(report_id))
    throw std::invalid_argument("index: duplicate report id '" + report_id + "'");
  const auto v = normalized(vector);
  positions_.emplace(report_id, ids_.size());
  ids_.push_back(report_id);
  categories_.push_back(category_id);
  vectors_.insert(vectors_.end(), v.begin(), v.end());
  if (build_graph_) link(static_cast<std::uint32_t>(ids_.size() - 1));
}

SearchHit EmbeddingStore::make_hit(std::size_t index, double sim) const {
  return {index, ids_[index], categories_[index], sim};
}

std::vector<SearchHit> EmbeddingStore::exact_search(std::span<const float> query,
                                                    std::size_t k) const {
  if (empty()) throw std::invalid_argument("index: search on an empty store");
  const auto q = normalized(query);
  const std::size_t n = size();
  std::vector<double> scores(n);
  kernels::row_scores(n, dim_, vectors_.data(), q.data(), scores.data());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  k = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return better(scores[a], a, scores[b], b);
                    });
  std::vector<SearchHit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back(make_hit(order[i], scores[order[i]]));
  return hits;
}

float EmbeddingStore::graph_sim(const float* q, std::uint32_t node) const {
  return kernels::dot(dim_, q, vectors_.data() + std::size_t{node} * dim_);
}

std::vector<EmbeddingStore::Candidate> EmbeddingStore::search_layer(
    const float* q, std::vector<std::uint32_t> entries, std::size_t ef,
    std::size_t level) const {
  auto closer = [](const Candidate& a, const Candidate& b) {
    return a.sim < b.sim || (a.sim == b.sim && a.node > b.node);
  };
  auto farther = [&](const Candidate& a, const Candidate& b) {
    return closer(b, a);
  };
  // Frontier pops the most similar first; results keeps the worst on top.
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(closer)> frontier(closer);
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(farther)> results(farther);
  std::vector<char> visited(size(), 0);
  for (auto e : entries) {
    if (visited[e]) continue;
    visited[e] = 1;
    const Candidate c{graph_sim(q, e), e};
    frontier.push(c);
    results.push(c);
  }
  while (results.size() > ef) results.pop();
  while (!frontier.empty()) {
    const Candidate cur = frontier.top();
    frontier.pop();
    if (results.size() >= ef && cur.sim < results.top().sim) break;
    for (std::uint32_t nb : links_[cur.node][level]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate c{graph_sim(q, nb), nb};
      if (results.size() < ef || c.sim > results.top().sim) {
        frontier.push(c);
        results.push(c);
        if (results.size() > ef) results.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Keeps a candidate only if it is closer to the base than to every kept
// neighbor; remaining slots are filled with the best rejected candidates.
std::vector<std::uint32_t> EmbeddingStore::select_neighbors(
    std::vector<Candidate> candidates, std::size_t max_links) const {
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.sim > b.sim || (a.sim == b.sim && a.node < b.node);
            });
  std::vector<std::uint32_t> kept, rejected;
  for (const auto& c : candidates) {
    if (kept.size() >= max_links) break;
    bool diverse = true;
    const float* cv = vectors_.data() + std::size_t{c.node} * dim_;
    for (std::uint32_t r : kept)
      if (graph_sim(cv, r) > c.sim) {
        diverse = false;
        break;
      }
    (diverse ? kept : rejected).push_back(c.node);
  }
  for (std::size_t i = 0; i < rejected.size() && kept.size() < max_links; ++i)
    kept.push_back(rejected[i]);
  return kept;
}

void EmbeddingStore::prune(std::uint32_t node, std::size_t level) {
  auto& list = links_[node][level];
  if (list.size() <= max_links(level)) return;
  const float* base = vectors_.data() + std::size_t{node} * dim_;
  std::vector<Candidate> cands;
  for (auto nb : list) cands.push_back({graph_sim(base, nb), nb});
  auto kept = select_neighbors(cands, max_links(level));
  if (level == 0) {
    std::vector<char> keep_flag(size(), 0);
    for (auto k : kept) keep_flag[k] = 1;
    for (auto nb : list) {
      if (keep_flag[nb]) continue;
      // Never drop the last inbound link of a node: it would become
      // unreachable on the base layer.
      if (in_degree0_[nb] <= 1)
        kept.push_back(nb);
      else
        --in_degree0_[nb];
    }
  }
  list = std::move(kept);
}

void EmbeddingStore::link(std::uint32_t node) {
  const double ml = 1.0 / std::log(static_cast<double>(params_.m));
  double u = 1.0 - level_rng_.uniform();  // (0, 1]
  const auto level = static_cast<std::size_t>(std::floor(-std::log(u) * ml));
  links_.emplace_back(level + 1);
  in_degree0_.push_back(0);
  if (node == 0) {
    entry_ = 0;
    max_level_ = level;
    return;
  }
  const float* q = vectors_.data() + std::size_t{node} * dim_;
  std::uint32_t cur = static_cast<std::uint32_t>(entry_);
  for (std::size_t l = max_level_; l > level; --l) cur = search_layer(q, {cur}, 1, l)[0].node;

  std::vector<std::uint32_t> entries{cur};
  for (std::size_t l = std::min(level, max_level_) + 1; l-- > 0;) {
    auto found = search_layer(q, entries, params_.ef_construction, l);
    auto chosen = select_neighbors(found, params_.m);
    links_[node][l] = chosen;
    for (auto nb : chosen) {
      links_[nb][l].push_back(node);
      if (l == 0) {
        ++in_degree0_[nb];
        ++in_degree0_[node];
      }
    }
    for (auto nb : chosen) prune(nb, l);
    entries.clear();
    for (const auto& c : found) entries.push_back(c.node);
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

std::vector<SearchHit> EmbeddingStore::ann_search(std::span<const float> query,
                                                  std::size_t k,
                                                  std::size_t ef) const {
  if (empty()) throw std::invalid_argument("index: search on an empty store");
  if (!build_graph_) return exact_search(query, k);
  const auto q = normalized(query);
  ef = std::max(ef == 0 ? params_.ef_search : ef, k);
  std::uint32_t cur = static_cast<std::uint32_t>(entry_);
  for (std::size_t l = max_level_; l > 0; --l)
    cur = search_layer(q.data(), {cur}, 1, l)[0].node;
  auto found = search_layer(q.data(), {cur}, ef, 0);

  std::vector<double> exact(found.size());
  for (std::size_t i = 0; i < found.size(); ++i)
    kernels::serial::row_scores(1, dim_, vectors_.data() + std::size_t{found[i].node} * dim_,
                                q.data(), &exact[i]);
  std::vector<std::size_t> order(found.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return better(exact[a], found[a].node, exact[b], found[b].node);
  });
  std::vector<SearchHit> hits;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
    hits.push_back(make_hit(found[order[i]].node, exact[order[i]]));
  return hits;
}

std::vector<SearchHit> EmbeddingStore::search(std::span<const float> query,
                                              std::size_t k,
                                              SearchMode mode) const {
  if (mode == SearchMode::kAuto)
    mode = size() >= kAnnAutoThreshold && build_graph_ ? SearchMode::kAnn
                                                       : SearchMode::kExact;
  return mode == SearchMode::kAnn ? ann_search(query, k) : exact_search(query, k);
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path.string());
  io::BinaryWriter w(out);
  w.bytes(kMagic, 4);
  w.u32(kIndexFormatMajor);
  w.u32(kIndexFormatMinor);
  w.u64(0);  // bytes of minor-version header extensions that follow
  w.u64(dim_);
  w.u64(size());
  w.u64(params_.m);
  w.u64(params_.ef_construction);
  w.u64(params_.ef_search);
  w.u64(params_.seed);
  w.u8(build_graph_ ? 1 : 0);
  w.u64(entry_);
  w.u64(max_level_);
  w.string(level_rng_.state());
  w.f32s(vectors_);
  for (std::size_t i = 0; i < size(); ++i) {
    w.string(ids_[i]);
    w.string(categories_[i]);
  }
  if (build_graph_) {
    for (const auto& levels : links_) {
      w.u32(static_cast<std::uint32_t>(levels.size()));
      for (const auto& list : levels) {
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (auto nb : list) w.u32(nb);
      }
    }
  }
  if (!w.ok()) throw ArtifactError("failed writing " + path.string());
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path.string());
  io::BinaryReader r(in, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic))
    throw ArtifactError(path.string() + ": not an index file");
  const auto major = r.u32();
  r.u32();  // minor: newer minors only append header bytes we skip
  if (major != kIndexFormatMajor)
    throw ArtifactError(path.string() + ": index format major version " +
                        std::to_string(major) + " is not supported (expected " +
                        std::to_string(kIndexFormatMajor) + ")");
  const auto extra = r.u64();
  HnswParams params;
  const auto dim = r.u64();
  const auto count = r.u64();
  params.m = r.u64();
  params.ef_construction = r.u64();
  params.ef_search = r.u64();
  params.seed = r.u64();
  const bool graph = r.u8() != 0;
  const auto entry = r.u64();
  const auto max_level = r.u64();
  const auto rng_state = r.string(1 << 20);
  for (std::uint64_t i = 0; i < extra; ++i) r.u8();
  if (dim == 0 || dim > (1u << 20) || count > (std::uint64_t{1} << 32) ||
      (count > 0 && entry >= count) || max_level > 64)
    throw ArtifactError(path.string() + ": corrupt index header");

  EmbeddingStore store(dim, params, graph);
  store.vectors_.resize(dim * count);
  r.f32s(store.vectors_);
  for (std::uint64_t i = 0; i < count; ++i) {
    store.ids_.push_back(r.string(1 << 16));
    store.categories_.push_back(r.string(1 << 16));
    if (!store.positions_.emplace(store.ids_.back(), i).second)
      throw ArtifactError(path.string() + ": duplicate report id in index");
  }
  if (graph) {
    store.links_.resize(count);
    store.in_degree0_.assign(count, 0);
    for (auto& levels : store.links_) {
      const auto n_levels = r.u32();
      if (n_levels == 0 || n_levels > max_level + 1)
        throw ArtifactError(path.string() + ": corrupt index graph");
      levels.resize(n_levels);
      for (auto& list : levels) {
        const auto n = r.u32();
        if (n > count) throw ArtifactError(path.string() + ": corrupt index graph");
        list.resize(n);
        for (auto& nb : list) {
          nb = r.u32();
          if (nb >= count) throw ArtifactError(path.string() + ": corrupt index graph");
        }
      }
      for (auto nb : levels[0]) ++store.in_degree0_[nb];
    }
  }
  store.entry_ = entry;
  store.max_level_ = max_level;
  store.level_rng_.set_state(rng_state);
  return store;
}

}  // namespace stackdedup
