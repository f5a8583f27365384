// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Append-only store of L2-normalized trace embeddings with exhaustive and
// graph-based approximate (hierarchical navigable small world) top-K search.
//
// Not internally synchronized: any number of concurrent searches, or one
// writer, at a time.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackdedup/rng.hpp"

namespace stackdedup {

inline constexpr std::uint32_t kIndexFormatMajor = 1;
inline constexpr std::uint32_t kIndexFormatMinor = 0;

// Entry count from which SearchMode::kAuto switches to the graph.
inline constexpr std::size_t kAnnAutoThreshold = 50'000;

struct HnswParams {
  std::size_t m = 16;  // layer 0 keeps up to 2m links
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  std::uint64_t seed = 42;
};

enum class SearchMode { kAuto, kExact, kAnn };

std::string to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view name);

struct SearchHit {
  std::size_t index = 0;  // insertion position
  std::string report_id;
  std::string category_id;
  double similarity = 0.0;
};

struct CategoryScore {
  std::string category_id;
  double score = 0.0;
};

// Per category the best similarity among `hits` (taken in rank order);
// sorted descending, ties by the rank of each category's best hit.
std::vector<CategoryScore> category_scores(const std::vector<SearchHit>& hits);

class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim, HnswParams params = {},
                          bool build_graph = true);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const HnswParams& params() const { return params_; }
  bool has_graph() const { return build_graph_; }

  // Throws std::invalid_argument on a duplicate id or a width mismatch and
  // std::domain_error on a zero vector.
  void add(const std::string& report_id, std::span<const float> vector,
           const std::string& category_id);

  bool contains(const std::string& report_id) const {
    return positions_.count(report_id) > 0;
  }
  const std::string& report_id(std::size_t i) const { return ids_.at(i); }
  const std::string& category(std::size_t i) const { return categories_.at(i); }
  std::span<const float> vector(std::size_t i) const {
    return {vectors_.data() + i * dim_, dim_};
  }

  // Exhaustive cosine scan. Ties break toward earlier insertion.
  std::vector<SearchHit> exact_search(std::span<const float> query,
                                      std::size_t k) const;
  // Layered greedy search; ef = 0 means params().ef_search. Similarities are
  // recomputed exactly as in exact_search.
  std::vector<SearchHit> ann_search(std::span<const float> query, std::size_t k,
                                    std::size_t ef = 0) const;
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                SearchMode mode = SearchMode::kAuto) const;

  // Graph introspection for tests.
  std::size_t max_level() const { return max_level_; }
  std::size_t entry_point() const { return entry_; }
  const std::vector<std::uint32_t>& neighbors(std::size_t node,
                                              std::size_t level) const {
    return links_.at(node).at(level);
  }
  std::size_t node_level(std::size_t node) const {
    return links_.at(node).size() - 1;
  }

  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

 private:
  struct Candidate {
    float sim;
    std::uint32_t node;
  };

  std::vector<float> normalized(std::span<const float> v) const;
  float graph_sim(const float* q, std::uint32_t node) const;
  std::vector<Candidate> search_layer(const float* q,
                                      std::vector<std::uint32_t> entries,
                                      std::size_t ef, std::size_t level) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates,
                                              std::size_t max_links) const;
  void link(std::uint32_t node);
  void prune(std::uint32_t node, std::size_t level);
  std::size_t max_links(std::size_t level) const {
    return level == 0 ? 2 * params_.m : params_.m;
  }
  SearchHit make_hit(std::size_t index, double sim) const;

  std::size_t dim_;
  HnswParams params_;
  bool build_graph_;
  std::vector<float> vectors_;
  std::vector<std::string> ids_;
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::size_t> positions_;

  // links_[node][level] -> neighbor list
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::vector<std::uint32_t> in_degree0_;  // inbound links on layer 0
  std::size_t entry_ = 0;
  std::size_t max_level_ = 0;
  Rng level_rng_;
};

}  // namespace stackdedup
