// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Non-neural similarity models: TF-IDF frame scoring after Lerch and Mezini,
// frame-level normalized edit distance, and a client for a remote
// embeddings endpoint.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackdedup/trace_model.hpp"

namespace stackdedup {

// Document frequencies over whole normalized frame strings, plus per-document
// term frequencies and an inverted index for retrieval.
class TfIdfIndex {
 public:
  TfIdfIndex() = default;
  explicit TfIdfIndex(const std::vector<StackTrace>& corpus);

  void add(const StackTrace& document);

  std::size_t size() const { return tf_.size(); }
  std::size_t df(const std::string& frame) const;
  // ln(N / max(df, 1)). Throws std::logic_error on an empty index.
  double idf(const std::string& frame) const;
  const std::unordered_map<std::string, std::size_t>& term_frequencies(
      std::size_t doc) const {
    return tf_.at(doc);
  }

  // Sum over distinct query frames of tf_d(f) * idf(f)^2, for a stored
  // document or an arbitrary one.
  double score(const StackTrace& query, std::size_t doc) const;
  double score(const StackTrace& query, const StackTrace& document) const;

  // The k best stored documents (index, score); ties toward earlier
  // documents. Documents sharing no frame with the query score 0 and only
  // appear when fewer than k documents share a frame.
  std::vector<std::pair<std::size_t, double>> search(const StackTrace& query,
                                                     std::size_t k) const;

  bool operator==(const TfIdfIndex& other) const {
    return df_ == other.df_ && tf_ == other.tf_;
  }

 private:
  std::unordered_map<std::string, std::size_t> df_;
  std::vector<std::unordered_map<std::string, std::size_t>> tf_;
  // frame -> (document, tf)
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>>
      postings_;
};

double lerch_score(const StackTrace& q, const StackTrace& d, const TfIdfIndex& idx);

// 1 - levenshtein(frames) / max(|q|, |d|), comparing normalized frames.
double edit_similarity(const StackTrace& q, const StackTrace& d);
// Same over interned frame ids.
double edit_similarity(std::span<const std::uint32_t> q,
                       std::span<const std::uint32_t> d);

class RemoteError : public std::runtime_error {
 public:
  enum class Kind { kOffline, kConfig, kTransport, kHttp, kProtocol, kDimension };
  RemoteError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct RemoteEmbedderOptions {
  std::string endpoint;  // e.g. http://localhost:8080/v1/embeddings
  std::string api_key;
  std::string model = "text-embedding-3-small";
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failure
  std::size_t expected_dim = 0;            // 0: taken from the first response
  std::size_t parallelism = 4;
  bool offline = true;  // must be cleared explicitly to allow traffic
  std::optional<std::filesystem::path> cache_file;
};

// Fills endpoint and key from REMOTE_EMBED_ENDPOINT / REMOTE_EMBED_KEY when
// those are set.
RemoteEmbedderOptions remote_options_from_environment(
    RemoteEmbedderOptions base = RemoteEmbedderOptions());

// Frames joined by newlines, the request text for one trace.
std::string remote_input_text(const StackTrace& trace);

class RemoteEmbedderClient {
 public:
  explicit RemoteEmbedderClient(RemoteEmbedderOptions options);

  // Thread-safe. Served from the cache when possible.
  std::vector<float> embed(const StackTrace& trace);
  // Embeds many traces with up to options.parallelism requests in flight.
  std::vector<std::vector<float>> embed_all(const std::vector<StackTrace>& traces);

  std::size_t requests_sent() const { return requests_.load(); }
  std::size_t cache_size() const;
  std::size_t dim() const;

 private:
  std::vector<float> request(const std::string& text);
  void load_cache();
  void append_cache(ContentHash hash, const std::vector<float>& v);

  RemoteEmbedderOptions options_;
  std::string scheme_host_;
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<ContentHash, std::vector<float>> cache_;
  std::size_t dim_ = 0;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace stackdedup
