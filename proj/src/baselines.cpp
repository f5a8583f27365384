// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace stackdedup {

TfIdfIndex::TfIdfIndex(const std::vector<StackTrace>& corpus) {
  for (const auto& d : corpus) add(d);
}

void TfIdfIndex::add(const StackTrace& document) {
  std::unordered_map<std::string, std::size_t> tf;
  for (const auto& f : document.frames) ++tf[f.normalized];
  const std::size_t doc = tf_.size();
  for (const auto& [frame, count] : tf) {
    ++df_[frame];
    postings_[frame].emplace_back(doc, count);
  }
  tf_.push_back(std::move(tf));
}

std::size_t TfIdfIndex::df(const std::string& frame) const {
  auto it = df_.find(frame);
  return it == df_.end() ? 0 : it->second;
}

double TfIdfIndex::idf(const std::string& frame) const {
  if (tf_.empty()) throw std::logic_error("tf-idf: empty index");
  const double d = static_cast<double>(std::max<std::size_t>(df(frame), 1));
  return std::log(static_cast<double>(tf_.size()) / d);
}

namespace {

std::vector<std::string> distinct_frames(const StackTrace& q) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& f : q.frames)
    if (seen.insert(f.normalized).second) out.push_back(f.normalized);
  return out;
}

double score_against(const TfIdfIndex& idx, const StackTrace& query,
                     const std::unordered_map<std::string, std::size_t>& tf) {
  double total = 0.0;
  for (const auto& f : distinct_frames(query)) {
    auto it = tf.find(f);
    if (it == tf.end()) continue;
    const double w = idx.idf(f);
    total += static_cast<double>(it->second) * w * w;
  }
  return total;
}

}  // namespace

double TfIdfIndex::score(const StackTrace& query, std::size_t doc) const {
  if (tf_.empty()) throw std::logic_error("tf-idf: empty index");
  return score_against(*this, query, tf_.at(doc));
}

double TfIdfIndex::score(const StackTrace& query, const StackTrace& document) const {
  if (tf_.empty()) throw std::logic_error("tf-idf: empty index");
  std::unordered_map<std::string, std::size_t> tf;
  for (const auto& f : document.frames) ++tf[f.normalized];
  return score_against(*this, query, tf);
}

std::vector<std::pair<std::size_t, double>> TfIdfIndex::search(
    const StackTrace& query, std::size_t k) const {
  if (tf_.empty()) throw std::logic_error("tf-idf: empty index");
  std::unordered_map<std::size_t, double> scores;
  for (const auto& f : distinct_frames(query)) {
    auto it = postings_.find(f);
    if (it == postings_.end()) continue;
    const double w = idf(f);
    for (auto [doc, count] : it->second) scores[doc] += static_cast<double>(count) * w * w;
  }
  std::vector<std::pair<std::size_t, double>> out(scores.begin(), scores.end());
  auto order = [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  };
  // Pad with zero-score documents in insertion order.
  for (std::size_t d = 0; d < tf_.size() && out.size() < k; ++d)
    if (!scores.count(d)) out.emplace_back(d, 0.0);
  k = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k),
                    out.end(), order);
  out.resize(k);
  return out;
}

double lerch_score(const StackTrace& q, const StackTrace& d, const TfIdfIndex& idx) {
  return idx.score(q, d);
}

double edit_similarity(std::span<const std::uint32_t> q,
                       std::span<const std::uint32_t> d) {
  const std::size_t n = q.size(), m = d.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (q[i - 1] != d[j - 1] ? 1u : 0u)});
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

double edit_similarity(const StackTrace& q, const StackTrace& d) {
  std::unordered_map<std::string_view, std::uint32_t> ids;
  auto intern = [&ids](const StackTrace& t) {
    std::vector<std::uint32_t> out;
    for (const auto& f : t.frames)
      out.push_back(ids.emplace(f.normalized, static_cast<std::uint32_t>(ids.size()))
                        .first->second);
    return out;
  };
  const auto a = intern(q);
  const auto b = intern(d);
  return edit_similarity(a, b);
}

RemoteEmbedderOptions remote_options_from_environment(RemoteEmbedderOptions base) {
  if (const char* e = std::getenv("REMOTE_EMBED_ENDPOINT")) base.endpoint = e;
  if (const char* k = std::getenv("REMOTE_EMBED_KEY")) base.api_key = k;
  return base;
}

std::string remote_input_text(const StackTrace& trace) {
  std::string out;
  for (std::size_t i = 0; i < trace.frames.size(); ++i) {
    if (i) out += '\n';
    out += trace.frames[i].normalized;
  }
  return out;
}

RemoteEmbedderClient::RemoteEmbedderClient(RemoteEmbedderOptions options)
    : options_(std::move(options)), dim_(options_.expected_dim) {
  if (!options_.endpoint.empty()) {
    const auto scheme_end = options_.endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw RemoteError(RemoteError::Kind::kConfig,
                        "remote embedder: endpoint needs a scheme: " + options_.endpoint);
    const auto path_start = options_.endpoint.find('/', scheme_end + 3);
    scheme_host_ = options_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : options_.endpoint.substr(path_start);
  }
  if (options_.parallelism == 0) options_.parallelism = 1;
  load_cache();
}

std::size_t RemoteEmbedderClient::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::size_t RemoteEmbedderClient::dim() const {
  std::lock_guard lock(mu_);
  return dim_;
}

void RemoteEmbedderClient::load_cache() {
  if (!options_.cache_file || !std::filesystem::exists(*options_.cache_file)) return;
  std::ifstream in(*options_.cache_file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      cache_[ContentHash{j.at("hash").get<std::uint64_t>()}] =
          j.at("vector").get<std::vector<float>>();
    } catch (const nlohmann::json::exception&) {
      // A torn trailing line from an interrupted run; the entry is refetched.
    }
  }
}

void RemoteEmbedderClient::append_cache(ContentHash hash, const std::vector<float>& v) {
  if (!options_.cache_file) return;
  std::ofstream out(*options_.cache_file, std::ios::app);
  out << nlohmann::json{{"hash", hash.digest}, {"vector", v}}.dump() << '\n';
}

std::vector<float> RemoteEmbedderClient::request(const std::string& text) {
  if (options_.offline)
    throw RemoteError(RemoteError::Kind::kOffline,
                      "remote embedder is offline; refusing to send reports");
  if (scheme_host_.empty())
    throw RemoteError(RemoteError::Kind::kConfig, "remote embedder: no endpoint configured");

  httplib::Client client(scheme_host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!options_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  const std::string body =
      nlohmann::json{{"model", options_.model}, {"input", {text}}}.dump();

  auto delay = options_.backoff;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    ++requests_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw RemoteError(RemoteError::Kind::kHttp,
                        "remote embedder: HTTP " + std::to_string(res->status));
    std::vector<float> v;
    try {
      v = nlohmann::json::parse(res->body)
              .at("data")
              .at(0)
              .at("embedding")
              .get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(RemoteError::Kind::kProtocol,
                        std::string("remote embedder: malformed response: ") + e.what());
    }
    {
      std::lock_guard lock(mu_);
      if (dim_ == 0) dim_ = v.size();
      if (v.size() != dim_)
        throw RemoteError(RemoteError::Kind::kDimension,
                          "remote embedder: expected dimension " + std::to_string(dim_) +
                              ", got " + std::to_string(v.size()));
    }
    return v;
  }
  throw RemoteError(last_error.rfind("HTTP", 0) == 0 ? RemoteError::Kind::kHttp
                                                     : RemoteError::Kind::kTransport,
                    "remote embedder: giving up after " +
                        std::to_string(options_.max_retries + 1) +
                        " attempts: " + last_error);
}

std::vector<float> RemoteEmbedderClient::embed(const StackTrace& trace) {
  const auto hash = content_hash(trace);
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(hash);
    if (it != cache_.end()) return it->second;
  }
  auto v = request(remote_input_text(trace));
  std::lock_guard lock(mu_);
  if (cache_.emplace(hash, v).second) append_cache(hash, v);
  return v;
}

std::vector<std::vector<float>> RemoteEmbedderClient::embed_all(
    const std::vector<StackTrace>& traces) {
  std::vector<std::vector<float>> out(traces.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&]() {
    for (std::size_t i = next++; i < traces.size(); i = next++) {
      try {
        out[i] = embed(traces[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = traces.size();
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n = std::min(options_.parallelism, std::max<std::size_t>(traces.size(), 1));
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace stackdedup
