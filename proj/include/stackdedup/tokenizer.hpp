// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Frame splitting and a character-level byte-pair encoding trained on the
// frames of a training corpus.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stackdedup/trace_model.hpp"

namespace stackdedup {

using TokenId = std::int32_t;
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::uint32_t kVocabFormatVersion = 1;

// Splits a normalized frame into lowercase sub-identifiers: separators are
// '.', '_', ':' and whitespace; each segment is then cut at camelCase
// boundaries ("HTTPServer" -> http, server; digits stay with the piece
// they follow).
std::vector<std::string> split_frame(std::string_view normalized);

// UTF-8 code points of `s` as separate strings; stray bytes stay single.
std::vector<std::string> utf8_chars(std::string_view s);

class BpeVocab {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeVocab();

  // Trains on the split pieces of every frame in `corpus`. Merges the most
  // frequent adjacent pair (ties: lexicographically smallest) until
  // `vocab_size` symbols exist or no pair occurs twice.
  static BpeVocab train(const std::vector<StackTrace>& corpus,
                        std::size_t vocab_size);
  static BpeVocab train_on_pieces(const std::map<std::string, std::size_t>& pieces,
                                  std::size_t vocab_size);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& symbol(TokenId id) const { return symbols_.at(id); }
  std::optional<TokenId> id(std::string_view symbol) const;

  // Applies merges in training order; unknown characters map to UNK.
  std::vector<TokenId> encode_piece(std::string_view piece) const;
  std::vector<TokenId> encode_frame(const Frame& frame,
                                    std::size_t max_tokens) const;

  nlohmann::json to_json() const;
  static BpeVocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static BpeVocab load(const std::filesystem::path& path);

 private:
  void add_symbol(const std::string& s);
  void index_merges();

  std::vector<std::string> symbols_;
  std::map<std::string, TokenId, std::less<>> ids_;
  std::vector<Merge> merges_;
  // (left id, right id) -> (rank, merged id)
  std::map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>>
      merge_table_;
};

struct TokenizedTrace {
  std::vector<std::vector<TokenId>> frames;
  std::vector<std::string> frame_keys;  // normalized frame strings
};

struct TokenizerConfig {
  std::size_t vocab_size = 10000;
  std::size_t max_frames = 128;
  std::size_t max_tokens_per_frame = 32;
};

TokenizedTrace encode_trace(const StackTrace& trace, const BpeVocab& vocab,
                            std::size_t max_frames,
                            std::size_t max_tokens_per_frame);

inline TokenizedTrace encode_trace(const StackTrace& trace,
                                   const BpeVocab& vocab,
                                   const TokenizerConfig& config) {
  return encode_trace(trace, vocab, config.max_frames,
                      config.max_tokens_per_frame);
}

}  // namespace stackdedup
