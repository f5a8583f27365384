// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "stackdedup/errors.hpp"

namespace stackdedup {

namespace {

bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)); }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)); }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }
bool is_separator(char c) {
  return c == '.' || c == '_' || c == ':' ||
         std::isspace(static_cast<unsigned char>(c));
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void split_camel(std::string_view seg, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < seg.size(); ++i) {
    const char prev = seg[i - 1];
    const char cur = seg[i];
    bool boundary = false;
    if (is_upper(cur)) {
      if (is_lower(prev) || is_digit(prev)) boundary = true;
      // End of an uppercase run: the last capital starts the next word.
      else if (is_upper(prev) && i + 1 < seg.size() && is_lower(seg[i + 1]))
        boundary = true;
    }
    if (boundary) {
      out.push_back(lowercase(seg.substr(start, i - start)));
      start = i;
    }
  }
  if (start < seg.size()) out.push_back(lowercase(seg.substr(start)));
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

struct PairHash {
  std::size_t operator()(const std::pair<int, int>& p) const noexcept {
    return std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) |
        static_cast<std::uint32_t>(p.second));
  }
};

}  // namespace

std::vector<std::string> split_frame(std::string_view normalized) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= normalized.size(); ++i) {
    if (i == normalized.size() || is_separator(normalized[i])) {
      if (i > start) split_camel(normalized.substr(start, i - start), pieces);
      start = i + 1;
    }
  }
  return pieces;
}

std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t n = utf8_length(static_cast<unsigned char>(s[i]));
    if (i + n > s.size()) n = 1;
    for (std::size_t k = 1; k < n; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        n = 1;
        break;
      }
    out.emplace_back(s.substr(i, n));
    i += n;
  }
  return out;
}

BpeVocab::BpeVocab() {
  add_symbol("<pad>");
  add_symbol("<unk>");
}

void BpeVocab::add_symbol(const std::string& s) {
  ids_.emplace(s, static_cast<TokenId>(symbols_.size()));
  symbols_.push_back(s);
}

std::optional<TokenId> BpeVocab::id(std::string_view symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void BpeVocab::index_merges() {
  merge_table_.clear();
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [l, r] = merges_[rank];
    auto li = id(l), ri = id(r), mi = id(l + r);
    if (!li || !ri || !mi)
      throw ArtifactError("vocab: merge (" + l + ", " + r +
                          ") references unknown symbols");
    merge_table_.emplace(std::make_pair(*li, *ri), std::make_pair(rank, *mi));
  }
}

BpeVocab BpeVocab::train(const std::vector<StackTrace>& corpus,
                         std::size_t vocab_size) {
  if (corpus.empty()) throw DataError("BPE training corpus is empty");
  std::map<std::string, std::size_t> pieces;
  for (const auto& trace : corpus)
    for (const auto& frame : trace.frames)
      for (auto& piece : split_frame(frame.normalized)) ++pieces[piece];
  return train_on_pieces(pieces, vocab_size);
}

BpeVocab BpeVocab::train_on_pieces(
    const std::map<std::string, std::size_t>& pieces, std::size_t vocab_size) {
  constexpr std::size_t kReserved = 2;
  if (vocab_size < 256 + kReserved)
    throw std::invalid_argument("vocab_size must be at least " +
                                std::to_string(256 + kReserved));
  if (pieces.empty()) throw DataError("BPE training corpus has no frame pieces");

  BpeVocab vocab;
  // Alphabet in sorted order so ids do not depend on corpus order.
  std::set<std::string> alphabet;
  std::vector<std::vector<std::string>> split_words;
  split_words.reserve(pieces.size());
  for (const auto& [piece, count] : pieces) {
    split_words.push_back(utf8_chars(piece));
    alphabet.insert(split_words.back().begin(), split_words.back().end());
  }
  if (alphabet.size() + kReserved > vocab_size)
    throw std::invalid_argument(
        "vocab_size " + std::to_string(vocab_size) +
        " is smaller than the training alphabet (" +
        std::to_string(alphabet.size()) + " characters + reserved)");
  for (const auto& ch : alphabet) vocab.add_symbol(ch);

  struct Word {
    std::vector<int> syms;
    long freq;
  };
  std::vector<Word> words;
  words.reserve(pieces.size());
  {
    std::size_t w = 0;
    for (const auto& [piece, count] : pieces) {
      Word word{{}, static_cast<long>(count)};
      for (const auto& ch : split_words[w]) word.syms.push_back(*vocab.id(ch));
      words.push_back(std::move(word));
      ++w;
    }
  }

  using Pair = std::pair<int, int>;
  std::unordered_map<Pair, long, PairHash> counts;
  std::unordered_map<Pair, std::unordered_set<int>, PairHash> where;
  // Ordered by count desc, then (left, right) symbol strings asc.
  auto cmp = [&vocab](const std::pair<long, Pair>& a,
                      const std::pair<long, Pair>& b) {
    if (a.first != b.first) return a.first > b.first;
    const auto& al = vocab.symbols_[a.second.first];
    const auto& bl = vocab.symbols_[b.second.first];
    if (al != bl) return al < bl;
    const auto& ar = vocab.symbols_[a.second.second];
    const auto& br = vocab.symbols_[b.second.second];
    if (ar != br) return ar < br;
    return a.second < b.second;
  };
  std::set<std::pair<long, Pair>, decltype(cmp)> queue(cmp);

  auto adjust = [&](const Pair& p, long delta) {
    long& c = counts[p];
    if (c > 0) queue.erase({c, p});
    c += delta;
    if (c > 0) queue.insert({c, p});
  };
  auto account = [&](int w, long sign) {
    const Word& word = words[w];
    for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
      const Pair p{word.syms[i], word.syms[i + 1]};
      adjust(p, sign * word.freq);
      if (sign > 0) where[p].insert(w);
    }
  };
  for (int w = 0; w < static_cast<int>(words.size()); ++w) account(w, +1);

  while (vocab.size() < vocab_size && !queue.empty()) {
    const auto [best_count, best] = *queue.begin();
    if (best_count < 2) break;
    const std::string merged =
        vocab.symbols_[best.first] + vocab.symbols_[best.second];
    vocab.merges_.emplace_back(vocab.symbols_[best.first],
                               vocab.symbols_[best.second]);
    int merged_id;
    if (auto existing = vocab.id(merged)) {
      merged_id = *existing;
    } else {
      vocab.add_symbol(merged);
      merged_id = static_cast<int>(vocab.size() - 1);
    }
    const std::vector<int> affected(where[best].begin(), where[best].end());
    where.erase(best);
    for (int w : affected) {
      account(w, -1);
      auto& syms = words[w].syms;
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first &&
            syms[i + 1] == best.second) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      account(w, +1);
    }
  }
  vocab.index_merges();
  return vocab;
}

std::vector<TokenId> BpeVocab::encode_piece(std::string_view piece) const {
  std::vector<TokenId> syms;
  for (const auto& ch : utf8_chars(piece)) {
    auto it = ids_.find(ch);
    syms.push_back(it == ids_.end() ? kUnkId : it->second);
  }
  while (syms.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    std::pair<TokenId, TokenId> best_pair{};
    TokenId best_id = kUnkId;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_table_.find({syms[i], syms[i + 1]});
      if (it != merge_table_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_pair = it->first;
        best_id = it->second.second;
      }
    }
    if (best_rank == SIZE_MAX) break;
    std::vector<TokenId> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i + 1 < syms.size() && syms[i] == best_pair.first &&
          syms[i + 1] == best_pair.second) {
        next.push_back(best_id);
        ++i;
      } else {
        next.push_back(syms[i]);
      }
    }
    syms = std::move(next);
  }
  return syms;
}

std::vector<TokenId> BpeVocab::encode_frame(const Frame& frame,
                                            std::size_t max_tokens) const {
  std::vector<TokenId> out;
  for (const auto& piece : split_frame(frame.normalized)) {
    for (TokenId t : encode_piece(piece)) {
      if (out.size() >= max_tokens) return out;
      out.push_back(t);
    }
  }
  if (out.empty()) out.push_back(kUnkId);
  return out;
}

nlohmann::json BpeVocab::to_json() const {
  nlohmann::json j;
  j["version"] = kVocabFormatVersion;
  j["vocab_size"] = symbols_.size();
  auto merges = nlohmann::json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  j["merges"] = std::move(merges);
  nlohmann::json tokens = nlohmann::json::object();
  for (std::size_t i = 0; i < symbols_.size(); ++i) tokens[symbols_[i]] = i;
  j["tokens"] = std::move(tokens);
  return j;
}

BpeVocab BpeVocab::from_json(const nlohmann::json& j) {
  try {
    const auto version = j.at("version").get<std::uint32_t>();
    if (version != kVocabFormatVersion)
      throw ArtifactError("vocab: unsupported version " + std::to_string(version));
    const auto size = j.at("vocab_size").get<std::size_t>();
    std::vector<std::string> symbols(size);
    std::vector<bool> filled(size, false);
    for (const auto& [symbol, id_json] : j.at("tokens").items()) {
      const auto id = id_json.get<std::size_t>();
      if (id >= size || filled[id])
        throw ArtifactError("vocab: token ids are not dense");
      symbols[id] = symbol;
      filled[id] = true;
    }
    if (std::find(filled.begin(), filled.end(), false) != filled.end())
      throw ArtifactError("vocab: token ids are not dense");
    if (size < 2 || symbols[kPadId] != "<pad>" || symbols[kUnkId] != "<unk>")
      throw ArtifactError("vocab: reserved ids missing");
    BpeVocab vocab;
    vocab.symbols_.clear();
    vocab.ids_.clear();
    for (const auto& s : symbols) vocab.add_symbol(s);
    for (const auto& m : j.at("merges"))
      vocab.merges_.emplace_back(m.at(0).get<std::string>(),
                                 m.at(1).get<std::string>());
    vocab.index_merges();
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("vocab: malformed file: ") + e.what());
  }
}

void BpeVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

BpeVocab BpeVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

TokenizedTrace encode_trace(const StackTrace& trace, const BpeVocab& vocab,
                            std::size_t max_frames,
                            std::size_t max_tokens_per_frame) {
  TokenizedTrace out;
  const std::size_t n = std::min(trace.frames.size(), max_frames);
  out.frames.reserve(n);
  out.frame_keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.frames.push_back(vocab.encode_frame(trace.frames[i], max_tokens_per_frame));
    out.frame_keys.push_back(trace.frames[i].normalized);
  }
  return out;
}

}  // namespace stackdedup
