// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Layout and small artifacts of a state directory.
#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackdedup/trace_model.hpp"

namespace stackdedup::cli {

namespace fs = std::filesystem;

struct StatePaths {
  fs::path dir;

  fs::path dataset() const { return dir / "dataset.jsonl"; }
  fs::path config() const { return dir / "config.ini"; }
  fs::path vocab() const { return dir / "vocab.json"; }
  fs::path embedder() const { return dir / "embedder.sdw"; }
  fs::path reranker() const { return dir / "reranker.sdw"; }
  fs::path index() const { return dir / "index.sdix"; }
  fs::path categories() const { return dir / "categories.jsonl"; }
  fs::path reports() const { return dir / "reports.jsonl"; }
  fs::path calibration() const { return dir / "calibration.json"; }
  fs::path eval_dir() const { return dir / "eval"; }
  fs::path remote_cache() const { return dir / "remote_cache.jsonl"; }
  fs::path lock() const { return dir / ".lock"; }
  fs::path staging() const { return dir / ".staging"; }
};

// Exclusive advisory lock on <dir>/.lock, held for the object's lifetime.
// Throws ArtifactError when another process holds it.
class StateLock {
 public:
  explicit StateLock(const StatePaths& paths);
  ~StateLock();
  StateLock(const StateLock&) = delete;
  StateLock& operator=(const StateLock&) = delete;

 private:
  int fd_ = -1;
};

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& content);

// Throws ArtifactError naming the path when it is missing.
void require_file(const fs::path& path, const std::string& what);

inline constexpr int kCategoryStoreVersion = 1;
inline constexpr int kReportStoreVersion = 1;
inline constexpr int kCalibrationVersion = 1;

struct CategoryRecord {
  std::string category_id;
  std::vector<std::string> report_ids;
  std::string created_by;  // "human" or "engine"
};

class CategoryStore {
 public:
  void add(const std::string& category_id, const std::string& report_id,
           const std::string& created_by);
  bool contains(const std::string& category_id) const {
    return positions_.count(category_id) > 0;
  }
  const CategoryRecord& at(const std::string& category_id) const;
  const std::vector<CategoryRecord>& records() const { return records_; }
  std::size_t report_count() const;

  // An "engine-NNNNNN" id not yet in the store.
  std::string fresh_id();

  std::string to_jsonl() const;
  static CategoryStore load(const fs::path& path);

 private:
  std::vector<CategoryRecord> records_;
  std::unordered_map<std::string, std::size_t> positions_;
  std::size_t next_fresh_ = 1;
};

// The reports behind the index: a version header line, then native records.
std::string report_store_jsonl(const std::vector<StackTrace>& reports);
std::vector<StackTrace> load_report_store(const fs::path& path);

struct CalibrationRecord {
  std::string pipeline;
  double threshold = 0.0;
  double validation_f1 = 0.0;
};

std::string to_json_text(const CalibrationRecord& c);
CalibrationRecord load_calibration(const fs::path& path);

}  // namespace stackdedup::cli
