// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Core report types, the native JSON-lines dataset format, content hashing,
// and chronological dataset splitting.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stackdedup {

struct Frame {
  std::string raw;
  std::string normalized;

  Frame() = default;
  explicit Frame(std::string raw_text);

  bool operator==(const Frame&) const = default;
};

// Strips surrounding whitespace and a trailing "(File.ext:line)" location.
std::string normalize_frame(std::string_view raw);

struct StackTrace {
  std::string report_id;
  std::int64_t timestamp = 0;  // milliseconds since epoch
  std::vector<Frame> frames;   // top of stack first
  std::optional<std::string> category_id;

  bool operator==(const StackTrace&) const = default;
};

struct ContentHash {
  std::uint64_t digest = 0;
  auto operator<=>(const ContentHash&) const = default;
};

// FNV-1a over the length-prefixed normalized frame strings, in order.
ContentHash content_hash(const StackTrace& trace);

// Parses one native-format line. `line_number` is echoed in errors.
StackTrace parse_report(std::string_view line, std::size_t line_number = 1);

// Serializes to one native-format line (no trailing newline).
std::string serialize_report(const StackTrace& trace);

struct LoadResult {
  std::vector<StackTrace> reports;
  std::size_t malformed = 0;
  std::vector<std::string> errors;  // first few messages
};

// Reads a native JSON-lines file. Strict mode throws on the first malformed
// line; otherwise malformed lines are counted and skipped. Blank lines are
// ignored.
LoadResult load_reports(const std::filesystem::path& path, bool strict);
void save_reports(const std::filesystem::path& path,
                  const std::vector<StackTrace>& reports);

struct DatasetSplit {
  std::vector<StackTrace> train;
  std::vector<StackTrace> validation;
  std::vector<StackTrace> test;
  // Timestamps of the first validation and first test report.
  std::int64_t validation_start = 0;
  std::int64_t test_start = 0;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

// Sizes of the three parts for n reports: floor for train and validation,
// remainder to test, each forced non-empty.
struct SplitSizes {
  std::size_t train, validation, test;
};
SplitSizes split_sizes(std::size_t n, SplitRatios ratios = {});

// Stable sort by (timestamp, report_id), then contiguous assignment.
DatasetSplit chronological_split(std::vector<StackTrace> reports,
                                 SplitRatios ratios = {});

// Orders reports by arrival (timestamp, then report_id).
void sort_by_arrival(std::vector<StackTrace>& reports);

}  // namespace stackdedup

template <>
struct std::hash<stackdedup::ContentHash> {
  std::size_t operator()(const stackdedup::ContentHash& h) const noexcept {
    return static_cast<std::size_t>(h.digest);
  }
};
