// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Converters from the public crash-report dataset releases into StackTrace.
//
// The Ubuntu, Eclipse, NetBeans and Gnome releases share one JSON layout: a
// top-level array (or JSON lines) of bug records
//
//   {"bug_id": 17, "creation_ts": 1262304000, "dup_id": 12,
//    "stacktrace": {"exception": [...], "frames": [{"function": "..."}, ...]}}
//
// where "stacktrace" may also be a list of such objects (chained exceptions,
// concatenated in order) and "dup_id" points at the report this one
// duplicates. Categories are the roots of the dup_id chains. Field aliases
// seen across releases are accepted (see the .cpp).
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stackdedup/trace_model.hpp"

namespace stackdedup {

enum class DatasetAdapter { kNative, kUbuntu, kEclipse, kNetBeans, kGnome };

DatasetAdapter parse_adapter(std::string_view name);  // throws UsageError
std::string to_string(DatasetAdapter adapter);

// One bug record before category resolution.
struct BugRecord {
  StackTrace trace;
  std::string duplicate_of;  // empty when the report starts its own group
};

// Throws ParseError naming the field.
BugRecord parse_bug_record(const nlohmann::json& record, DatasetAdapter adapter,
                           std::size_t line_number);

// Resolves dup_id chains; a chain ending at an id outside the set still
// names its category by that id. Cycles collapse onto the smallest member.
std::vector<StackTrace> resolve_duplicates(std::vector<BugRecord> records);

struct IngestResult {
  std::vector<StackTrace> reports;
  std::size_t records = 0;  // well-formed plus malformed
  std::size_t malformed = 0;
  std::vector<std::string> errors;  // first few messages
};

IngestResult ingest_file(const std::filesystem::path& path, DatasetAdapter adapter,
                         bool strict);

// Timestamp field to milliseconds: integers below 1e11 are seconds, larger
// ones already milliseconds; strings are "YYYY-MM-DD[ T]HH:MM:SS" in UTC,
// optionally followed by fractional seconds and a "Z" or "+HH:MM" offset.
std::int64_t parse_timestamp_ms(const nlohmann::json& value);

}  // namespace stackdedup
