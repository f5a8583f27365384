// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/adapters.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "stackdedup/errors.hpp"

namespace stackdedup {

namespace {

const nlohmann::json* find_any(const nlohmann::json& obj,
                               std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = obj.find(k);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

std::string id_string(const nlohmann::json& v, const char* field, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw ParseError(field, line, "expected string or integer id");
}

// C/C++ releases use "??" for frames without symbols; they carry no identity.
bool keeps_unknown_frames(DatasetAdapter a) {
  return a != DatasetAdapter::kUbuntu && a != DatasetAdapter::kGnome;
}

std::string frame_text(const nlohmann::json& f) {
  if (f.is_string()) return f.get<std::string>();
  if (!f.is_object()) return {};
  if (const auto* fn = find_any(f, {"function", "name", "method", "frame"}))
    if (fn->is_string()) return fn->get<std::string>();
  return {};
}

void append_frames(const nlohmann::json& stack, DatasetAdapter adapter,
                   std::vector<Frame>& out) {
  const nlohmann::json* frames = &stack;
  if (stack.is_object()) {
    frames = find_any(stack, {"frames", "stack"});
    if (!frames) return;
  }
  if (!frames->is_array()) return;
  for (const auto& f : *frames) {
    // A nested stack object inside a list means chained exceptions.
    if (f.is_object() && f.contains("frames")) {
      append_frames(f, adapter, out);
      continue;
    }
    std::string text = frame_text(f);
    Frame frame(std::move(text));
    if (frame.normalized.empty()) continue;
    if (!keeps_unknown_frames(adapter) && frame.normalized == "??") continue;
    out.push_back(std::move(frame));
  }
}

}  // namespace

DatasetAdapter parse_adapter(std::string_view name) {
  static const std::map<std::string, DatasetAdapter, std::less<>> kNames = {
      {"native", DatasetAdapter::kNative},     {"ubuntu", DatasetAdapter::kUbuntu},
      {"eclipse", DatasetAdapter::kEclipse},   {"netbeans", DatasetAdapter::kNetBeans},
      {"gnome", DatasetAdapter::kGnome}};
  auto it = kNames.find(name);
  if (it == kNames.end()) throw UsageError("unknown adapter '" + std::string(name) + "'");
  return it->second;
}

std::string to_string(DatasetAdapter a) {
  switch (a) {
    case DatasetAdapter::kNative: return "native";
    case DatasetAdapter::kUbuntu: return "ubuntu";
    case DatasetAdapter::kEclipse: return "eclipse";
    case DatasetAdapter::kNetBeans: return "netbeans";
    case DatasetAdapter::kGnome: return "gnome";
  }
  return "?";
}

std::int64_t parse_timestamp_ms(const nlohmann::json& v) {
  if (v.is_number_integer()) {
    const auto t = v.get<std::int64_t>();
    if (t < 0) throw std::invalid_argument("negative timestamp");
    return t < 100'000'000'000LL ? t * 1000 : t;
  }
  if (v.is_number_float()) {
    const double t = v.get<double>();
    if (t < 0) throw std::invalid_argument("negative timestamp");
    return static_cast<std::int64_t>(t < 1e11 ? t * 1000.0 : t);
  }
  if (!v.is_string()) throw std::invalid_argument("expected number or date string");
  const std::string s = v.get<std::string>();
  std::tm tm{};
  int frac_ms = 0;
  std::istringstream is(s);
  char sep = 0;
  is >> std::get_time(&tm, "%Y-%m-%d");
  if (is.fail()) throw std::invalid_argument("bad date '" + s + "'");
  if (is.get(sep) && (sep == 'T' || sep == ' ')) {
    is >> std::get_time(&tm, "%H:%M:%S");
    if (is.fail()) throw std::invalid_argument("bad time in '" + s + "'");
  }
  std::string rest;
  std::getline(is, rest);
  std::size_t pos = 0;
  if (pos < rest.size() && rest[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < rest.size() && std::isdigit(static_cast<unsigned char>(rest[pos]))) {
      if (digits < 3) frac_ms = frac_ms * 10 + (rest[pos] - '0');
      ++digits;
      ++pos;
    }
    for (; digits < 3; ++digits) frac_ms *= 10;
  }
  long offset_s = 0;
  if (pos < rest.size() && (rest[pos] == '+' || rest[pos] == '-')) {
    const int sign = rest[pos] == '-' ? -1 : 1;
    int hh = 0, mm = 0;
    if (std::sscanf(rest.c_str() + pos + 1, "%2d:%2d", &hh, &mm) < 1)
      throw std::invalid_argument("bad offset in '" + s + "'");
    offset_s = sign * (hh * 3600L + mm * 60L);
  }
  const std::time_t t = timegm(&tm) - offset_s;
  if (t < 0) throw std::invalid_argument("timestamp before epoch");
  return static_cast<std::int64_t>(t) * 1000 + frac_ms;
}

BugRecord parse_bug_record(const nlohmann::json& j, DatasetAdapter adapter,
                           std::size_t line) {
  if (!j.is_object()) throw ParseError("record", line, "expected a JSON object");
  BugRecord r;
  const auto* id = find_any(j, {"bug_id", "id", "report_id"});
  if (!id) throw ParseError("bug_id", line, "missing");
  r.trace.report_id = id_string(*id, "bug_id", line);

  const auto* ts = find_any(j, {"creation_ts", "timestamp", "creation_time", "date"});
  if (!ts) throw ParseError("creation_ts", line, "missing");
  try {
    r.trace.timestamp = parse_timestamp_ms(*ts);
  } catch (const std::invalid_argument& e) {
    throw ParseError("creation_ts", line, e.what());
  }

  const auto* stack = find_any(j, {"stacktrace", "stack_trace", "frames"});
  if (!stack) throw ParseError("stacktrace", line, "missing");
  append_frames(*stack, adapter, r.trace.frames);
  if (r.trace.frames.empty()) throw ParseError("stacktrace", line, "no usable frames");

  if (const auto* cat = find_any(j, {"category_id", "group_id"}))
    r.trace.category_id = id_string(*cat, "category_id", line);
  if (const auto* dup = find_any(j, {"dup_id", "duplicate_of"})) {
    r.duplicate_of = id_string(*dup, "dup_id", line);
    if (r.duplicate_of == r.trace.report_id) r.duplicate_of.clear();
  }
  return r;
}

std::vector<StackTrace> resolve_duplicates(std::vector<BugRecord> records) {
  std::unordered_map<std::string, std::string> parent;
  for (const auto& r : records)
    if (!r.duplicate_of.empty()) parent[r.trace.report_id] = r.duplicate_of;

  std::unordered_map<std::string, std::string> root_cache;
  auto root_of = [&](const std::string& start) {
    std::vector<std::string> path;
    std::string cur = start;
    std::string root;
    while (true) {
      if (auto c = root_cache.find(cur); c != root_cache.end()) {
        root = c->second;
        break;
      }
      if (std::find(path.begin(), path.end(), cur) != path.end()) {
        // Cycle: pick its smallest member as the root.
        auto first = std::find(path.begin(), path.end(), cur);
        root = *std::min_element(first, path.end());
        break;
      }
      path.push_back(cur);
      auto p = parent.find(cur);
      if (p == parent.end()) {
        root = cur;
        break;
      }
      cur = p->second;
    }
    for (const auto& n : path) root_cache[n] = root;
    return root;
  };

  std::vector<StackTrace> out;
  out.reserve(records.size());
  for (auto& r : records) {
    if (!r.trace.category_id) r.trace.category_id = root_of(r.trace.report_id);
    out.push_back(std::move(r.trace));
  }
  return out;
}

IngestResult ingest_file(const std::filesystem::path& path, DatasetAdapter adapter,
                         bool strict) {
  IngestResult result;
  auto note = [&](const ParseError& e) {
    if (strict) throw;
    ++result.malformed;
    if (result.errors.size() < 20) result.errors.push_back(e.what());
  };

  if (adapter == DatasetAdapter::kNative) {
    auto loaded = load_reports(path, strict);
    result.reports = std::move(loaded.reports);
    result.malformed = loaded.malformed;
    result.errors = std::move(loaded.errors);
    result.records = result.reports.size() + result.malformed;
    return result;
  }

  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<BugRecord> records;
  // A release is either one JSON array or JSON lines; peek at the first
  // non-space character to tell.
  char first = 0;
  while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {
  }
  in.unget();
  if (first == '[') {
    nlohmann::json all;
    try {
      in >> all;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("document", 1, e.what());
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
      ++result.records;
      try {
        records.push_back(parse_bug_record(all[i], adapter, i + 1));
      } catch (const ParseError& e) {
        note(e);
      }
    }
  } else {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (std::all_of(line.begin(), line.end(),
                      [](unsigned char c) { return std::isspace(c); }))
        continue;
      ++result.records;
      try {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError("record", number, e.what());
        }
        records.push_back(parse_bug_record(j, adapter, number));
      } catch (const ParseError& e) {
        note(e);
      }
    }
  }
  result.reports = resolve_duplicates(std::move(records));
  return result;
}

}  // namespace stackdedup
