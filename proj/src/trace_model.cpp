// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/trace_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stackdedup/errors.hpp"

namespace stackdedup {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Matches a trailing "(Name.ext:123)".
std::size_t location_suffix_start(std::string_view s) {
  if (s.size() < 5 || s.back() != ')') return std::string_view::npos;
  const std::size_t open = s.rfind('(');
  if (open == std::string_view::npos) return std::string_view::npos;
  const std::string_view inner = s.substr(open + 1, s.size() - open - 2);
  const std::size_t colon = inner.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == inner.size())
    return std::string_view::npos;
  for (char c : inner.substr(colon + 1))
    if (!std::isdigit(static_cast<unsigned char>(c)))
      return std::string_view::npos;
  const std::string_view file = inner.substr(0, colon);
  const std::size_t dot = file.rfind('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == file.size())
    return std::string_view::npos;
  if (file.find_first_of("() \t") != std::string_view::npos)
    return std::string_view::npos;
  return open;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, unsigned char byte) {
  h ^= byte;
  h *= kFnvPrime;
}

}  // namespace

std::string normalize_frame(std::string_view raw) {
  std::string_view s = trim(raw);
  const std::size_t loc = location_suffix_start(s);
  if (loc != std::string_view::npos) s = trim(s.substr(0, loc));
  return std::string(s);
}

Frame::Frame(std::string raw_text)
    : raw(std::move(raw_text)), normalized(normalize_frame(raw)) {}

ContentHash content_hash(const StackTrace& trace) {
  std::uint64_t h = kFnvOffset;
  for (const Frame& f : trace.frames) {
    const std::uint64_t len = f.normalized.size();
    for (int i = 0; i < 8; ++i)
      fnv_mix(h, static_cast<unsigned char>(len >> (8 * i)));
    for (char c : f.normalized) fnv_mix(h, static_cast<unsigned char>(c));
  }
  return ContentHash{h};
}

StackTrace parse_report(std::string_view line, std::size_t line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<record>", line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw ParseError("<record>", line_number, "record is not a JSON object");

  for (const auto& [key, value] : j.items()) {
    if (key != "report_id" && key != "timestamp" && key != "frames" &&
        key != "category_id")
      throw ParseError(key, line_number, "unexpected field");
  }

  StackTrace trace;
  auto id = j.find("report_id");
  if (id == j.end()) throw ParseError("report_id", line_number, "missing");
  if (!id->is_string() || id->get<std::string>().empty())
    throw ParseError("report_id", line_number, "must be a non-empty string");
  trace.report_id = id->get<std::string>();

  auto ts = j.find("timestamp");
  if (ts == j.end()) throw ParseError("timestamp", line_number, "missing");
  if (!ts->is_number_integer())
    throw ParseError("timestamp", line_number, "must be an integer");
  trace.timestamp = ts->get<std::int64_t>();
  if (trace.timestamp < 0)
    throw ParseError("timestamp", line_number, "must be >= 0");

  auto frames = j.find("frames");
  if (frames == j.end()) throw ParseError("frames", line_number, "missing");
  if (!frames->is_array())
    throw ParseError("frames", line_number, "must be an array of strings");
  if (frames->empty()) throw ParseError("frames", line_number, "frames empty");
  trace.frames.reserve(frames->size());
  for (std::size_t i = 0; i < frames->size(); ++i) {
    const auto& f = (*frames)[i];
    if (!f.is_string())
      throw ParseError("frames", line_number,
                       "element " + std::to_string(i) + " is not a string");
    Frame frame(f.get<std::string>());
    if (frame.normalized.empty())
      throw ParseError("frames", line_number,
                       "element " + std::to_string(i) + " is empty");
    trace.frames.push_back(std::move(frame));
  }

  auto cat = j.find("category_id");
  if (cat != j.end() && !cat->is_null()) {
    if (!cat->is_string())
      throw ParseError("category_id", line_number, "must be a string");
    trace.category_id = cat->get<std::string>();
  }
  return trace;
}

std::string serialize_report(const StackTrace& trace) {
  nlohmann::ordered_json j;
  j["report_id"] = trace.report_id;
  j["timestamp"] = trace.timestamp;
  auto frames = nlohmann::ordered_json::array();
  for (const Frame& f : trace.frames) frames.push_back(f.raw);
  j["frames"] = std::move(frames);
  if (trace.category_id) j["category_id"] = *trace.category_id;
  return j.dump();
}

LoadResult load_reports(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  LoadResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      result.reports.push_back(parse_report(line, number));
    } catch (const ParseError& e) {
      if (strict) throw;
      ++result.malformed;
      if (result.errors.size() < 20) result.errors.push_back(e.what());
    }
  }
  return result;
}

void save_reports(const std::filesystem::path& path,
                  const std::vector<StackTrace>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : reports) out << serialize_report(r) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

void sort_by_arrival(std::vector<StackTrace>& reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const StackTrace& a, const StackTrace& b) {
                     if (a.timestamp != b.timestamp)
                       return a.timestamp < b.timestamp;
                     return a.report_id < b.report_id;
                   });
}

SplitSizes split_sizes(std::size_t n, SplitRatios ratios) {
  if (n < 3)
    throw DataError("need at least 3 reports to form train/validation/test, got " +
                    std::to_string(n));
  auto part = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  std::size_t train = std::max<std::size_t>(1, part(ratios.train));
  std::size_t val = std::max<std::size_t>(1, part(ratios.validation));
  while (train + val > n - 1) {
    if (train > 1)
      --train;
    else
      --val;
  }
  return {train, val, n - train - val};
}

DatasetSplit chronological_split(std::vector<StackTrace> reports,
                                 SplitRatios ratios) {
  const SplitSizes sizes = split_sizes(reports.size(), ratios);
  sort_by_arrival(reports);
  DatasetSplit split;
  auto first = std::make_move_iterator(reports.begin());
  split.train.assign(first, first + sizes.train);
  split.validation.assign(first + sizes.train,
                          first + sizes.train + sizes.validation);
  split.test.assign(first + sizes.train + sizes.validation,
                    std::make_move_iterator(reports.end()));
  split.validation_start = split.validation.front().timestamp;
  split.test_start = split.test.front().timestamp;
  return split;
}

}  // namespace stackdedup
