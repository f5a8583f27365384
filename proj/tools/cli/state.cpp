// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/state.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stackdedup/errors.hpp"

namespace stackdedup::cli {

namespace {

nlohmann::json read_header_line(std::istream& in, const fs::path& path,
                                const std::string& format, int version) {
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError(path.string() + ": empty file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ArtifactError(path.string() + ": missing version header");
  }
  if (h.value("format", "") != format)
    throw ArtifactError(path.string() + ": not a " + format + " file");
  if (h.value("version", -1) != version)
    throw ArtifactError(path.string() + ": version " + h.value("version", nlohmann::json()).dump() +
                        " not supported (expected " + std::to_string(version) + ")");
  return h;
}

std::string header_line(const std::string& format, int version) {
  return nlohmann::json{{"format", format}, {"version", version}}.dump() + "\n";
}

}  // namespace

StateLock::StateLock(const StatePaths& paths) {
  fs::create_directories(paths.dir);
  fd_ = ::open(paths.lock().c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw ArtifactError("cannot open lock file " + paths.lock().string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ArtifactError("state directory " + paths.dir.string() +
                        " is in use by another command");
  }
}

StateLock::~StateLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ArtifactError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw ArtifactError(what + " not found at " + path.string());
}

void CategoryStore::add(const std::string& category_id, const std::string& report_id,
                        const std::string& created_by) {
  auto [it, inserted] = positions_.emplace(category_id, records_.size());
  if (inserted) records_.push_back({category_id, {}, created_by});
  records_[it->second].report_ids.push_back(report_id);
}

const CategoryRecord& CategoryStore::at(const std::string& category_id) const {
  return records_.at(positions_.at(category_id));
}

std::size_t CategoryStore::report_count() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.report_ids.size();
  return n;
}

std::string CategoryStore::fresh_id() {
  while (true) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "engine-%06zu", next_fresh_++);
    if (!contains(buf)) return buf;
  }
}

std::string CategoryStore::to_jsonl() const {
  std::string out = header_line("stackdedup-categories", kCategoryStoreVersion);
  for (const auto& r : records_)
    out += nlohmann::json{{"category_id", r.category_id},
                          {"report_ids", r.report_ids},
                          {"created_by", r.created_by}}
               .dump() +
           "\n";
  return out;
}

CategoryStore CategoryStore::load(const fs::path& path) {
  require_file(path, "category store");
  std::ifstream in(path);
  read_header_line(in, path, "stackdedup-categories", kCategoryStoreVersion);
  CategoryStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("category_id").get<std::string>();
      const auto by = j.at("created_by").get<std::string>();
      for (const auto& r : j.at("report_ids")) store.add(id, r.get<std::string>(), by);
    } catch (const nlohmann::json::exception& e) {
      throw ArtifactError(path.string() + ": " + e.what());
    }
  }
  return store;
}

std::string report_store_jsonl(const std::vector<StackTrace>& reports) {
  std::string out = header_line("stackdedup-reports", kReportStoreVersion);
  for (const auto& r : reports) out += serialize_report(r) + "\n";
  return out;
}

std::vector<StackTrace> load_report_store(const fs::path& path) {
  require_file(path, "report store");
  std::ifstream in(path);
  read_header_line(in, path, "stackdedup-reports", kReportStoreVersion);
  std::vector<StackTrace> out;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(parse_report(line, number));
    } catch (const ParseError& e) {
      throw ArtifactError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::string to_json_text(const CalibrationRecord& c) {
  nlohmann::json j{{"format", "stackdedup-calibration"},
                   {"version", kCalibrationVersion},
                   {"pipeline", c.pipeline},
                   {"validation_f1", c.validation_f1}};
  if (std::isinf(c.threshold)) j["threshold"] = c.threshold > 0 ? "inf" : "-inf";
  else j["threshold"] = c.threshold;
  return j.dump(2) + "\n";
}

CalibrationRecord load_calibration(const fs::path& path) {
  require_file(path, "calibration");
  std::ifstream in(path);
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "stackdedup-calibration" ||
        j.value("version", -1) != kCalibrationVersion)
      throw ArtifactError(path.string() + ": unsupported calibration version");
    CalibrationRecord c;
    c.pipeline = j.at("pipeline").get<std::string>();
    c.validation_f1 = j.at("validation_f1").get<double>();
    const auto& t = j.at("threshold");
    if (t.is_string())
      c.threshold = t.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                  : -std::numeric_limits<double>::infinity();
    else
      c.threshold = t.get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(path.string() + ": " + e.what());
  }
}

}  // namespace stackdedup::cli
