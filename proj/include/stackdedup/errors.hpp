// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace stackdedup {

// Malformed input data (dataset lines, reports). CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Record-level parse failure carrying the offending field and line.
class ParseError : public DataError {
 public:
  ParseError(std::string field, std::size_t line, const std::string& detail)
      : DataError("line " + std::to_string(line) + ": field '" + field +
                  "': " + detail),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

// Missing, corrupt, or version-incompatible artifact files. CLI exit code 3.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or configuration. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stackdedup
