// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned weight container:
//
//   "SDDW" | u32 version | string header_json | u32 count |
//   count x (string name | u32 rank | rank x u64 dim | f32[] values)
//
// All integers and floats little-endian. The JSON header carries
// {version, model_kind, hyperparameters}.
#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "stackdedup/nn/tensor.hpp"

namespace stackdedup::nn {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightHeader {
  std::uint32_t version = kWeightFormatVersion;
  std::string model_kind;
  nlohmann::json hyperparameters;
};

template <class Real>
void save_weights(const std::filesystem::path& path, const WeightHeader& header,
                  const ParameterList<Real>& params);

WeightHeader read_weight_header(const std::filesystem::path& path);

// Loads values into `params`, matched by name. Every parameter must be present
// with the same shape; `expected_kind` must match the header.
template <class Real>
WeightHeader load_weights(const std::filesystem::path& path,
                          const std::string& expected_kind,
                          const ParameterList<Real>& params);

}  // namespace stackdedup::nn
