// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Generator for labeled synthetic crash-report datasets.
//
// Frames come from a fixed pool of Java-style method names. A small set of
// "framework" call chains is shared between categories; each category's base
// trace is a prefix of one such chain with a few category-specific frames
// substituted near the top of the stack. Reports are noisy copies of their
// base trace. Timestamps are assigned so that a 70/10/20 chronological split
// puts the requested share of unseen-category reports in the validation and
// test windows.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stackdedup/trace_model.hpp"

namespace stackdedup {

struct SyntheticConfig {
  std::size_t categories = 50;
  std::size_t variants_per_category = 40;
  std::size_t min_length = 20;
  std::size_t max_length = 40;
  std::size_t frame_vocabulary = 500;
  double noise_rate = 0.15;
  // Share of validation and test reports drawn from categories that never
  // occur earlier in the timeline.
  double unseen_fraction = 0.2;
  std::size_t unseen_min_reports = 1;
  std::size_t unseen_max_reports = 3;
  std::size_t framework_frames = 100;
  std::size_t families = 5;
  std::size_t distinctive_min = 1;
  std::size_t distinctive_max = 3;
  std::size_t distinctive_depth = 10;
  std::int64_t start_timestamp = 1'700'000'000'000;
  std::uint64_t seed = 7;
};

// The frame pool: `frame_vocabulary` distinct names, framework frames first.
std::vector<std::string> synthetic_frame_pool(const SyntheticConfig& config);

// Reports in arrival order.
std::vector<StackTrace> generate_synthetic(const SyntheticConfig& config);

}  // namespace stackdedup
