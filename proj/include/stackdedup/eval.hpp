// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Chronological replay of a test segment through a similarity pipeline and
// the metrics computed over the resulting events.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stackdedup/pipeline.hpp"
#include "stackdedup/trace_model.hpp"

namespace stackdedup {

struct EvalEvent {
  std::string report_id;
  std::string true_category;
  bool truth_new = false;  // category absent from the state at arrival
  bool skipped = false;    // identical content already seen
  std::optional<std::vector<CategoryScore>> prediction;  // absent iff no history
  double retrieval_ms = 0.0;
  double rerank_ms = 0.0;

  // Top-1 score; -inf when there is no prediction at all.
  double top_score() const;
  // Top-1 category, empty when there is no prediction.
  std::string top_category() const;
};

// Feeds `history` into a freshly reset pipeline (untimed), then processes
// `queries` in arrival order with ground-truth state updates.
std::vector<EvalEvent> replay(SimilarityPipeline& pipeline,
                              const std::vector<StackTrace>& history,
                              std::vector<StackTrace> queries);

// Test segment against train + validation.
std::vector<EvalEvent> replay_test(SimilarityPipeline& pipeline, const DatasetSplit& split);
// Validation segment against train only, for threshold calibration.
std::vector<EvalEvent> replay_validation(SimilarityPipeline& pipeline,
                                         const DatasetSplit& split);

std::optional<double> acc_at_1(std::span<const EvalEvent> events);

// Rank statistic over top-1 scores; attach is the positive ordering class.
// Throws std::invalid_argument when either class is missing.
double roc_auc(std::span<const double> scores, std::span<const char> is_new);
double roc_auc_new_category(std::span<const EvalEvent> events);

struct Calibration {
  double threshold = 0.0;
  double f1 = 0.0;
};

// An event is predicted new when its top score is <= threshold.
double f1_new_category(std::span<const double> scores, std::span<const char> is_new,
                       double threshold);
double f1_new_category(std::span<const EvalEvent> events, double threshold);

Calibration calibrate_threshold(std::span<const double> scores,
                                std::span<const char> is_new);
Calibration calibrate_threshold(std::span<const EvalEvent> events);

struct StageStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double stddev_ms = 0.0;
};

StageStats stage_stats(std::vector<double> samples_ms);

struct LatencyStats {
  StageStats retrieval;
  StageStats rerank;
  StageStats total;
  std::size_t queries = 0;
};

struct LatencyOptions {
  std::size_t warmup = 10;
  // Run the kernels serially and pin the thread to one core while timing.
  bool single_thread = true;
};

// Times queries against a store prebuilt from `history`. Every query is
// ranked against the same history (no state updates), so each is comparable.
LatencyStats measure_latency(SimilarityPipeline& pipeline,
                             const std::vector<StackTrace>& history,
                             const std::vector<StackTrace>& queries,
                             LatencyOptions options = {});

// Same, on a pipeline whose history is already loaded.
LatencyStats measure_latency(SimilarityPipeline& pipeline,
                             const std::vector<StackTrace>& queries,
                             LatencyOptions options = {});

// Latency over non-skipped events, dropping the first `warmup` of them.
LatencyStats latency_from_events(std::span<const EvalEvent> events, std::size_t warmup);

struct EventCounts {
  std::size_t attached = 0;
  std::size_t new_category = 0;
  std::size_t skipped = 0;
};

EventCounts count_events(std::span<const EvalEvent> events);

struct MetricsReport {
  std::string pipeline;
  std::optional<double> acc_at_1;
  std::optional<double> roc_auc;
  // Absent when the validation events hold a single class.
  std::optional<Calibration> calibration;
  std::optional<double> f1_at_threshold;  // on the test events
  LatencyStats latency;
  EventCounts counts;
};

// Calibrates on validation against train, then replays the test segment.
MetricsReport evaluate(SimilarityPipeline& pipeline, const DatasetSplit& split,
                       std::size_t latency_warmup = 10,
                       std::vector<EvalEvent>* test_events = nullptr);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const EvalEvent& event);

// Aligned plain-text table with one row per pipeline.
std::string format_table(std::span<const MetricsReport> reports,
                         const std::string& dataset = "");

void write_events(std::ostream& out, std::span<const EvalEvent> events);

}  // namespace stackdedup
