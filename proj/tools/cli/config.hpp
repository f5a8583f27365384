// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Every tunable of the pipeline, bindable to command-line flags and to a
// key = value config file with the same names.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stackdedup/embedder.hpp"
#include "stackdedup/index.hpp"
#include "stackdedup/reranker.hpp"
#include "stackdedup/tokenizer.hpp"

namespace stackdedup::cli {

inline constexpr int kConfigFormatVersion = 1;

struct PipelineConfig {
  int format_version = kConfigFormatVersion;
  TokenizerConfig tokenizer;
  EmbedderConfig embedder;
  RerankerConfig reranker;
  HnswParams hnsw;
  bool use_reranker = true;
  std::size_t k = 10;
  std::string embedder_aggregation = "concat";
  std::string reranker_aggregation = "concat";
  std::string search_mode = "auto";
  std::string eval_pipelines = "embedder,reranked,lerch,edit";
  std::size_t latency_warmup = 10;
  int threads = 0;  // 0 keeps the OpenMP default
  std::string kernels = "openmp";

  // Parses the string-valued fields into the typed configs and checks
  // ranges. Throws UsageError.
  void finalize();
  SearchMode mode() const { return parse_search_mode(search_mode); }
  std::vector<std::string> pipelines() const;
};

// Adds one option per field. Options are bound to `cfg`, so values already
// in it act as defaults.
void bind_pipeline_options(CLI::App& app, PipelineConfig& cfg);

// Reads a config file into `cfg`; unknown keys are an error.
void load_config_file(const std::filesystem::path& path, PipelineConfig& cfg);

std::string to_ini(const PipelineConfig& cfg);

// Applies the runtime settings (thread count, kernel backend).
void apply_runtime(const PipelineConfig& cfg);

}  // namespace stackdedup::cli
