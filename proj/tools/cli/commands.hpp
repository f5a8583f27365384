// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommands of the stackdedup tool. Each throws on failure; run_cli maps
// exception types to exit codes (1 usage, 2 data, 3 artifact).
#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "cli/state.hpp"
#include "stackdedup/pipeline.hpp"
#include "stackdedup/synthetic.hpp"

namespace stackdedup::cli {

struct IngestOptions {
  std::vector<fs::path> inputs;
  std::string adapter = "native";
  fs::path state;
  bool strict = false;
};

struct TrainOptions {
  fs::path state;
  PipelineConfig config;
};

// Flags that override the snapshot saved by train.
struct Overrides {
  std::optional<std::size_t> k;
  std::optional<std::string> search_mode;
  std::optional<bool> use_reranker;
  std::optional<std::size_t> ef_search;
  std::optional<int> threads;
  std::optional<std::string> kernels;
};

struct DedupOptions {
  fs::path state;
  std::string input = "-";  // "-" reads standard input
  Overrides overrides;
};

struct EvalOptions {
  fs::path state;
  std::optional<std::string> pipelines;
  bool dump_events = false;
  bool remote_online = false;
  bool json_output = false;  // JSON lines instead of the table on stdout
  Overrides overrides;
};

struct BenchOptions {
  fs::path state;
  std::size_t size = 10'000;
  std::size_t queries = 100;
  std::size_t warmup = 10;
  std::size_t repeats = 3;
  std::string pipelines = "embedder,reranked";
  std::size_t memory_budget_mb = 4096;
  bool json_output = false;
  Overrides overrides;
};

struct InspectOptions {
  std::vector<fs::path> paths;  // files, or a state directory
};

struct SynthOptions {
  fs::path out;
  SyntheticConfig config;
};

void cmd_ingest(const IngestOptions& options, std::ostream& out, std::ostream& log);
void cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& log);
void cmd_dedup(const DedupOptions& options, std::istream& in, std::ostream& out,
               std::ostream& log);
void cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& log);
void cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& log);
void cmd_inspect(const InspectOptions& options, std::ostream& out);
void cmd_synth(const SynthOptions& options, std::ostream& out);

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

// Shared by the commands that read a trained state.
struct TrainedState {
  StatePaths paths;
  PipelineConfig config;
  BpeVocab vocab;
  std::optional<EmbedderModel> embedder;
  std::optional<RerankerModel> reranker;
};

// The snapshot config (defaults when train never ran) with overrides.
PipelineConfig load_state_config(const fs::path& dir, const Overrides& overrides);

// Loads the snapshot config, applies overrides, and loads the models the
// named pipelines need.
TrainedState load_trained_state(const fs::path& dir, const Overrides& overrides,
                                const std::vector<std::string>& pipelines);

std::unique_ptr<SimilarityPipeline> make_pipeline(const std::string& name,
                                                  TrainedState& state,
                                                  bool remote_online = false,
                                                  const StackTrace* probe = nullptr);

}  // namespace stackdedup::cli
