// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/config.hpp"

#include <omp.h>

#include <sstream>

#include "stackdedup/errors.hpp"
#include "stackdedup/kernels.hpp"

namespace stackdedup::cli {

namespace {

const std::vector<std::string> kAggregations = {"avg", "max", "hidden", "concat"};
const std::vector<std::string> kModes = {"auto", "exact", "ann"};

}  // namespace

void PipelineConfig::finalize() {
  if (format_version != kConfigFormatVersion)
    throw ArtifactError("config format-version " + std::to_string(format_version) +
                        " not supported (expected " +
                        std::to_string(kConfigFormatVersion) + ")");
  if (k == 0) throw UsageError("k must be at least 1");
  if (tokenizer.max_frames == 0 || tokenizer.max_tokens_per_frame == 0)
    throw UsageError("max-frames and max-tokens-per-frame must be positive");
  try {
    embedder.aggregation = parse_aggregation(embedder_aggregation);
    reranker.aggregation = parse_aggregation(reranker_aggregation);
    (void)parse_search_mode(search_mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (kernels != "openmp" && kernels != "serial")
    throw UsageError("kernels must be openmp or serial");
  reranker.k = k;
}

std::vector<std::string> PipelineConfig::pipelines() const {
  std::vector<std::string> out;
  std::stringstream ss(eval_pipelines);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void bind_pipeline_options(CLI::App& app, PipelineConfig& c) {
  app.option_defaults()->always_capture_default();
  const std::string tok = "Tokenizer", emb = "Embedder", rr = "Reranker",
                    idx = "Index", pipe = "Pipeline";
  app.add_option("--format-version", c.format_version, "Config format version")
      ->group("");
  app.add_option("--vocab-size", c.tokenizer.vocab_size, "BPE vocabulary limit")->group(tok);
  app.add_option("--max-frames", c.tokenizer.max_frames, "Frames kept from the top")
      ->group(tok);
  app.add_option("--max-tokens-per-frame", c.tokenizer.max_tokens_per_frame)->group(tok);

  app.add_option("--d-tok", c.embedder.d_tok, "Token embedding width")->group(emb);
  app.add_option("--hidden-dim", c.embedder.hidden_dim, "LSTM hidden width")->group(emb);
  app.add_option("--aggregation", c.embedder_aggregation)
      ->check(CLI::IsMember(kAggregations))
      ->group(emb);
  app.add_option("--temperature", c.embedder.temperature)->group(emb);
  app.add_option("--batch-size", c.embedder.batch_size)->group(emb);
  app.add_option("--pairs-per-category", c.embedder.max_pairs_per_category)->group(emb);
  app.add_option("--lr", c.embedder.lr)->group(emb);
  app.add_option("--patience", c.embedder.patience)->group(emb);
  app.add_option("--epochs", c.embedder.max_epochs)->group(emb);
  app.add_option("--seed", c.embedder.seed)->group(emb);
  app.add_option("--infonce-literal", c.embedder.infonce_literal,
                 "Use the as-printed InfoNCE denominator")
      ->group(emb);
  app.add_option("--clip-norm", c.embedder.clip_norm)->group(emb);

  app.add_option("--use-reranker", c.use_reranker)->group(pipe);
  app.add_flag_callback(
         "--no-reranker", [&c] { c.use_reranker = false; }, "Train and use no reranker")
      ->configurable(false)
      ->group(pipe);
  app.add_option("--rr-d-tok", c.reranker.d_tok)->group(rr);
  app.add_option("--rr-hidden-dim", c.reranker.hidden_dim)->group(rr);
  app.add_option("--rr-aggregation", c.reranker_aggregation)
      ->check(CLI::IsMember(kAggregations))
      ->group(rr);
  app.add_option("--rr-mlp", c.reranker.mlp_hidden, "Hidden layer widths")
      ->delimiter(',')
      ->group(rr);
  app.add_option("--rr-batch-size", c.reranker.batch_size)->group(rr);
  app.add_option("--rr-pairs-per-category", c.reranker.max_pairs_per_category)->group(rr);
  app.add_option("--rr-lr", c.reranker.lr)->group(rr);
  app.add_option("--rr-patience", c.reranker.patience)->group(rr);
  app.add_option("--rr-epochs", c.reranker.max_epochs)->group(rr);
  app.add_option("--rr-seed", c.reranker.seed)->group(rr);
  app.add_option("--rr-clip-norm", c.reranker.clip_norm)->group(rr);

  app.add_option("--k", c.k, "Candidates retrieved per query")->group(pipe);
  app.add_option("--search-mode", c.search_mode)->check(CLI::IsMember(kModes))->group(idx);
  app.add_option("--hnsw-m", c.hnsw.m)->group(idx);
  app.add_option("--ef-construction", c.hnsw.ef_construction)->group(idx);
  app.add_option("--ef-search", c.hnsw.ef_search)->group(idx);
  app.add_option("--hnsw-seed", c.hnsw.seed)->group(idx);

  app.add_option("--eval-pipelines", c.eval_pipelines,
                 "Comma list of embedder, reranked, lerch, edit, remote")
      ->group(pipe);
  app.add_option("--latency-warmup", c.latency_warmup)->group(pipe);
  app.add_option("--threads", c.threads, "OpenMP threads, 0 = default")->group(pipe);
  app.add_option("--kernels", c.kernels)
      ->check(CLI::IsMember({"openmp", "serial"}))
      ->group(pipe);
}

void load_config_file(const std::filesystem::path& path, PipelineConfig& cfg) {
  if (!std::filesystem::exists(path))
    throw UsageError("config file not found: " + path.string());
  CLI::App app;
  bind_pipeline_options(app, cfg);
  app.set_config("--config", path.string(), "", true);
  app.allow_config_extras(false);
  try {
    std::vector<std::string> no_args;
    app.parse(no_args);
  } catch (const CLI::ParseError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::string to_ini(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  CLI::App app;
  bind_pipeline_options(app, copy);
  return "# stackdedup pipeline configuration\n" + app.config_to_str(true, false);
}

void apply_runtime(const PipelineConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  kernels::set_backend(cfg.kernels == "serial" ? kernels::Backend::kSerial
                                               : kernels::Backend::kOpenMP);
}

}  // namespace stackdedup::cli
