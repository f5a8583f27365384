// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "cli/commands.hpp"
#include "stackdedup/baselines.hpp"
#include "stackdedup/errors.hpp"

namespace stackdedup::cli {

namespace {

bool needs(const std::vector<std::string>& pipelines, std::initializer_list<const char*> any) {
  for (const char* a : any)
    if (std::find(pipelines.begin(), pipelines.end(), a) != pipelines.end()) return true;
  return false;
}

PipelineOptions pipeline_options(const PipelineConfig& cfg) {
  PipelineOptions o;
  o.k = cfg.k;
  o.search_mode = cfg.mode();
  o.hnsw = cfg.hnsw;
  return o;
}

}  // namespace

PipelineConfig load_state_config(const fs::path& dir, const Overrides& ov) {
  PipelineConfig c;
  const StatePaths paths{dir};
  if (fs::exists(paths.config())) {
    try {
      load_config_file(paths.config(), c);
    } catch (const UsageError& e) {
      throw ArtifactError(std::string("config snapshot: ") + e.what());
    }
  }
  if (ov.k) c.k = *ov.k;
  if (ov.search_mode) c.search_mode = *ov.search_mode;
  if (ov.use_reranker) c.use_reranker = *ov.use_reranker;
  if (ov.ef_search) c.hnsw.ef_search = *ov.ef_search;
  if (ov.threads) c.threads = *ov.threads;
  if (ov.kernels) c.kernels = *ov.kernels;
  c.finalize();
  return c;
}

TrainedState load_trained_state(const fs::path& dir, const Overrides& ov,
                                const std::vector<std::string>& pipelines) {
  TrainedState s{StatePaths{dir}, load_state_config(dir, ov), {}, std::nullopt,
                 std::nullopt};
  apply_runtime(s.config);

  for (const auto& p : pipelines)
    if (p != "embedder" && p != "reranked" && p != "lerch" && p != "edit" && p != "remote")
      throw UsageError("unknown pipeline '" + p + "'");

  if (needs(pipelines, {"embedder", "reranked"})) {
    require_file(s.paths.vocab(), "vocabulary (run train first)");
    require_file(s.paths.embedder(), "embedder weights (run train first)");
    s.vocab = BpeVocab::load(s.paths.vocab());
    s.embedder.emplace(EmbedderModel::load(s.paths.embedder()));
  }
  if (needs(pipelines, {"reranked"})) {
    require_file(s.paths.reranker(), "reranker weights (trained with --no-reranker?)");
    s.reranker.emplace(RerankerModel::load(s.paths.reranker()));
  }
  return s;
}

std::unique_ptr<SimilarityPipeline> make_pipeline(const std::string& name, TrainedState& s,
                                                  bool remote_online,
                                                  const StackTrace* probe) {
  const auto opts = pipeline_options(s.config);
  if (name == "embedder")
    return make_embedder_pipeline(*s.embedder, s.vocab, s.config.tokenizer, opts);
  if (name == "reranked")
    return std::make_unique<RerankedPipeline>(*s.embedder, *s.reranker, s.vocab,
                                              s.config.tokenizer, opts);
  if (name == "lerch") return std::make_unique<LerchPipeline>(s.config.k);
  if (name == "edit") return std::make_unique<EditPipeline>(s.config.k);
  if (name == "remote") {
    auto ro = remote_options_from_environment();
    ro.offline = !remote_online;
    ro.cache_file = s.paths.remote_cache();
    if (ro.endpoint.empty())
      throw UsageError("remote pipeline needs REMOTE_EMBED_ENDPOINT");
    auto client = std::make_shared<RemoteEmbedderClient>(ro);
    auto embed = [client](const StackTrace& t) { return client->embed(t); };
    // The width is known once anything is cached; otherwise ask once.
    std::size_t dim = client->dim();
    if (dim == 0 && probe) dim = client->embed(*probe).size();
    if (dim == 0)
      throw UsageError("remote pipeline: embedding width unknown (empty cache and offline)");
    return std::make_unique<EmbeddingPipeline>("remote", dim, embed, opts);
  }
  throw UsageError("unknown pipeline '" + name + "'");
}

}  // namespace stackdedup::cli
