// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/errors.hpp"
#include "stackdedup/eval.hpp"

namespace stackdedup::cli {

namespace {

void log_epoch(std::ostream& log, const char* model, const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s epoch %zu: loss %.4f, validation %.4f, %.1fs%s\n",
                model, s.epoch, s.mean_loss, s.validation_score, s.seconds,
                s.improved ? " *" : "");
  log << buf << std::flush;
}

nlohmann::json epochs_json(const std::vector<EpochStats>& history) {
  auto arr = nlohmann::json::array();
  for (const auto& s : history)
    arr.push_back({{"epoch", s.epoch},
                   {"mean_loss", s.mean_loss},
                   {"validation", s.validation_score},
                   {"seconds", s.seconds}});
  return arr;
}

}  // namespace

void cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& log) {
  const StatePaths paths{o.state};
  PipelineConfig cfg = o.config;
  cfg.finalize();
  require_file(paths.dataset(), "dataset (run ingest first)");
  StateLock lock(paths);
  apply_runtime(cfg);
  const auto start = std::chrono::steady_clock::now();

  auto loaded = load_reports(paths.dataset(), true);
  const auto split = chronological_split(std::move(loaded.reports));
  log << "split: " << split.train.size() << " train, " << split.validation.size()
      << " validation, " << split.test.size() << " test\n";

  const fs::path stage = paths.staging();
  fs::remove_all(stage);
  fs::create_directories(stage);
  const StatePaths staged{stage};
  nlohmann::json summary{{"command", "train"},
                         {"train", split.train.size()},
                         {"validation", split.validation.size()},
                         {"test", split.test.size()}};
  try {
    const auto vocab = BpeVocab::train(split.train, cfg.tokenizer.vocab_size);
    vocab.save(staged.vocab());
    log << "vocabulary: " << vocab.size() << " symbols\n";
    summary["vocab_size"] = vocab.size();

    auto emb = train_embedder(split, vocab, cfg.tokenizer, cfg.embedder,
                              [&](const EpochStats& s) { log_epoch(log, "embedder", s); });
    emb.model.save(staged.embedder());
    summary["embedder"] = {{"initial_validation_mrr", emb.initial_validation_mrr},
                           {"best_validation_mrr", emb.best_validation_mrr},
                           {"best_epoch", emb.best_epoch},
                           {"epochs", epochs_json(emb.history)}};

    std::optional<RerankerTrainResult> rr;
    if (cfg.use_reranker) {
      rr.emplace(train_reranker(split, vocab, cfg.tokenizer, cfg.reranker, &emb.model,
                                [&](const EpochStats& s) { log_epoch(log, "reranker", s); }));
      rr->model.save(staged.reranker());
      summary["reranker"] = {{"initial_validation_score", rr->initial_validation_score},
                             {"best_validation_score", rr->best_validation_score},
                             {"best_epoch", rr->best_epoch},
                             {"epochs", epochs_json(rr->history)}};
    }

    PipelineOptions popts;
    popts.k = cfg.k;
    popts.search_mode = cfg.mode();
    popts.hnsw = cfg.hnsw;
    std::unique_ptr<EmbeddingPipeline> pipeline;
    if (rr)
      pipeline = std::make_unique<RerankedPipeline>(emb.model, rr->model, vocab,
                                                    cfg.tokenizer, popts);
    else
      pipeline = make_embedder_pipeline(emb.model, vocab, cfg.tokenizer, popts);

    // Validation replayed against train only; afterwards the pipeline holds
    // train + validation in arrival order, which is the persisted index.
    const auto events = replay_validation(*pipeline, split);
    Calibration cal;
    try {
      cal = calibrate_threshold(events);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("threshold calibration: ") + e.what());
    }
    log << "threshold " << cal.threshold << " (validation F1 " << cal.f1 << ", "
        << pipeline->name() << ")\n";
    write_file_atomic(staged.calibration(),
                      to_json_text({pipeline->name(), cal.threshold, cal.f1}));
    summary["pipeline"] = pipeline->name();
    summary["threshold"] = std::isinf(cal.threshold) ? nlohmann::json(nullptr)
                                                     : nlohmann::json(cal.threshold);
    summary["validation_f1"] = cal.f1;

    pipeline->store().save(staged.index());
    std::vector<StackTrace> history = split.train;
    history.insert(history.end(), split.validation.begin(), split.validation.end());
    CategoryStore categories;
    for (const auto& t : history) categories.add(*t.category_id, t.report_id, "human");
    write_file_atomic(staged.categories(), categories.to_jsonl());
    write_file_atomic(staged.reports(), report_store_jsonl(history));
    write_file_atomic(staged.config(), to_ini(cfg));

    for (const auto& f : {staged.vocab(), staged.embedder(), staged.reranker(),
                          staged.calibration(), staged.index(), staged.categories(),
                          staged.reports(), staged.config()}) {
      const fs::path target = paths.dir / f.filename();
      if (fs::exists(f)) fs::rename(f, target);
      else fs::remove(target);  // stale reranker from an earlier run
    }
    fs::remove_all(stage);
  } catch (...) {
    fs::remove_all(stage);
    throw;
  }
  summary["seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << summary.dump() << "\n";
}

}  // namespace stackdedup::cli
