// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/errors.hpp"

namespace stackdedup::cli {

void cmd_dedup(const DedupOptions& o, std::istream& in, std::ostream& out,
               std::ostream& log) {
  const StatePaths paths{o.state};
  StateLock lock(paths);
  const auto cfg = load_state_config(o.state, o.overrides);
  const std::string name = cfg.use_reranker ? "reranked" : "embedder";
  auto state = load_trained_state(o.state, o.overrides, {name});

  const auto cal = load_calibration(paths.calibration());
  if (cal.pipeline != name)
    log << "warning: threshold was calibrated for the " << cal.pipeline
        << " pipeline, running " << name << "\n";
  require_file(paths.index(), "index");
  auto store = EmbeddingStore::load(paths.index());
  auto reports = load_report_store(paths.reports());
  auto categories = CategoryStore::load(paths.categories());
  if (store.size() != reports.size() || categories.report_count() != reports.size())
    throw ArtifactError("index, report store and category store disagree on size");
  if (store.dim() != state.embedder->dim())
    throw ArtifactError("index width does not match the embedder");

  auto pipeline = make_pipeline(name, state);
  auto* vec_pipeline = static_cast<EmbeddingPipeline*>(pipeline.get());
  auto* reranked = dynamic_cast<RerankedPipeline*>(pipeline.get());
  vec_pipeline->store() = std::move(store);
  EmbeddingStore& index = vec_pipeline->store();

  std::unordered_map<ContentHash, std::size_t> by_content;  // first stored position
  for (std::size_t i = 0; i < reports.size(); ++i) {
    by_content.emplace(content_hash(reports[i]), i);
    if (reranked) reranked->register_trace(reports[i]);
  }

  std::size_t attached = 0, created = 0, errors = 0, shortcut = 0;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    StackTrace report;
    try {
      report = parse_report(line, number);
      if (index.contains(report.report_id))
        throw DataError("line " + std::to_string(number) + ": report_id " +
                        report.report_id + " already stored");
    } catch (const DataError& e) {
      ++errors;
      out << nlohmann::json{{"line", number}, {"error", e.what()}}.dump() << "\n" << std::flush;
      continue;
    }
    report.category_id.reset();  // decisions are the engine's own

    const auto t0 = std::chrono::steady_clock::now();
    const auto hash = content_hash(report);
    nlohmann::json decision{{"report_id", report.report_id}};
    std::string category;
    bool attach = false;
    if (auto it = by_content.find(hash); it != by_content.end()) {
      category = index.category(it->second);
      attach = true;
      ++shortcut;
      const std::vector<float> v(index.vector(it->second).begin(),
                                 index.vector(it->second).end());
      vec_pipeline->add_vector(report.report_id, v, category);
      if (reranked) reranked->register_trace(report);
      decision["top_score"] = nullptr;
      decision["model_invoked"] = false;
    } else {
      const auto r = pipeline->rank(report);
      if (!r.categories.empty()) {
        decision["top_score"] = r.categories.front().score;
        attach = r.categories.front().score > cal.threshold;
        if (attach) category = r.categories.front().category_id;
      } else {
        decision["top_score"] = nullptr;
      }
      if (!attach) category = categories.fresh_id();
      pipeline->add(report, category);
      decision["model_invoked"] = true;
    }
    categories.add(category, report.report_id, "engine");
    by_content.emplace(hash, reports.size());
    report.category_id = category;
    reports.push_back(std::move(report));
    attach ? ++attached : ++created;

    decision["action"] = attach ? "attach" : "new";
    decision["category_id"] = category;
    decision["latency_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    out << decision.dump() << "\n" << std::flush;
  }

  fs::path tmp = paths.index();
  tmp += ".tmp";
  index.save(tmp);
  write_file_atomic(paths.reports(), report_store_jsonl(reports));
  write_file_atomic(paths.categories(), categories.to_jsonl());
  fs::rename(tmp, paths.index());
  log << "dedup: " << attached << " attached (" << shortcut << " identical), " << created
      << " new categories, " << errors << " malformed\n";
}

}  // namespace stackdedup::cli
