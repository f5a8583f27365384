// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// eval and bench.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/errors.hpp"
#include "stackdedup/eval.hpp"

namespace stackdedup::cli {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

DatasetSplit load_split(const StatePaths& paths) {
  require_file(paths.dataset(), "dataset (run ingest first)");
  auto loaded = load_reports(paths.dataset(), true);
  return chronological_split(std::move(loaded.reports));
}

}  // namespace

void cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& log) {
  const StatePaths paths{o.state};
  StateLock lock(paths);
  const auto cfg = load_state_config(o.state, o.overrides);
  std::vector<std::string> names;
  if (o.pipelines) {
    names = split_list(*o.pipelines);
  } else {
    // Configured list, minus neural variants that were never trained.
    for (const auto& n : cfg.pipelines()) {
      if (n == "reranked" && (!cfg.use_reranker || !fs::exists(paths.reranker()))) continue;
      if ((n == "embedder" || n == "reranked") && !fs::exists(paths.embedder())) continue;
      names.push_back(n);
    }
  }
  if (names.empty()) throw UsageError("eval: no pipelines selected");
  auto state = load_trained_state(o.state, o.overrides, names);
  const auto split = load_split(paths);
  fs::create_directories(paths.eval_dir());

  std::vector<MetricsReport> reports;
  std::string lines;
  for (const auto& name : names) {
    log << "evaluating " << name << "\n" << std::flush;
    auto pipeline = make_pipeline(name, state, o.remote_online,
                                  split.train.empty() ? nullptr : &split.train.front());
    std::vector<EvalEvent> events;
    auto m = evaluate(*pipeline, split, cfg.latency_warmup, &events);
    const auto j = to_json(m);
    write_file_atomic(paths.eval_dir() / (name + ".json"), j.dump(2) + "\n");
    if (o.dump_events) {
      std::ofstream ev(paths.eval_dir() / (name + ".events.jsonl"), std::ios::trunc);
      write_events(ev, events);
    }
    lines += j.dump() + "\n";
    reports.push_back(std::move(m));
  }
  const std::string table = format_table(reports, paths.dir.filename().string());
  write_file_atomic(paths.eval_dir() / "comparison.txt", table);
  write_file_atomic(paths.eval_dir() / "comparison.jsonl", lines);
  out << (o.json_output ? lines : table) << std::flush;
}

void cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream& log) {
  if (o.queries == 0) throw UsageError("bench: query count must be positive");
  if (o.size == 0) throw UsageError("bench: store size must be positive");
  if (o.repeats == 0) throw UsageError("bench: repeats must be positive");
  const StatePaths paths{o.state};
  StateLock lock(paths);
  const auto names = split_list(o.pipelines);
  auto state = load_trained_state(o.state, o.overrides, names);

  // Rough per-entry footprint: vector, graph links, trace text and tokens.
  const std::size_t dim = state.embedder ? state.embedder->dim() : 0;
  const double per_entry = 4.0 * static_cast<double>(dim) +
                           4.0 * 3.0 * static_cast<double>(state.config.hnsw.m) + 4096.0;
  const double need_mb = per_entry * static_cast<double>(o.size) / (1024.0 * 1024.0);
  if (need_mb > static_cast<double>(o.memory_budget_mb)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "bench: a %zu-trace store needs about %.0f MiB, over the %zu MiB budget",
                  o.size, need_mb, o.memory_budget_mb);
    throw UsageError(buf);
  }

  std::vector<StackTrace> history, queries;
  if (fs::exists(paths.dataset())) {
    const auto split = load_split(paths);
    history = split.train;
    history.insert(history.end(), split.validation.begin(), split.validation.end());
    queries = split.test;
  }
  if (history.size() > o.size) history.resize(o.size);
  // Synthetic padding when the dataset is smaller than the requested store.
  for (std::uint64_t round = 0; history.size() < o.size || queries.empty(); ++round) {
    SyntheticConfig sc;
    sc.seed = 1000 + round;
    sc.categories = std::min<std::size_t>(200, (o.size - std::min(o.size, history.size())) / 40 + 2);
    auto extra = generate_synthetic(sc);
    for (auto& t : extra) {
      t.report_id = "bench" + std::to_string(round) + "-" + t.report_id;
      t.category_id = "bench" + std::to_string(round) + "-" + *t.category_id;
      if (history.size() < o.size) history.push_back(std::move(t));
      else if (queries.size() < o.queries) queries.push_back(std::move(t));
    }
  }
  if (queries.size() > o.queries) queries.resize(o.queries);
  for (std::size_t i = 0, n = queries.size(); queries.size() < o.queries; ++i)
    queries.push_back(queries[i % n]);
  log << "bench: store " << history.size() << ", queries " << queries.size() << "\n";

  LatencyOptions lopts;
  lopts.warmup = o.warmup;
  std::vector<MetricsReport> rows;
  std::string lines;
  std::optional<EmbeddingStore> embedded;  // reused by the reranked pipeline
  for (const auto& name : names) {
    auto pipeline = make_pipeline(name, state, false, &history.front());
    auto* vp = dynamic_cast<EmbeddingPipeline*>(pipeline.get());
    auto* rp = dynamic_cast<RerankedPipeline*>(pipeline.get());
    pipeline->reset();
    if (vp && embedded && embedded->dim() == vp->store().dim() && name != "remote") {
      vp->store() = *embedded;
      if (rp)
        for (const auto& t : history) rp->register_trace(t);
    } else {
      for (const auto& t : history) pipeline->add(t, *t.category_id);
      if (vp && name != "remote") embedded = vp->store();
    }
    std::vector<LatencyStats> runs;
    for (std::size_t r = 0; r < o.repeats; ++r)
      runs.push_back(measure_latency(*pipeline, queries, lopts));

    std::vector<double> means;
    for (const auto& s : runs) means.push_back(s.total.mean_ms);
    const auto across = stage_stats(means);
    MetricsReport m;
    m.pipeline = name;
    m.latency = runs.back();
    rows.push_back(m);
    auto stage = [](const StageStats& s) {
      return nlohmann::json{{"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}};
    };
    nlohmann::json j{{"pipeline", name},
                     {"store_size", history.size()},
                     {"queries", queries.size()},
                     {"repeats", o.repeats},
                     {"retrieval", stage(runs.back().retrieval)},
                     {"rerank", stage(runs.back().rerank)},
                     {"total", stage(runs.back().total)},
                     {"mean_ms_per_repeat", means},
                     {"mean_ms_stddev", across.stddev_ms}};
    lines += j.dump() + "\n";
    if (!o.json_output) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "%-10s retrieval %8.3f ms (p50 %8.3f, p95 %8.3f)  rerank %8.3f ms  "
                    "total %8.3f ms +- %.3f over %zu runs\n",
                    name.c_str(), runs.back().retrieval.mean_ms, runs.back().retrieval.p50_ms,
                    runs.back().retrieval.p95_ms, runs.back().rerank.mean_ms,
                    runs.back().total.mean_ms, across.stddev_ms, o.repeats);
      out << buf << std::flush;
    }
  }
  if (o.json_output) out << lines << std::flush;
}

}  // namespace stackdedup::cli
