// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

// ingest, synth and inspect.

#include <fstream>
#include <ostream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/adapters.hpp"
#include "stackdedup/errors.hpp"
#include "stackdedup/index.hpp"
#include "stackdedup/nn/weights_io.hpp"

namespace stackdedup::cli {

void cmd_ingest(const IngestOptions& o, std::ostream& out, std::ostream& log) {
  if (o.inputs.empty()) throw UsageError("ingest: no input files");
  const auto adapter = parse_adapter(o.adapter);
  const StatePaths paths{o.state};
  StateLock lock(paths);

  std::vector<StackTrace> all;
  std::unordered_set<std::string> ids;
  std::size_t records = 0, malformed = 0, duplicate_ids = 0;
  for (const auto& input : o.inputs) {
    if (!fs::exists(input)) throw DataError("cannot read " + input.string());
    auto r = ingest_file(input, adapter, o.strict);
    records += r.records;
    malformed += r.malformed;
    for (const auto& e : r.errors) log << input.string() << ": " << e << "\n";
    for (auto& t : r.reports) {
      if (!ids.insert(t.report_id).second) {
        if (o.strict)
          throw DataError(input.string() + ": duplicate report_id " + t.report_id);
        ++duplicate_ids;
        continue;
      }
      all.push_back(std::move(t));
    }
  }
  std::set<std::string> categories;
  std::size_t unlabeled = 0;
  for (const auto& t : all) {
    if (t.category_id) categories.insert(*t.category_id);
    else ++unlabeled;
  }
  std::string text;
  for (const auto& t : all) text += serialize_report(t) + "\n";
  write_file_atomic(paths.dataset(), text);

  out << nlohmann::json{{"command", "ingest"},
                        {"adapter", to_string(adapter)},
                        {"records", records},
                        {"reports", all.size()},
                        {"categories", categories.size()},
                        {"unlabeled", unlabeled},
                        {"malformed", malformed},
                        {"duplicate_ids", duplicate_ids},
                        {"output", paths.dataset().string()}}
             .dump()
      << "\n";
}

void cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("synth: --out is required");
  const auto reports = generate_synthetic(o.config);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  save_reports(o.out, reports);
  std::set<std::string> categories;
  for (const auto& r : reports) categories.insert(*r.category_id);
  out << nlohmann::json{{"command", "synth"},
                        {"reports", reports.size()},
                        {"categories", categories.size()},
                        {"seed", o.config.seed},
                        {"output", o.out.string()}}
             .dump()
      << "\n";
}

namespace {

std::string magic_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  char buf[4] = {};
  in.read(buf, 4);
  return std::string(buf, static_cast<std::size_t>(in.gcount()));
}

nlohmann::json inspect_file(const fs::path& p) {
  nlohmann::json j{{"path", p.string()}};
  const std::string magic = magic_of(p);
  if (magic == "SDDW") {
    const auto h = nn::read_weight_header(p);
    j["kind"] = "weights";
    j["header"] = {{"version", h.version},
                   {"model_kind", h.model_kind},
                   {"hyperparameters", h.hyperparameters}};
  } else if (magic == "SDIX") {
    const auto store = EmbeddingStore::load(p);
    j["kind"] = "index";
    j["header"] = {{"version", std::to_string(kIndexFormatMajor) + "." +
                                   std::to_string(kIndexFormatMinor)},
                   {"dim", store.dim()},
                   {"count", store.size()},
                   {"graph", store.has_graph()},
                   {"m", store.params().m},
                   {"ef_construction", store.params().ef_construction},
                   {"ef_search", store.params().ef_search},
                   {"max_level", store.max_level()}};
  } else if (p.extension() == ".jsonl") {
    std::ifstream in(p);
    std::string first, line;
    std::getline(in, first);
    std::size_t lines = first.empty() ? 0 : 1;
    while (std::getline(in, line))
      if (!line.empty()) ++lines;
    j["kind"] = "jsonl";
    try {
      const auto h = nlohmann::json::parse(first);
      if (h.contains("format")) {
        j["header"] = h;
        --lines;
      }
    } catch (const nlohmann::json::parse_error&) {
    }
    j["records"] = lines;
  } else if (p.extension() == ".json") {
    std::ifstream in(p);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ArtifactError(p.string() + ": " + e.what());
    }
    if (doc.contains("merges") && doc.contains("tokens")) {
      j["kind"] = "vocab";
      j["header"] = {{"version", doc.value("version", -1)},
                     {"vocab_size", doc.value("vocab_size", 0)},
                     {"merges", doc["merges"].size()}};
    } else {
      j["kind"] = "json";
      j["header"] = doc;
    }
  } else if (p.extension() == ".ini") {
    PipelineConfig c;
    load_config_file(p, c);
    j["kind"] = "config";
    j["header"] = {{"format_version", c.format_version}};
    j["text"] = to_ini(c);
  } else {
    throw ArtifactError(p.string() + ": unrecognized artifact");
  }
  return j;
}

}  // namespace

void cmd_inspect(const InspectOptions& o, std::ostream& out) {
  if (o.paths.empty()) throw UsageError("inspect: no paths given");
  for (const auto& p : o.paths) {
    if (!fs::exists(p)) throw ArtifactError(p.string() + " does not exist");
    if (fs::is_directory(p)) {
      const StatePaths s{p};
      for (const auto& f : {s.config(), s.vocab(), s.embedder(), s.reranker(), s.index(),
                            s.categories(), s.reports(), s.calibration()})
        if (fs::exists(f)) out << inspect_file(f).dump() << "\n";
    } else {
      out << inspect_file(p).dump() << "\n";
    }
  }
}

}  // namespace stackdedup::cli
