// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/errors.hpp"

namespace stackdedup::cli {

namespace {

void bind_overrides(CLI::App& app, Overrides& ov) {
  app.add_option("--k", ov.k, "Candidates retrieved per query");
  app.add_option("--search-mode", ov.search_mode)->check(CLI::IsMember({"auto", "exact", "ann"}));
  app.add_option("--ef-search", ov.ef_search);
  app.add_option("--use-reranker", ov.use_reranker);
  app.add_flag_callback("--no-reranker", [&ov] { ov.use_reranker = false; });
  app.add_option("--threads", ov.threads);
  app.add_option("--kernels", ov.kernels)->check(CLI::IsMember({"openmp", "serial"}));
}

// The value of "--config" in the train arguments, if any. Read before the
// main parse so that flags given alongside it win.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
  bool in_train = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "train") in_train = true;
    if (!in_train) continue;
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app("Stack-trace deduplication engine", "stackdedup");
  app.require_subcommand(1);
  app.set_version_flag("--version", "stackdedup 0.1.0");

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Convert a dataset into the state directory");
  c_ingest->add_option("--input,-i", ingest.inputs, "Input files")->required();
  c_ingest->add_option("--adapter", ingest.adapter, "native, ubuntu, eclipse, netbeans, gnome")
      ->capture_default_str();
  c_ingest->add_option("--state", ingest.state, "State directory")->required();
  c_ingest->add_flag("--strict", ingest.strict, "Fail on the first malformed record");

  TrainOptions train;
  std::string train_config;
  auto* c_train = app.add_subcommand("train", "Train tokenizer, models, index and threshold");
  c_train->add_option("--state", train.state, "State directory")->required();
  c_train->add_option("--config", train_config, "Config file; flags override its values");
  bind_pipeline_options(*c_train, train.config);

  DedupOptions dedup;
  auto* c_dedup = app.add_subcommand("dedup", "Assign incoming reports to categories");
  c_dedup->add_option("--state", dedup.state, "State directory")->required();
  c_dedup->add_option("--input,-i", dedup.input, "Report file, - for standard input")
      ->capture_default_str();
  bind_overrides(*c_dedup, dedup.overrides);

  EvalOptions eval;
  std::string eval_pipelines;
  auto* c_eval = app.add_subcommand("eval", "Replay the test split and report metrics");
  c_eval->add_option("--state", eval.state, "State directory")->required();
  auto* eval_list = c_eval->add_option("--pipelines", eval_pipelines,
                                       "Comma list of embedder, reranked, lerch, edit, remote");
  c_eval->add_flag("--dump-events", eval.dump_events, "Write per-event JSON lines");
  c_eval->add_flag("--remote-online", eval.remote_online,
                   "Allow the remote pipeline to send requests");
  c_eval->add_flag("--json", eval.json_output, "Print JSON lines instead of the table");
  bind_overrides(*c_eval, eval.overrides);

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "Measure per-query latency on a store");
  c_bench->add_option("--state", bench.state, "State directory")->required();
  c_bench->add_option("--size", bench.size, "Store size")->capture_default_str();
  c_bench->add_option("--queries", bench.queries)->capture_default_str();
  c_bench->add_option("--warmup", bench.warmup)->capture_default_str();
  c_bench->add_option("--repeats", bench.repeats)->capture_default_str();
  c_bench->add_option("--pipelines", bench.pipelines)->capture_default_str();
  c_bench->add_option("--memory-budget-mb", bench.memory_budget_mb)->capture_default_str();
  c_bench->add_flag("--json", bench.json_output, "Print JSON lines");
  bind_overrides(*c_bench, bench.overrides);

  InspectOptions inspect;
  auto* c_inspect = app.add_subcommand("inspect", "Print artifact headers");
  c_inspect->add_option("paths", inspect.paths, "Artifact files or a state directory")
      ->required();

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Write a labeled synthetic dataset");
  c_synth->add_option("--out,-o", synth.out)->required();
  c_synth->add_option("--seed", synth.config.seed)->capture_default_str();
  c_synth->add_option("--categories", synth.config.categories)->capture_default_str();
  c_synth->add_option("--variants", synth.config.variants_per_category)->capture_default_str();
  c_synth->add_option("--min-length", synth.config.min_length)->capture_default_str();
  c_synth->add_option("--max-length", synth.config.max_length)->capture_default_str();
  c_synth->add_option("--frame-vocabulary", synth.config.frame_vocabulary)
      ->capture_default_str();
  c_synth->add_option("--noise", synth.config.noise_rate)->capture_default_str();
  c_synth->add_option("--unseen-fraction", synth.config.unseen_fraction)
      ->capture_default_str();

  try {
    if (auto cfg = find_config(args)) load_config_file(*cfg, train.config);
    std::vector<const char*> argv{"stackdedup"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 1;
    }

    if (c_ingest->parsed()) cmd_ingest(ingest, out, err);
    else if (c_train->parsed()) cmd_train(train, out, err);
    else if (c_dedup->parsed()) {
      if (dedup.input == "-") {
        cmd_dedup(dedup, in, out, err);
      } else {
        std::ifstream file(dedup.input);
        if (!file) throw DataError("cannot read " + dedup.input);
        cmd_dedup(dedup, file, out, err);
      }
    } else if (c_eval->parsed()) {
      if (eval_list->count() > 0) eval.pipelines = eval_pipelines;
      cmd_eval(eval, out, err);
    } else if (c_bench->parsed()) cmd_bench(bench, out, err);
    else if (c_inspect->parsed()) cmd_inspect(inspect, out);
    else if (c_synth->parsed()) cmd_synth(synth, out);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ArtifactError& e) {
    err << "artifact error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace stackdedup::cli
