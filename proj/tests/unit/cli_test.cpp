// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "stackdedup/errors.hpp"
#include "test_util.hpp"

namespace stackdedup {
namespace {

namespace fs = std::filesystem;
using cli::PipelineConfig;

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small enough to train in seconds.
std::vector<std::string> tiny_flags() {
  return {"--vocab-size", "300", "--d-tok",   "8",  "--hidden-dim", "8",
          "--epochs",     "1",   "--batch-size", "8", "--rr-d-tok", "8",
          "--rr-hidden-dim", "8", "--rr-mlp",  "8",  "--rr-epochs",  "1",
          "--pairs-per-category", "10", "--rr-pairs-per-category", "10"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class CliState : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<testing::TempDir>("cli");
    data_ = dir_->path() / "data.jsonl";
    auto r = run({"synth", "--out", data_.string(), "--categories", "20", "--variants", "8",
                  "--min-length", "5", "--max-length", "10", "--frame-vocabulary", "200"});
    ASSERT_EQ(r.code, 0) << r.err;
    trained_ = dir_->path() / "trained";
    ingest(trained_);
    r = run(cat({"train", "--state", trained_.string()}, tiny_flags()));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { dir_.reset(); }

  static void ingest(const fs::path& state) {
    const auto r = run({"ingest", "--input", data_.string(), "--state", state.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static std::unique_ptr<testing::TempDir> dir_;
  static fs::path data_, trained_;
};

std::unique_ptr<testing::TempDir> CliState::dir_;
fs::path CliState::data_, CliState::trained_;

TEST(CliConfig, IniRoundTrip) {
  PipelineConfig c;
  c.tokenizer.vocab_size = 777;
  c.embedder.temperature = 0.25;
  c.embedder_aggregation = "max";
  c.reranker.mlp_hidden = {32, 7};
  c.use_reranker = false;
  c.hnsw.ef_search = 99;
  testing::TempDir d("ini");
  const auto path = d.path() / "c.ini";
  std::ofstream(path) << cli::to_ini(c);
  PipelineConfig back;
  cli::load_config_file(path, back);
  EXPECT_EQ(cli::to_ini(back), cli::to_ini(c));
  EXPECT_EQ(back.tokenizer.vocab_size, 777u);
  EXPECT_EQ(back.reranker.mlp_hidden, (std::vector<std::size_t>{32, 7}));
  EXPECT_FALSE(back.use_reranker);

  std::ofstream(d.path() / "bad.ini") << "no-such-key = 1\n";
  EXPECT_THROW(cli::load_config_file(d.path() / "bad.ini", back), UsageError);
  EXPECT_THROW(cli::load_config_file(d.path() / "absent.ini", back), UsageError);
}

TEST(CliConfig, FinalizeChecksRanges) {
  PipelineConfig c;
  c.k = 0;
  EXPECT_THROW(c.finalize(), UsageError);
  c = PipelineConfig();
  c.format_version = 9;
  EXPECT_THROW(c.finalize(), ArtifactError);
  c = PipelineConfig();
  c.reranker_aggregation = "sum";
  EXPECT_THROW(c.finalize(), UsageError);
}

TEST(CliExitCodes, UsageAndVersion) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"--version"}).code, 0);
  EXPECT_EQ(run({"ingest", "--state", "x"}).code, 1);  // --input missing
  testing::TempDir d("codes");
  EXPECT_EQ(run({"ingest", "--input", (d.path() / "none.jsonl").string(), "--state",
                 d.path().string()})
                .code,
            2);
  std::ofstream(d.path() / "x.jsonl") << "";
  EXPECT_EQ(run({"ingest", "--input", (d.path() / "x.jsonl").string(), "--adapter", "bogus",
                 "--state", d.path().string()})
                .code,
            1);
}

TEST(CliIngest, StrictAndLenient) {
  testing::TempDir d("ingest");
  const auto good = serialize_report(testing::make_trace("a", 1, {"x.Y"}, "c1"));
  const auto file = d.path() / "in.jsonl";
  std::ofstream(file) << good << "\n{not json\n";
  auto r = run({"ingest", "--input", file.string(), "--state", d.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json_lines(r.out).at(0);
  EXPECT_EQ(j["reports"], 1);
  EXPECT_EQ(j["malformed"], 1);
  r = run({"ingest", "--input", file.string(), "--state", d.path().string(), "--strict"});
  EXPECT_EQ(r.code, 2);
}

TEST(CliTrain, MissingDatasetLeavesNoArtifacts) {
  testing::TempDir d("empty");
  const auto r = run(cat({"train", "--state", d.path().string()}, tiny_flags()));
  EXPECT_EQ(r.code, 3);
  for (const auto& e : fs::directory_iterator(d.path()))
    EXPECT_EQ(e.path().filename(), ".lock") << e.path();
}

TEST_F(CliState, TrainWritesEveryArtifact) {
  const cli::StatePaths p{trained_};
  for (const auto& f : {p.vocab(), p.embedder(), p.reranker(), p.index(), p.categories(),
                        p.reports(), p.calibration(), p.config()})
    EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_FALSE(fs::exists(p.staging()));
  const auto cfg = cli::load_state_config(trained_, {});
  EXPECT_EQ(cfg.embedder.hidden_dim, 8u);
  EXPECT_EQ(cfg.reranker.mlp_hidden, (std::vector<std::size_t>{8}));
  EXPECT_EQ(cli::load_calibration(p.calibration()).pipeline, "reranked");
}

TEST_F(CliState, SameSeedSameWeights) {
  const auto again = dir_->path() / "again";
  ingest(again);
  // Same recipe through a config file, with one flag on top that matches.
  PipelineConfig c = cli::load_state_config(trained_, {});
  c.embedder.max_epochs = 5;
  const auto ini = dir_->path() / "recipe.ini";
  std::ofstream(ini) << cli::to_ini(c);
  const auto r = run({"train", "--state", again.string(), "--config", ini.string(), "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli::load_state_config(again, {}).embedder.max_epochs, 1u);
  const cli::StatePaths a{trained_}, b{again};
  EXPECT_EQ(slurp(a.embedder()), slurp(b.embedder()));
  EXPECT_EQ(slurp(a.reranker()), slurp(b.reranker()));
  EXPECT_EQ(slurp(a.index()), slurp(b.index()));
  EXPECT_EQ(slurp(a.vocab()), slurp(b.vocab()));
}

TEST_F(CliState, NoRerankerVariant) {
  const auto s = dir_->path() / "plain";
  ingest(s);
  auto r = run(cat(cat({"train", "--state", s.string()}, tiny_flags()), {"--no-reranker"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const cli::StatePaths p{s};
  EXPECT_FALSE(fs::exists(p.reranker()));
  EXPECT_EQ(cli::load_calibration(p.calibration()).pipeline, "embedder");
  // Default pipeline list drops the reranked variant.
  r = run({"eval", "--state", s.string(), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& j : json_lines(r.out)) EXPECT_NE(j["pipeline"], "reranked");
  EXPECT_EQ(run({"eval", "--state", s.string(), "--pipelines", "reranked"}).code, 3);
}

TEST_F(CliState, DedupDecisions) {
  const auto s = dir_->path() / "dedup";
  fs::create_directories(s);
  for (const auto& e : fs::directory_iterator(trained_))
    if (e.is_regular_file()) fs::copy_file(e.path(), s / e.path().filename());
  const auto stored = cli::load_report_store(cli::StatePaths{s}.reports());
  ASSERT_FALSE(stored.empty());

  StackTrace same = stored.front();
  same.report_id = "copy-of-first";
  StackTrace novel = testing::make_trace("novel", 9'000'000'000'000, {"zz.Q", "zz.R", "zz.S"});
  std::string input = serialize_report(same) + "\n" + serialize_report(novel) + "\n" +
                      serialize_report(stored.back()) + "\n";  // id already stored
  const auto r = run({"dedup", "--state", s.string()}, input);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["action"], "attach");
  EXPECT_EQ(lines[0]["model_invoked"], false);
  EXPECT_EQ(lines[0]["category_id"], *stored.front().category_id);
  EXPECT_EQ(lines[1]["model_invoked"], true);
  EXPECT_TRUE(lines[2].contains("error"));
  EXPECT_EQ(cli::load_report_store(cli::StatePaths{s}.reports()).size(), stored.size() + 2);
  EXPECT_EQ(EmbeddingStore::load(cli::StatePaths{s}.index()).size(), stored.size() + 2);

  // Held lock: the command refuses to run.
  {
    cli::StateLock lock(cli::StatePaths{s});
    EXPECT_EQ(run({"dedup", "--state", s.string()}, "").code, 3);
  }
  EXPECT_EQ(run({"dedup", "--state", s.string()}, "").code, 0);
}

TEST_F(CliState, EvalTwoPipelines) {
  const auto r = run({"eval", "--state", trained_.string(), "--pipelines", "embedder,edit",
                      "--dump-events"});
  ASSERT_EQ(r.code, 0) << r.err;
  const cli::StatePaths p{trained_};
  EXPECT_TRUE(fs::exists(p.eval_dir() / "embedder.json"));
  EXPECT_TRUE(fs::exists(p.eval_dir() / "edit.json"));
  EXPECT_TRUE(fs::exists(p.eval_dir() / "edit.events.jsonl"));
  EXPECT_EQ(json_lines(slurp(p.eval_dir() / "comparison.jsonl")).size(), 2u);
  EXPECT_NE(r.out.find("embedder"), std::string::npos);
  EXPECT_NE(r.out.find("edit"), std::string::npos);
  EXPECT_EQ(slurp(p.eval_dir() / "comparison.txt"), r.out);
  EXPECT_EQ(run({"eval", "--state", trained_.string(), "--pipelines", "nope"}).code, 1);
}

TEST_F(CliState, LerchNeedsNoNeuralArtifacts) {
  const auto s = dir_->path() / "ingest-only";
  ingest(s);
  const auto r = run({"eval", "--state", s.string(), "--pipelines", "lerch", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0]["pipeline"], "lerch");
  EXPECT_EQ(run({"eval", "--state", s.string(), "--pipelines", "embedder"}).code, 3);
}

TEST_F(CliState, Bench) {
  EXPECT_EQ(run({"bench", "--state", trained_.string(), "--queries", "0"}).code, 1);
  EXPECT_EQ(run({"bench", "--state", trained_.string(), "--size", "10000000",
                 "--memory-budget-mb", "1"})
                .code,
            1);
  const auto r = run({"bench", "--state", trained_.string(), "--size", "300", "--queries", "5",
                      "--repeats", "2", "--warmup", "1", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0]["pipeline"], "embedder");
  EXPECT_EQ(lines[0]["store_size"], 300);
  EXPECT_EQ(lines[0]["rerank"]["mean_ms"], 0.0);
  EXPECT_GT(lines[1]["rerank"]["mean_ms"].get<double>(), 0.0);
}

TEST_F(CliState, InspectStateDirectory) {
  const auto r = run({"inspect", trained_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::set<std::string> kinds;
  for (const auto& j : json_lines(r.out)) kinds.insert(j["kind"].get<std::string>());
  for (const char* k : {"config", "vocab", "weights", "index", "jsonl"})
    EXPECT_TRUE(kinds.contains(k)) << k;
  EXPECT_EQ(run({"inspect", (dir_->path() / "absent").string()}).code, 3);
}

}  // namespace
}  // namespace stackdedup
