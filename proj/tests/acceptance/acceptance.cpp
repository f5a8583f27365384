// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS / FAIL / SKIP line per
// criterion and exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "grad_check.hpp"
#include "metric_oracles.hpp"
#include "stackdedup/embedder.hpp"
#include "stackdedup/encoder.hpp"
#include "stackdedup/eval.hpp"
#include "stackdedup/index.hpp"
#include "stackdedup/nn/ops.hpp"
#include "stackdedup/pipeline.hpp"
#include "stackdedup/reranker.hpp"
#include "stackdedup/synthetic.hpp"

#ifndef STACKDEDUP_ACCEPTANCE_RECIPE
#define STACKDEDUP_ACCEPTANCE_RECIPE ""
#endif

namespace stackdedup {
namespace {

namespace fs = std::filesystem;
using testing::check_gradients;
using testing::Coord;
using testing::copy_values;
using testing::GradCheckResult;
using testing::LossFn;
using testing::sample_coords;

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

struct GradData {
  std::size_t vocab_size = 0;
  std::vector<TokenizedTrace> anchors, positives, negatives;
  std::vector<std::size_t> rows;  // token ids that occur
};

GradData grad_data() {
  SyntheticConfig sc;
  sc.categories = 6;
  sc.variants_per_category = 4;
  sc.min_length = 5;
  sc.max_length = 8;
  sc.frame_vocabulary = 60;
  sc.framework_frames = 20;
  sc.distinctive_depth = 4;
  sc.seed = 11;
  const auto reports = generate_synthetic(sc);
  const auto vocab = BpeVocab::train(reports, 300);
  TokenizerConfig tc;
  tc.max_frames = 6;
  tc.max_tokens_per_frame = 4;
  const auto pairs = sample_training_pairs(reports, 1, 5);
  GradData d;
  d.vocab_size = vocab.size();
  std::set<std::string> cats;
  std::set<std::size_t> rows;
  for (const auto& p : pairs) {
    if (!cats.insert(*reports[p.anchor].category_id).second) continue;
    d.anchors.push_back(encode_trace(reports[p.anchor], vocab, tc));
    d.positives.push_back(encode_trace(reports[p.positive], vocab, tc));
    // Negative: a report of the next category in the list.
    for (const auto& r : reports)
      if (r.category_id != reports[p.anchor].category_id) {
        d.negatives.push_back(encode_trace(r, vocab, tc));
        break;
      }
    if (d.anchors.size() == 4) break;
  }
  for (const auto* set : {&d.anchors, &d.positives, &d.negatives})
    for (const auto& t : *set)
      for (const auto& f : t.frames)
        for (auto id : f) rows.insert(static_cast<std::size_t>(id));
  d.rows.assign(rows.begin(), rows.end());
  return d;
}

std::vector<const TokenizedTrace*> ptrs(const std::vector<TokenizedTrace>& v) {
  std::vector<const TokenizedTrace*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

struct PathResult {
  std::string name;
  GradCheckResult r;
};

// 32-bit analytic gradients against difference quotients of a 64-bit twin
// holding the same values, or 64-bit against 64-bit.
GradCheckResult run_mode(bool wide, const nn::ParameterList<float>& pf, const LossFn<float>& lf,
                         const nn::ParameterList<double>& pd, const LossFn<double>& ld,
                         const std::vector<Coord>& pool) {
  constexpr std::size_t kCount = 50;
  if (wide) return check_gradients<double, double>(pd, ld, pd, ld, pool, kCount, 1e-6, 1e-5, 1e-4);
  return check_gradients<float, double>(pf, lf, pd, ld, pool, kCount, 1e-3, 1e-2, 1e-3);
}

std::vector<PathResult> gradient_paths(bool wide) {
  const auto d = grad_data();
  std::vector<PathResult> out;
  std::mt19937_64 pick(wide ? 101 : 202);
  // At h = 1e-3 the truncation error of the difference quotient grows with
  // the cube of 1/tau; the 32-bit run uses a softer temperature.
  const double tau = wide ? 0.1 : 0.5;

  // Encoder under the contrastive batch loss.
  EncoderConfig ec{d.vocab_size, 16, 12, Aggregation::kConcatAll};
  TraceEncoder<float> ef("enc", ec);
  TraceEncoder<double> ed("enc", ec);
  Rng rng(7);
  ef.init(rng);
  copy_values(ef.parameters(), ed.parameters());
  const auto af = ptrs(d.anchors), pf = ptrs(d.positives);
  LossFn<float> nce_f = [&](nn::Graph<float>& g) {
    return info_nce_batch_loss<float>(g, ef, af, pf, static_cast<float>(tau), false);
  };
  LossFn<double> nce_d = [&](nn::Graph<double>& g) {
    return info_nce_batch_loss<double>(g, ed, af, pf, tau, false);
  };
  const auto epf = ef.parameters();
  const auto epd = ed.parameters();
  out.push_back({"embedding table",
                 run_mode(wide, epf, nce_f, epd, nce_d, sample_coords(epd, {0}, pick, d.rows))});
  out.push_back({"frame-level biLSTM",
                 run_mode(wide, epf, nce_f, epd, nce_d,
                          sample_coords(epd, {1, 2, 3, 4, 5, 6}, pick))});
  out.push_back({"trace-level biLSTM",
                 run_mode(wide, epf, nce_f, epd, nce_d,
                          sample_coords(epd, {7, 8, 9, 10, 11, 12}, pick))});

  // InfoNCE on its own: gradients into the two embedding matrices.
  {
    std::mt19937_64 vr(8);
    std::normal_distribution<double> nd(0.0, 1.0);
    nn::Parameter<float> a_f("a", {6, 10}), p_f("p", {6, 10});
    for (auto* t : {&a_f, &p_f})
      for (auto& v : t->value.data()) v = static_cast<float>(nd(vr));
    nn::Parameter<double> a_d("a", {6, 10}), p_d("p", {6, 10});
    nn::ParameterList<float> lf{&a_f, &p_f};
    nn::ParameterList<double> ld{&a_d, &p_d};
    copy_values(lf, ld);
    LossFn<float> f = [&](nn::Graph<float>& g) {
      return nn::ops::info_nce(nn::ops::cosine_matrix(nn::ops::param(g, a_f), nn::ops::param(g, p_f)),
                               static_cast<float>(tau));
    };
    LossFn<double> dd = [&](nn::Graph<double>& g) {
      return nn::ops::info_nce(nn::ops::cosine_matrix(nn::ops::param(g, a_d), nn::ops::param(g, p_d)),
                               tau);
    };
    out.push_back({"InfoNCE loss", run_mode(wide, lf, f, ld, dd, sample_coords(ld, {0, 1}, pick))});
  }

  // Reranker under the triplet BCE loss.
  RerankerConfig rc;
  rc.d_tok = 16;
  rc.hidden_dim = 12;
  rc.mlp_hidden = {24, 12};
  RerankerNet<float> rf(d.vocab_size, rc);
  RerankerNet<double> rd(d.vocab_size, rc);
  Rng rr(9);
  rf.init(rr);
  std::mt19937_64 vr(10);
  std::uniform_real_distribution<float> u(-0.3f, 0.3f);
  for (auto& v : rf.significance().value.data()) v = u(vr);
  copy_values(rf.parameters(), rd.parameters());
  LossFn<float> bce_f = [&](nn::Graph<float>& g) {
    nn::Var<float> total;
    for (std::size_t i = 0; i < d.anchors.size(); ++i) {
      auto l = rf.triplet_loss(g, d.anchors[i], d.positives[i], d.negatives[i]);
      total = i == 0 ? l : nn::ops::add(total, l);
    }
    return total;
  };
  LossFn<double> bce_d = [&](nn::Graph<double>& g) {
    nn::Var<double> total;
    for (std::size_t i = 0; i < d.anchors.size(); ++i) {
      auto l = rd.triplet_loss(g, d.anchors[i], d.positives[i], d.negatives[i]);
      total = i == 0 ? l : nn::ops::add(total, l);
    }
    return total;
  };
  const auto rpf = rf.parameters();
  const auto rpd = rd.parameters();
  std::vector<std::size_t> mlp, all;
  for (std::size_t i = 14; i < rpd.size(); ++i) mlp.push_back(i);
  for (std::size_t i = 1; i < rpd.size(); ++i) all.push_back(i);
  out.push_back({"MLP head", run_mode(wide, rpf, bce_f, rpd, bce_d, sample_coords(rpd, mlp, pick))});
  // Table rows plus every dense parameter, significance vector included.
  auto pool = sample_coords(rpd, {0}, pick, d.rows);
  const auto rest = sample_coords(rpd, all, pick);
  pool.insert(pool.end(), rest.begin(), rest.end());
  std::shuffle(pool.begin(), pool.end(), pick);
  out.push_back({"BCE triplet loss", run_mode(wide, rpf, bce_f, rpd, bce_d, pool)});
  return out;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  Outcome o{Status::kPass, ""};
  for (bool wide : {false, true}) {
    o.detail += wide ? " 64-bit:" : " 32-bit:";
    for (const auto& p : gradient_paths(wide)) {
      const bool ok = p.r.ok() && p.r.checked >= 50;
      if (!ok) o.status = Status::kFail;
      o.detail += fmt(" %s %s %zu/%zu max %.1e%s;", p.name.c_str(), ok ? "ok" : "BAD",
                      p.r.checked - p.r.failed, p.r.checked, p.r.max_rel_error,
                      p.r.kinks ? fmt(" (%zu kinks skipped)", p.r.kinks).c_str() : "");
      if (!ok) o.detail += " worst " + p.r.worst + ";";
    }
  }
  const double s = seconds_since(t0);
  if (s >= 60) o.status = Status::kFail;
  o.detail += fmt(" %.1fs", s);
  return o;
}

// ---------------------------------------------------------------- criterion 2

std::vector<std::vector<float>> gaussian(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<std::vector<float>> v(n, std::vector<float>(dim));
  for (auto& x : v)
    for (auto& e : x) e = nd(rng);
  return v;
}

// Straight cosine from the raw vectors in double, ties toward lower index.
std::vector<std::pair<std::size_t, double>> brute_force(const std::vector<std::vector<float>>& vecs,
                                                        const std::vector<float>& q, std::size_t k) {
  auto norm = [](const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  const double nq = norm(q);
  std::vector<std::pair<std::size_t, double>> all(vecs.size());
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    double dot = 0;
    for (std::size_t j = 0; j < q.size(); ++j) dot += static_cast<double>(vecs[i][j]) * q[j];
    all[i] = {i, dot / (nq * norm(vecs[i]))};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const auto& a, const auto& b) {
                      return a.second > b.second || (a.second == b.second && a.first < b.first);
                    });
  all.resize(k);
  return all;
}

Outcome criterion_retrieval() {
  const auto t0 = Clock::now();
  Outcome o{Status::kPass, ""};
  {
    const auto vecs = gaussian(1000, 64, 1);
    const auto queries = gaussian(100, 64, 2);
    EmbeddingStore s(64, {}, false);
    for (std::size_t i = 0; i < vecs.size(); ++i) s.add("r" + std::to_string(i), vecs[i], "c");
    std::size_t same = 0;
    double max_dev = 0;
    for (const auto& q : queries) {
      const auto got = s.exact_search(q, 10);
      const auto want = brute_force(vecs, q, 10);
      bool eq = got.size() == want.size();
      for (std::size_t i = 0; eq && i < got.size(); ++i) {
        eq = got[i].index == want[i].first;
        max_dev = std::max(max_dev, std::abs(got[i].similarity - want[i].second));
      }
      same += eq;
    }
    if (same != queries.size() || max_dev > 1e-6) o.status = Status::kFail;
    o.detail += fmt(" exact: %zu/%zu identical top-10 lists, max score deviation %.1e;", same,
                    queries.size(), max_dev);
  }
  {
    const std::size_t n = 10'000, dim = 200, nq = 1000, k = 10, ef = 512;
    const auto vecs = gaussian(n, dim, 3);
    const auto queries = gaussian(nq, dim, 4);
    EmbeddingStore s(dim);  // default M and ef_construction
    for (std::size_t i = 0; i < n; ++i) s.add("r" + std::to_string(i), vecs[i], "c");
    const double build = seconds_since(t0);
    std::size_t hit_wide = 0, hit_default = 0;
    for (const auto& q : queries) {
      std::set<std::size_t> truth;
      for (const auto& h : s.exact_search(q, k)) truth.insert(h.index);
      for (const auto& h : s.ann_search(q, k, ef)) hit_wide += truth.count(h.index);
      for (const auto& h : s.ann_search(q, k)) hit_default += truth.count(h.index);
    }
    const double recall = static_cast<double>(hit_wide) / static_cast<double>(nq * k);
    const double recall_default = static_cast<double>(hit_default) / static_cast<double>(nq * k);
    if (recall < 0.95) o.status = Status::kFail;
    o.detail += fmt(" ann: recall@10 %.4f at ef_search=%zu (%.4f at the default %zu), build %.1fs;",
                    recall, ef, recall_default, s.params().ef_search, build);
  }
  const double secs = seconds_since(t0);
  if (secs >= 120) o.status = Status::kFail;
  o.detail += fmt(" %.1fs", secs);
  return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t ok_sets = 0, acc_ok = 0;
  std::string first_bad;
  const std::size_t rounds = 1000;
  for (std::size_t round = 0; round < rounds; ++round) {
    const auto set = testing::random_event_set(rng);
    const auto r = testing::compare_with_oracles(set);
    if (r.ok) ++ok_sets;
    else if (first_bad.empty()) first_bad = r.detail;

    // Acc@1 on events built from the same scores.
    std::vector<EvalEvent> events;
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
      EvalEvent e;
      e.truth_new = set.is_new[i];
      e.true_category = "c" + std::to_string(rng() % 4);
      e.skipped = rng() % 10 == 0;
      if (!std::isinf(set.scores[i]))
        e.prediction = std::vector<CategoryScore>{{"c" + std::to_string(rng() % 4), set.scores[i]}};
      if (!e.skipped && !e.truth_new) {
        ++n;
        hit += e.prediction && e.prediction->front().category_id == e.true_category;
      }
      events.push_back(std::move(e));
    }
    const auto got = acc_at_1(events);
    const bool same = n == 0 ? !got.has_value()
                             : got && std::abs(*got - static_cast<double>(hit) / n) <= 1e-12;
    acc_ok += same;
  }
  Outcome o;
  const double secs = seconds_since(t0);
  o.status = ok_sets == rounds && acc_ok == rounds && secs < 60 ? Status::kPass : Status::kFail;
  o.detail = fmt(" AUC and threshold agree with the pairwise / exhaustive oracles on %zu/%zu sets,"
                 " Acc@1 on %zu/%zu; %.1fs",
                 ok_sets, rounds, acc_ok, rounds, secs);
  if (!first_bad.empty()) o.detail += " first mismatch: " + first_bad;
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_closed_form() {
  nn::Graph<double> g(false);
  const double nce = nn::ops::info_nce(nn::ops::constant(g, nn::Tensor<double>({2, 2}, 0.0)), 1.0)
                         .value()[0];
  auto zero = nn::ops::constant(g, nn::Tensor<double>::scalar(0.0));
  const double bce = nn::ops::bce_triplet(zero, zero).value()[0];
  nn::Graph<float> gf(false);
  const double nce_f =
      nn::ops::info_nce(nn::ops::constant(gf, nn::Tensor<float>({2, 2}, 0.0f)), 1.0f).value()[0];
  auto zf = nn::ops::constant(gf, nn::Tensor<float>::scalar(0.0f));
  const double bce_f = nn::ops::bce_triplet(zf, zf).value()[0];
  const double ln2 = std::log(2.0);
  const bool ok = std::abs(nce - ln2) <= 1e-6 && std::abs(bce - 2 * ln2) <= 1e-6 &&
                  std::abs(nce_f - ln2) <= 1e-6 && std::abs(bce_f - 2 * ln2) <= 1e-6;
  return {ok ? Status::kPass : Status::kFail,
          fmt(" InfoNCE %.9f (ln2 %.9f), BCE %.9f (2ln2 %.9f); 32-bit %.9f, %.9f", nce, ln2, bce,
              2 * ln2, nce_f, bce_f)};
}

// ---------------------------------------------------------------- criterion 5

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::istringstream in;
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, nlohmann::json> by_pipeline(const std::string& jsonl) {
  std::map<std::string, nlohmann::json> out;
  std::istringstream ss(jsonl);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line);
      out[j["pipeline"].get<std::string>()] = j;
    }
  return out;
}

double num(const nlohmann::json& j, const char* key) {
  return j.contains(key) && j[key].is_number() ? j[key].get<double>()
                                               : std::numeric_limits<double>::quiet_NaN();
}

Outcome criterion_synthetic(const fs::path& work, const std::string& recipe) {
  const auto t0 = Clock::now();
  const fs::path state = work / "synthetic";
  fs::remove_all(state);
  fs::create_directories(state);
  const fs::path data = work / "synthetic.jsonl";
  save_reports(data, generate_synthetic(SyntheticConfig{}));

  auto r = cli({"ingest", "--input", data.string(), "--state", state.string()});
  if (r.code != 0) return {Status::kFail, " ingest failed: " + r.err};
  std::vector<std::string> train{"train", "--state", state.string()};
  if (!recipe.empty()) {
    train.push_back("--config");
    train.push_back(recipe);
  }
  r = cli(train);
  if (r.code != 0) return {Status::kFail, " train failed: " + r.err};
  const double train_s = seconds_since(t0);
  r = cli({"eval", "--state", state.string(), "--pipelines", "embedder,reranked,edit", "--json"});
  if (r.code != 0) return {Status::kFail, " eval failed: " + r.err};
  const double secs = seconds_since(t0);

  auto m = by_pipeline(r.out);
  const double emb = num(m["embedder"], "acc_at_1");
  const double rr = num(m["reranked"], "acc_at_1");
  const double edit = num(m["edit"], "acc_at_1");
  const double auc_emb = num(m["embedder"], "roc_auc");
  const double auc_rr = num(m["reranked"], "roc_auc");
  const bool ok = emb >= 0.90 && rr >= emb - 0.01 && auc_emb >= 0.90 && auc_rr >= 0.90 &&
                  emb > edit && rr > edit && secs < 1800;
  return {ok ? Status::kPass : Status::kFail,
          fmt(" Acc@1 embedder %.4f, reranked %.4f, edit %.4f; ROC-AUC embedder %.4f, reranked"
              " %.4f; train %.0fs, total %.0fs (recipe %s)",
              emb, rr, edit, auc_emb, auc_rr, train_s, secs,
              recipe.empty() ? "defaults" : fs::path(recipe).filename().c_str())};
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion_latency() {
  const auto t0 = Clock::now();
  SyntheticConfig sc;
  sc.categories = 260;
  sc.seed = 99;
  auto reports = generate_synthetic(sc);
  const std::size_t store = 10'000, nq = 100;
  if (reports.size() < store + nq) return {Status::kFail, " not enough synthetic reports"};
  std::vector<StackTrace> history(reports.begin(), reports.begin() + store);
  std::vector<StackTrace> queries(reports.begin() + store, reports.begin() + store + nq);
  const auto vocab = BpeVocab::train(history, TokenizerConfig{}.vocab_size);

  // Fresh models at the default architecture; weights do not change cost.
  EmbedderModel emb(vocab.size(), EmbedderConfig{});
  emb.init();
  RerankerModel rer(vocab.size(), RerankerConfig{});
  rer.init();
  PipelineOptions po;
  auto retrieval = make_embedder_pipeline(emb, vocab, TokenizerConfig{}, po);
  for (const auto& t : history) retrieval->add(t, *t.category_id);
  RerankedPipeline reranked(emb, rer, vocab, TokenizerConfig{}, po);
  reranked.reset();
  reranked.store() = retrieval->store();
  for (const auto& t : history) reranked.register_trace(t);
  const double setup = seconds_since(t0);

  LatencyOptions lo;
  lo.warmup = 10;
  const auto a = measure_latency(*retrieval, queries, lo);
  const auto b = measure_latency(reranked, queries, lo);
  const double secs = seconds_since(t0);
  const double ratio = b.total.mean_ms / a.total.mean_ms;
  const bool ok = a.total.mean_ms < b.total.mean_ms / 5 && secs < 300;
  return {ok ? Status::kPass : Status::kFail,
          fmt(" store %zu, %zu queries: retrieval-only %.2f ms (p95 %.2f), reranked K=10 %.2f ms"
              " (retrieval %.2f + rerank %.2f), ratio %.1fx; setup %.0fs, total %.0fs",
              retrieval->size(), nq, a.total.mean_ms, a.total.p95_ms, b.total.mean_ms,
              b.retrieval.mean_ms, b.rerank.mean_ms, ratio, setup, secs)};
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion_real_dataset(const fs::path& work) {
  const char* path = std::getenv("STACKDEDUP_UBUNTU_DATASET");
  if (!path || !*path)
    return {Status::kSkip, " set STACKDEDUP_UBUNTU_DATASET to the Ubuntu dataset file to run"};
  const fs::path state = work / "ubuntu";
  fs::remove_all(state);
  auto r = cli({"ingest", "--input", path, "--adapter", "ubuntu", "--state", state.string()});
  if (r.code != 0) return {Status::kFail, " ingest failed: " + r.err};
  r = cli({"train", "--state", state.string()});
  if (r.code != 0) return {Status::kFail, " train failed: " + r.err};
  r = cli({"eval", "--state", state.string(), "--pipelines", "embedder,reranked", "--json"});
  if (r.code != 0) return {Status::kFail, " eval failed: " + r.err};
  auto m = by_pipeline(r.out);
  const double emb = num(m["embedder"], "acc_at_1");
  const double rr = num(m["reranked"], "acc_at_1");
  const bool ok = emb >= 0.50 && rr >= 0.55 && rr >= emb - 0.01;
  return {ok ? Status::kPass : Status::kFail,
          fmt(" Acc@1 embedder %.4f, reranked %.4f", emb, rr)};
}

// ---------------------------------------------------------------- criterion 8

bool same_tokens(const TokenizedTrace& a, const TokenizedTrace& b) {
  return a.frames == b.frames && a.frame_keys == b.frame_keys;
}

bool same_hits(const std::vector<SearchHit>& a, const std::vector<SearchHit>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].index != b[i].index || a[i].report_id != b[i].report_id ||
        a[i].category_id != b[i].category_id || a[i].similarity != b[i].similarity)
      return false;
  return true;
}

Outcome criterion_persistence(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path dir = work / "persistence";
  fs::create_directories(dir);
  SyntheticConfig sc;
  sc.categories = 20;
  sc.variants_per_category = 10;
  sc.seed = 5;
  const auto reports = generate_synthetic(sc);
  const auto vocab = BpeVocab::train(reports, 2000);
  vocab.save(dir / "vocab.json");
  const auto vocab2 = BpeVocab::load(dir / "vocab.json");
  std::size_t vocab_same = 0;
  for (const auto& t : reports)
    vocab_same +=
        same_tokens(encode_trace(t, vocab, TokenizerConfig{}), encode_trace(t, vocab2, TokenizerConfig{}));

  EmbedderConfig ec;
  ec.d_tok = 32;
  ec.hidden_dim = 32;
  EmbedderModel emb(vocab.size(), ec);
  emb.init();
  RerankerConfig rc;
  rc.d_tok = 32;
  rc.hidden_dim = 32;
  RerankerModel rer(vocab.size(), rc);
  rer.init();
  std::mt19937_64 vr(6);
  std::uniform_real_distribution<float> u(-0.2f, 0.2f);
  for (auto& v : rer.net().significance().value.data()) v = u(vr);
  emb.save(dir / "embedder.sdw");
  rer.save(dir / "reranker.sdw");
  auto emb2 = EmbedderModel::load(dir / "embedder.sdw");
  auto rer2 = RerankerModel::load(dir / "reranker.sdw");

  std::vector<TokenizedTrace> tok;
  for (const auto& t : reports) tok.push_back(encode_trace(t, vocab2, TokenizerConfig{}));
  std::size_t emb_same = 0, rer_same = 0;
  EmbeddingStore store(emb.dim());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto v = emb.embed(tok[i]);
    emb_same += v == emb2.embed(tok[i]);
    const auto& other = tok[(i * 7 + 3) % tok.size()];
    rer_same += rer.score_pair(tok[i], other) == rer2.score_pair(tok[i], other);
    store.add(reports[i].report_id, v, *reports[i].category_id);
  }
  store.save(dir / "index.sdix");
  const auto store2 = EmbeddingStore::load(dir / "index.sdix");
  std::size_t idx_same = 0;
  const std::size_t nq = 100;
  for (std::size_t i = 0; i < nq; ++i) {
    const auto q = emb2.embed(tok[(i * 13) % tok.size()]);
    idx_same += same_hits(store.exact_search(q, 10), store2.exact_search(q, 10)) &&
                same_hits(store.ann_search(q, 10), store2.ann_search(q, 10));
  }
  const std::size_t n = reports.size();
  const double secs = seconds_since(t0);
  const bool ok = vocab_same == n && emb_same == n && rer_same == n && idx_same == nq && secs < 60;
  return {ok ? Status::kPass : Status::kFail,
          fmt(" identical after reload: vocab encodings %zu/%zu, embeddings %zu/%zu, reranker"
              " scores %zu/%zu, exact+ann search %zu/%zu; %.1fs",
              vocab_same, n, emb_same, n, rer_same, n, idx_same, nq, secs)};
}

}  // namespace
}  // namespace stackdedup

int main(int argc, char** argv) {
  using namespace stackdedup;
  CLI::App app("stackdedup acceptance checks");
  std::string workdir = (fs::temp_directory_path() / "stackdedup-acceptance").string();
  std::string recipe = STACKDEDUP_ACCEPTANCE_RECIPE;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for datasets and state");
  app.add_option("--recipe", recipe, "Config file for the synthetic end-to-end run");
  app.add_option("--only", only, "Criterion numbers to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"retrieval oracle", criterion_retrieval},
      {"metric oracles", criterion_metrics},
      {"closed-form losses", criterion_closed_form},
      {"synthetic end-to-end", [&] { return criterion_synthetic(workdir, recipe); }},
      {"latency ordering", criterion_latency},
      {"real dataset (Ubuntu)", [&] { return criterion_real_dataset(workdir); }},
      {"persistence round trips", [&] { return criterion_persistence(workdir); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string(" threw: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    failed += o.status == Status::kFail;
    std::cout << "[" << tag << "] " << number << " " << criteria[i].first << ":" << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
