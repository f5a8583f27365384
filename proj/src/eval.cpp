// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/eval.hpp"

#include <sched.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "stackdedup/errors.hpp"
#include "stackdedup/kernels.hpp"

namespace stackdedup {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::string& label_of(const StackTrace& t, const char* role) {
  if (!t.category_id)
    throw DataError(std::string(role) + " report " + t.report_id + " has no category_id");
  return *t.category_id;
}

struct Scored {
  std::vector<double> scores;
  std::vector<char> is_new;
};

Scored scored_events(std::span<const EvalEvent> events) {
  Scored out;
  for (const auto& e : events) {
    if (e.skipped) continue;
    out.scores.push_back(e.top_score());
    out.is_new.push_back(e.truth_new ? 1 : 0);
  }
  return out;
}

void check_classes(std::span<const char> is_new, const char* what) {
  const auto n_new = std::count(is_new.begin(), is_new.end(), char{1});
  if (n_new == 0 || n_new == static_cast<std::ptrdiff_t>(is_new.size()))
    throw std::invalid_argument(std::string(what) +
                                ": need both attach and new-category events");
}

// Linear interpolation between closest ranks.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Restricts the calling thread to the core it is running on, restoring the
// previous mask on destruction. Best effort: failures leave scheduling alone.
class CorePin {
 public:
  CorePin() {
    if (sched_getaffinity(0, sizeof(saved_), &saved_) != 0) return;
    const int cpu = sched_getcpu();
    if (cpu < 0) return;
    cpu_set_t one;
    CPU_ZERO(&one);
    CPU_SET(cpu, &one);
    active_ = sched_setaffinity(0, sizeof(one), &one) == 0;
  }
  ~CorePin() {
    if (active_) sched_setaffinity(0, sizeof(saved_), &saved_);
  }
  CorePin(const CorePin&) = delete;
  CorePin& operator=(const CorePin&) = delete;

 private:
  cpu_set_t saved_{};
  bool active_ = false;
};

class SerialKernels {
 public:
  SerialKernels() : saved_(kernels::backend()) { kernels::set_backend(kernels::Backend::kSerial); }
  ~SerialKernels() { kernels::set_backend(saved_); }
  SerialKernels(const SerialKernels&) = delete;
  SerialKernels& operator=(const SerialKernels&) = delete;

 private:
  kernels::Backend saved_;
};

nlohmann::json stage_json(const StageStats& s) {
  return {{"mean_ms", s.mean_ms},
          {"p50_ms", s.p50_ms},
          {"p95_ms", s.p95_ms},
          {"stddev_ms", s.stddev_ms}};
}

template <class T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double EvalEvent::top_score() const {
  if (!prediction || prediction->empty()) return -kInf;
  return prediction->front().score;
}

std::string EvalEvent::top_category() const {
  if (!prediction || prediction->empty()) return {};
  return prediction->front().category_id;
}

std::vector<EvalEvent> replay(SimilarityPipeline& pipeline,
                              const std::vector<StackTrace>& history,
                              std::vector<StackTrace> queries) {
  sort_by_arrival(queries);
  for (const auto& q : queries) label_of(q, "test");

  pipeline.reset();
  std::unordered_set<ContentHash> seen;
  std::unordered_set<std::string> categories;
  for (const auto& h : history) {
    const auto& c = label_of(h, "history");
    pipeline.add(h, c);
    seen.insert(content_hash(h));
    categories.insert(c);
  }

  std::vector<EvalEvent> events;
  events.reserve(queries.size());
  for (const auto& q : queries) {
    EvalEvent e;
    e.report_id = q.report_id;
    e.true_category = *q.category_id;
    e.truth_new = !categories.contains(e.true_category);
    e.skipped = !seen.insert(content_hash(q)).second;
    if (!e.skipped && pipeline.size() > 0) {
      auto r = pipeline.rank(q);
      e.prediction = std::move(r.categories);
      e.retrieval_ms = r.retrieval_ms;
      e.rerank_ms = r.rerank_ms;
    }
    pipeline.add(q, e.true_category);
    categories.insert(e.true_category);
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<EvalEvent> replay_test(SimilarityPipeline& pipeline, const DatasetSplit& split) {
  std::vector<StackTrace> history = split.train;
  history.insert(history.end(), split.validation.begin(), split.validation.end());
  return replay(pipeline, history, split.test);
}

std::vector<EvalEvent> replay_validation(SimilarityPipeline& pipeline,
                                         const DatasetSplit& split) {
  return replay(pipeline, split.train, split.validation);
}

std::optional<double> acc_at_1(std::span<const EvalEvent> events) {
  std::size_t n = 0;
  std::size_t hit = 0;
  for (const auto& e : events) {
    if (e.skipped || e.truth_new) continue;
    ++n;
    if (e.top_category() == e.true_category) ++hit;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(n);
}

double roc_auc(std::span<const double> scores, std::span<const char> is_new) {
  if (scores.size() != is_new.size())
    throw std::invalid_argument("roc_auc: scores and labels differ in length");
  check_classes(is_new, "roc_auc");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney: sum of attach mid-ranks.
  double rank_sum = 0.0;
  std::size_t n_attach = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (!is_new[order[t]]) {
        rank_sum += mid;
        ++n_attach;
      }
    }
    i = j;
  }
  const double na = static_cast<double>(n_attach);
  const double nn = static_cast<double>(scores.size() - n_attach);
  return (rank_sum - na * (na + 1.0) / 2.0) / (na * nn);
}

double roc_auc_new_category(std::span<const EvalEvent> events) {
  const auto s = scored_events(events);
  return roc_auc(s.scores, s.is_new);
}

double f1_new_category(std::span<const double> scores, std::span<const char> is_new,
                       double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_new = scores[i] <= threshold;
    if (predicted_new && is_new[i]) ++tp;
    else if (predicted_new) ++fp;
    else if (is_new[i]) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double f1_new_category(std::span<const EvalEvent> events, double threshold) {
  const auto s = scored_events(events);
  return f1_new_category(s.scores, s.is_new, threshold);
}

Calibration calibrate_threshold(std::span<const double> scores,
                                std::span<const char> is_new) {
  if (scores.size() != is_new.size())
    throw std::invalid_argument("calibrate_threshold: scores and labels differ in length");
  check_classes(is_new, "calibrate_threshold");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const auto total_new =
      static_cast<std::size_t>(std::count(is_new.begin(), is_new.end(), char{1}));
  // Threshold -inf predicts new only for -inf scores.
  std::size_t prefix = 0, tp = 0;
  auto f1_here = [&] {
    const std::size_t fp = prefix - tp;
    const std::size_t fn = total_new - tp;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  };
  while (prefix < order.size() && scores[order[prefix]] == -kInf) tp += is_new[order[prefix++]];
  Calibration best{-kInf, f1_here()};

  // Sweep the sorted scores; after each distinct group the candidate is the
  // midpoint to the next score, or +inf after the last.
  while (prefix < order.size()) {
    const double s = scores[order[prefix]];
    while (prefix < order.size() && scores[order[prefix]] == s) tp += is_new[order[prefix++]];
    double t = kInf;
    if (prefix < order.size()) {
      const double next = scores[order[prefix]];
      t = s == -kInf ? -kInf : s + (next - s) / 2.0;
    }
    const double f = f1_here();
    if (f > best.f1) best = {t, f};
  }
  return best;
}

Calibration calibrate_threshold(std::span<const EvalEvent> events) {
  const auto s = scored_events(events);
  return calibrate_threshold(s.scores, s.is_new);
}

StageStats stage_stats(std::vector<double> samples_ms) {
  StageStats s;
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(samples_ms.size());
  double var = 0.0;
  for (double v : samples_ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.stddev_ms = std::sqrt(var / static_cast<double>(samples_ms.size()));
  s.p50_ms = quantile(samples_ms, 0.50);
  s.p95_ms = quantile(samples_ms, 0.95);
  return s;
}

namespace {

LatencyStats latency_from_samples(const std::vector<double>& a, const std::vector<double>& b) {
  LatencyStats out;
  std::vector<double> total(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) total[i] = a[i] + b[i];
  out.retrieval = stage_stats(a);
  out.rerank = stage_stats(b);
  out.total = stage_stats(total);
  out.queries = a.size();
  return out;
}

}  // namespace

LatencyStats measure_latency(SimilarityPipeline& pipeline,
                             const std::vector<StackTrace>& history,
                             const std::vector<StackTrace>& queries,
                             LatencyOptions options) {
  if (queries.empty()) throw std::invalid_argument("measure_latency: no queries");
  pipeline.reset();
  for (const auto& h : history) pipeline.add(h, h.category_id.value_or(h.report_id));
  return measure_latency(pipeline, queries, options);
}

LatencyStats measure_latency(SimilarityPipeline& pipeline,
                             const std::vector<StackTrace>& queries,
                             LatencyOptions options) {
  if (queries.empty()) throw std::invalid_argument("measure_latency: no queries");

  std::optional<SerialKernels> serial;
  std::optional<CorePin> pin;
  if (options.single_thread) {
    serial.emplace();
    pin.emplace();
  }
  std::vector<double> a, b;
  for (std::size_t i = 0; i < options.warmup + queries.size(); ++i) {
    const auto r = pipeline.rank(queries[i % queries.size()]);
    if (i < options.warmup) continue;
    a.push_back(r.retrieval_ms);
    b.push_back(r.rerank_ms);
  }
  return latency_from_samples(a, b);
}

LatencyStats latency_from_events(std::span<const EvalEvent> events, std::size_t warmup) {
  std::vector<double> a, b;
  std::size_t seen = 0;
  for (const auto& e : events) {
    if (e.skipped || !e.prediction) continue;
    if (seen++ < warmup) continue;
    a.push_back(e.retrieval_ms);
    b.push_back(e.rerank_ms);
  }
  return latency_from_samples(a, b);
}

EventCounts count_events(std::span<const EvalEvent> events) {
  EventCounts c;
  for (const auto& e : events) {
    if (e.skipped) ++c.skipped;
    else if (e.truth_new) ++c.new_category;
    else ++c.attached;
  }
  return c;
}

MetricsReport evaluate(SimilarityPipeline& pipeline, const DatasetSplit& split,
                       std::size_t latency_warmup, std::vector<EvalEvent>* test_events) {
  MetricsReport m;
  m.pipeline = pipeline.name();
  const auto validation = replay_validation(pipeline, split);
  try {
    m.calibration = calibrate_threshold(validation);
  } catch (const std::invalid_argument&) {
    m.calibration = std::nullopt;
  }

  auto events = replay_test(pipeline, split);
  m.acc_at_1 = acc_at_1(events);
  try {
    m.roc_auc = roc_auc_new_category(events);
  } catch (const std::invalid_argument&) {
    m.roc_auc = std::nullopt;
  }
  if (m.calibration) m.f1_at_threshold = f1_new_category(events, m.calibration->threshold);
  m.latency = latency_from_events(events, latency_warmup);
  m.counts = count_events(events);
  if (test_events) *test_events = std::move(events);
  return m;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["pipeline"] = r.pipeline;
  j["acc_at_1"] = optional_json(r.acc_at_1);
  j["roc_auc"] = optional_json(r.roc_auc);
  if (r.calibration) {
    // JSON has no infinity; an unbounded threshold is written as a string.
    const double t = r.calibration->threshold;
    j["threshold"] = std::isinf(t) ? nlohmann::json(t > 0 ? "inf" : "-inf") : nlohmann::json(t);
    j["validation_f1"] = r.calibration->f1;
  } else {
    j["threshold"] = nullptr;
    j["validation_f1"] = nullptr;
  }
  j["f1_at_threshold"] = optional_json(r.f1_at_threshold);
  j["latency"] = {{"retrieval", stage_json(r.latency.retrieval)},
                  {"rerank", stage_json(r.latency.rerank)},
                  {"total", stage_json(r.latency.total)},
                  {"queries", r.latency.queries}};
  j["counts"] = {{"attached", r.counts.attached},
                 {"new", r.counts.new_category},
                 {"skipped", r.counts.skipped}};
  return j;
}

nlohmann::json to_json(const EvalEvent& e) {
  nlohmann::json j;
  j["report_id"] = e.report_id;
  j["truth"] = e.truth_new ? nlohmann::json("new") : nlohmann::json(e.true_category);
  j["true_category"] = e.true_category;
  j["skipped"] = e.skipped;
  if (e.prediction) {
    auto arr = nlohmann::json::array();
    for (const auto& c : *e.prediction) arr.push_back(nlohmann::json::array({c.category_id, c.score}));
    j["prediction"] = std::move(arr);
  } else {
    j["prediction"] = nullptr;
  }
  j["retrieval_ms"] = e.retrieval_ms;
  j["rerank_ms"] = e.rerank_ms;
  return j;
}

std::string format_table(std::span<const MetricsReport> reports, const std::string& dataset) {
  auto fmt = [](const std::optional<double>& v, int digits) {
    if (!v) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << *v;
    return os.str();
  };
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"pipeline", "Acc@1", "ROC-AUC", "T", "F1", "mean ms", "p95 ms",
                  "attach/new/skip"});
  for (const auto& r : reports) {
    std::optional<double> t, f1;
    if (r.calibration) t = r.calibration->threshold;
    rows.push_back({r.pipeline, fmt(r.acc_at_1, 3), fmt(r.roc_auc, 3), fmt(t, 3),
                    fmt(r.f1_at_threshold, 3), fmt(r.latency.total.mean_ms, 2),
                    fmt(r.latency.total.p95_ms, 2),
                    std::to_string(r.counts.attached) + "/" +
                        std::to_string(r.counts.new_category) + "/" +
                        std::to_string(r.counts.skipped)});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::ostringstream os;
  if (!dataset.empty()) os << dataset << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) os << "  ";
      if (c == 0) os << std::left << std::setw(static_cast<int>(width[c])) << rows[r][c];
      else os << std::right << std::setw(static_cast<int>(width[c])) << rows[r][c];
    }
    os << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }
  return os.str();
}

void write_events(std::ostream& out, std::span<const EvalEvent> events) {
  for (const auto& e : events) out << to_json(e).dump() << "\n";
}

}  // namespace stackdedup
