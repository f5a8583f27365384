// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include "stackdedup/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "stackdedup/rng.hpp"

namespace stackdedup {

namespace {

constexpr std::array kPackages = {
    "core", "io", "net", "ui", "util", "model", "render", "index",
    "vfs", "editor", "search", "psi", "lang", "debug", "build", "sync"};
constexpr std::array kNouns = {
    "Editor", "Document", "File", "Cache", "Stream", "Buffer", "Index",
    "Task", "Queue", "Node", "Tree", "Model", "View", "Frame", "Panel",
    "Action", "Event", "Handler", "Manager", "Service", "Provider",
    "Registry", "Session", "Project", "Module", "Parser", "Lexer",
    "Token", "Scope", "Symbol", "Reference", "Resolver", "Worker",
    "Thread", "Lock", "Pool", "Socket", "Channel", "Client", "Server"};
constexpr std::array kSuffixes = {"Impl", "Base", "Util", "Factory", "Helper",
                                  "", "", ""};
constexpr std::array kVerbs = {"get", "set", "run", "load", "save", "find",
                               "create", "update", "resolve", "dispatch",
                               "invoke", "compute", "flush", "read", "write",
                               "visit", "process", "handle", "check", "apply"};

std::string pick_name(Rng& rng) {
  auto pick = [&rng](const auto& arr) {
    return std::string(arr[rng.below(arr.size())]);
  };
  std::string cls = pick(kNouns) + pick(kSuffixes);
  if (rng.below(3) == 0) cls = pick(kNouns) + cls;
  std::string method = pick(kVerbs) + pick(kNouns);
  return "com.acme." + pick(kPackages) + "." + cls + "." + method;
}

}  // namespace

std::vector<std::string> synthetic_frame_pool(const SyntheticConfig& config) {
  if (config.framework_frames >= config.frame_vocabulary)
    throw std::invalid_argument("framework_frames must be below frame_vocabulary");
  Rng rng(config.seed * 0x100000001b3ULL + 11);
  std::set<std::string> used;
  std::vector<std::string> pool;
  while (pool.size() < config.frame_vocabulary) {
    std::string name = pick_name(rng);
    if (used.insert(name).second) pool.push_back(std::move(name));
  }
  return pool;
}

std::vector<StackTrace> generate_synthetic(const SyntheticConfig& c) {
  if (c.categories == 0 || c.variants_per_category == 0)
    throw std::invalid_argument("synthetic: need categories and variants");
  if (c.min_length == 0 || c.min_length > c.max_length)
    throw std::invalid_argument("synthetic: bad length range");
  if (c.distinctive_min > c.distinctive_max || c.families == 0)
    throw std::invalid_argument("synthetic: bad family settings");
  if (c.unseen_min_reports == 0 || c.unseen_min_reports > c.unseen_max_reports)
    throw std::invalid_argument("synthetic: bad unseen report range");

  const auto pool = synthetic_frame_pool(c);
  const std::size_t vocab = pool.size();
  const std::size_t fw = c.framework_frames;
  Rng rng(c.seed);

  std::vector<std::vector<std::size_t>> families(c.families);
  for (auto& chain : families)
    for (std::size_t i = 0; i < c.max_length; ++i)
      chain.push_back(rng.below(fw));

  auto make_base = [&]() {
    const auto len = static_cast<std::size_t>(
        rng.range(static_cast<std::int64_t>(c.min_length),
                  static_cast<std::int64_t>(c.max_length)));
    const auto& chain = families[rng.below(families.size())];
    std::vector<std::size_t> base(chain.begin(), chain.begin() + len);
    const auto d = static_cast<std::size_t>(
        rng.range(static_cast<std::int64_t>(c.distinctive_min),
                  static_cast<std::int64_t>(c.distinctive_max)));
    for (std::size_t k = 0; k < d; ++k)
      base[rng.below(std::min(len, c.distinctive_depth))] =
          fw + rng.below(vocab - fw);
    return base;
  };
  // Each frame independently, with probability noise_rate: a random frame is
  // inserted before it, it is deleted, or it is replaced.
  auto make_variant = [&](const std::vector<std::size_t>& base) {
    std::vector<std::size_t> out;
    for (std::size_t f : base) {
      if (rng.uniform() < c.noise_rate) {
        switch (rng.below(3)) {
          case 0:
            out.push_back(rng.below(vocab));
            out.push_back(f);
            break;
          case 1:
            break;
          default:
            out.push_back(rng.below(vocab));
        }
      } else {
        out.push_back(f);
      }
    }
    if (out.empty()) out.push_back(base.front());
    return out;
  };

  struct Draft {
    std::string category;
    std::vector<std::size_t> frames;
  };
  char buf[32];
  std::vector<Draft> seen;
  for (std::size_t cat = 0; cat < c.categories; ++cat) {
    std::snprintf(buf, sizeof buf, "c%03zu", cat);
    const auto base = make_base();
    for (std::size_t v = 0; v < c.variants_per_category; ++v)
      seen.push_back({buf, make_variant(base)});
  }
  rng.shuffle(seen);

  // Smallest total size whose validation/test windows hold the unseen share
  // while all seen reports still fit.
  const std::size_t seen_total = seen.size();
  std::size_t total = seen_total, unseen_val = 0, unseen_test = 0;
  for (std::size_t n = std::max<std::size_t>(seen_total, 3);; ++n) {
    const auto sizes = split_sizes(n);
    const auto a = static_cast<std::size_t>(
        std::llround(c.unseen_fraction * static_cast<double>(sizes.validation)));
    const auto b = static_cast<std::size_t>(
        std::llround(c.unseen_fraction * static_cast<double>(sizes.test)));
    if (n - a - b >= seen_total) {
      total = n;
      unseen_val = a;
      unseen_test = b;
      // Overshoot by one goes to the validation window's unseen share.
      unseen_val += n - a - b - seen_total;
      break;
    }
  }
  const auto sizes = split_sizes(total);

  std::size_t novel_id = 0;
  auto add_unseen = [&](std::vector<Draft>& window, std::size_t count) {
    std::size_t added = 0;
    while (added < count) {
      std::snprintf(buf, sizeof buf, "n%03zu", novel_id++);
      const auto base = make_base();
      auto k = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(c.unseen_min_reports),
                    static_cast<std::int64_t>(c.unseen_max_reports)));
      k = std::min(k, count - added);
      for (std::size_t i = 0; i < k; ++i) window.push_back({buf, make_variant(base)});
      added += k;
    }
  };

  std::vector<Draft> ordered(seen.begin(), seen.begin() + sizes.train);
  std::size_t next_seen = sizes.train;
  for (auto [window_size, unseen] : {std::pair{sizes.validation, unseen_val},
                                     std::pair{sizes.test, unseen_test}}) {
    std::vector<Draft> window(seen.begin() + next_seen,
                              seen.begin() + next_seen + (window_size - unseen));
    next_seen += window_size - unseen;
    add_unseen(window, unseen);
    rng.shuffle(window);
    ordered.insert(ordered.end(), window.begin(), window.end());
  }

  std::vector<StackTrace> reports;
  reports.reserve(ordered.size());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    StackTrace t;
    std::snprintf(buf, sizeof buf, "r%05zu", i);
    t.report_id = buf;
    t.timestamp = c.start_timestamp + static_cast<std::int64_t>(i) * 60'000;
    for (std::size_t f : ordered[i].frames) t.frames.emplace_back(pool[f]);
    t.category_id = ordered[i].category;
    reports.push_back(std::move(t));
  }
  return reports;
}

}  // namespace stackdedup
