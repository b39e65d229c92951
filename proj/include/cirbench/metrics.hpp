/*
 * Copyright 2026 The cirbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CIRBENCH_METRICS_HPP_
#define CIRBENCH_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cirbench/error.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

enum class PoolMode { kGlobal, kSubset };

inline PoolMode parse_pool_mode(std::string_view s) {
  if (s == "global") return PoolMode::kGlobal;
  if (s == "subset") return PoolMode::kSubset;
  throw UsageError("pool must be 'global' or 'subset', got '" + std::string(s) + "'");
}

struct Candidate {
  ImageId id;
  std::span<const double> feature;
};

/// Orders the pool by ascending Euclidean distance to the query, ties by id.
/// gold_rank is filled when gold is given and present in the pool.
inline RankingResult rank_candidates(std::span<const double> query, std::span<const Candidate> pool,
                                     const std::optional<ImageId>& gold = std::nullopt,
                                     std::uint64_t pair_id = 0) {
  if (pool.empty()) throw DataError("rank_candidates: empty candidate pool");
  struct Scored {
    double distance;
    const ImageId* id;
  };
  std::vector<Scored> scored;
  scored.reserve(pool.size());
  for (const auto& c : pool) {
    if (c.feature.size() != query.size()) {
      throw DataError("rank_candidates: dimension mismatch for " + c.id.str());
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      const double d = query[i] - c.feature[i];
      sq += d * d;
    }
    if (!std::isfinite(sq)) throw NumericalError("rank_candidates: non-finite distance to " + c.id.str());
    scored.push_back({sq, &c.id});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return *a.id < *b.id;
  });
  RankingResult result;
  result.pair_id = pair_id;
  result.candidates.reserve(scored.size());
  for (const auto& s : scored) result.candidates.push_back(*s.id);
  if (gold) {
    const auto it = std::find(result.candidates.begin(), result.candidates.end(), *gold);
    if (it != result.candidates.end()) {
      result.gold_rank = static_cast<std::size_t>(it - result.candidates.begin()) + 1;
    }
  }
  return result;
}

inline void check_k(std::size_t k) {
  if (k < 1) throw UsageError("K must be at least 1");
}

/// 100 x fraction of results whose gold target ranks within the top K.
/// A result without gold_rank counts as a miss.
inline double recall_at_k(std::span<const RankingResult> results, std::size_t k) {
  check_k(k);
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) hits += (r.gold_rank && *r.gold_rank <= k) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

/// With a single relevant item per query, AP@K is 1/rank inside the cut-off
/// and 0 outside.
inline double map_at_k(std::span<const RankingResult> results, std::size_t k) {
  check_k(k);
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : results) {
    if (r.gold_rank && *r.gold_rank <= k) sum += 1.0 / static_cast<double>(*r.gold_rank);
  }
  return 100.0 * sum / static_cast<double>(results.size());
}

/// Expected Recall@K of a uniformly random ranking over pool_size candidates.
inline double theoretical_random(std::size_t pool_size, std::size_t k) {
  check_k(k);
  if (k > pool_size) throw UsageError("K exceeds pool size");
  return 100.0 * static_cast<double>(k) / static_cast<double>(pool_size);
}

/// Half-up rounding to two decimals, as printed in result tables.
inline double round_percent(double value) {
  return std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
}

inline std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round_percent(value));
  return buf;
}

struct MetricReport {
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> recall_subset;
  std::map<std::size_t, double> map;
  std::map<std::size_t, double> map_subset;
  double composite = 0.0;
  std::size_t queries = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct CompositeTerm {
  std::string metric;  // recall | recall_subset | map | map_subset
  std::size_t k = 1;
  double weight = 1.0;
};

/// mean(R@5, R_Subset@1)
inline const std::vector<CompositeTerm> kCirrComposite = {{"recall", 5, 1.0},
                                                          {"recall_subset", 1, 1.0}};
/// mean(R@10, R@50)
inline const std::vector<CompositeTerm> kFashionComposite = {{"recall", 10, 1.0},
                                                             {"recall", 50, 1.0}};

/// Parses "recall@5" / "recall_subset@1:0.5" style terms.
inline CompositeTerm parse_composite_term(std::string_view text) {
  const auto at = text.find('@');
  if (at == std::string_view::npos) throw UsageError("composite term needs metric@K");
  CompositeTerm term;
  term.metric = std::string(text.substr(0, at));
  auto rest = std::string(text.substr(at + 1));
  const auto colon = rest.find(':');
  try {
    if (colon != std::string::npos) {
      term.weight = std::stod(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    std::size_t used = 0;
    term.k = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("k");
  } catch (const std::logic_error&) {
    throw UsageError("malformed composite term '" + std::string(text) + "'");
  }
  return term;
}

inline double report_value(const MetricReport& report, const CompositeTerm& term) {
  const std::map<std::size_t, double>* table = nullptr;
  if (term.metric == "recall") table = &report.recall;
  else if (term.metric == "recall_subset") table = &report.recall_subset;
  else if (term.metric == "map") table = &report.map;
  else if (term.metric == "map_subset") table = &report.map_subset;
  else throw UsageError("unknown metric key '" + term.metric + "'");
  const auto it = table->find(term.k);
  if (it == table->end()) {
    throw UsageError("metric " + term.metric + "@" + std::to_string(term.k) + " not in report");
  }
  return it->second;
}

/// Weighted mean of the referenced report entries.
inline double composite_score(const MetricReport& report, std::span<const CompositeTerm> terms) {
  double num = 0.0, den = 0.0;
  for (const auto& t : terms) {
    num += t.weight * report_value(report, t);
    den += t.weight;
  }
  if (den == 0.0) throw UsageError("composite weights sum to zero");
  return num / den;
}

inline const std::vector<std::size_t> kGlobalKs = {1, 5, 10, 50};
inline const std::vector<std::size_t> kSubsetKs = {1, 2, 3};

/// Builds a report from per-query rankings over the global and subset pools.
/// Either list may be empty, in which case its metrics are omitted.
inline MetricReport make_report(std::span<const RankingResult> global,
                                std::span<const RankingResult> subset,
                                std::span<const std::size_t> global_ks = kGlobalKs,
                                std::span<const std::size_t> subset_ks = kSubsetKs,
                                std::span<const CompositeTerm> composite = kCirrComposite) {
  MetricReport report;
  report.queries = std::max(global.size(), subset.size());
  if (!global.empty()) {
    for (auto k : global_ks) {
      report.recall[k] = recall_at_k(global, k);
      report.map[k] = map_at_k(global, k);
    }
  }
  if (!subset.empty()) {
    for (auto k : subset_ks) {
      report.recall_subset[k] = recall_at_k(subset, k);
      report.map_subset[k] = map_at_k(subset, k);
    }
  }
  bool have_terms = !composite.empty();
  for (const auto& t : composite) {
    try {
      report_value(report, t);
    } catch (const UsageError&) {
      have_terms = false;
    }
  }
  report.composite = have_terms ? composite_score(report, composite) : 0.0;
  return report;
}

/// JSON with every percentage rounded half-up to two decimals.
inline nlohmann::ordered_json report_to_json(const MetricReport& report) {
  auto table = [](const std::map<std::size_t, double>& m) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) obj[std::to_string(k)] = round_percent(v);
    return obj;
  };
  nlohmann::ordered_json out;
  out["recall"] = table(report.recall);
  out["recall_subset"] = table(report.recall_subset);
  out["map"] = table(report.map);
  out["map_subset"] = table(report.map_subset);
  out["composite"] = round_percent(report.composite);
  out["queries"] = report.queries;
  return out;
}

/// Aligned text table: one row per metric family, one column per K.
inline std::string report_table(const MetricReport& report) {
  std::string out;
  auto row = [&](const char* name, const std::map<std::size_t, double>& m) {
    if (m.empty()) return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-14s", name);
    out += buf;
    for (const auto& [k, v] : m) {
      std::snprintf(buf, sizeof buf, "  @%-3zu%7s", k, format_percent(v).c_str());
      out += buf;
    }
    out += "\n";
  };
  row("Recall", report.recall);
  row("Recall_Subset", report.recall_subset);
  row("mAP", report.map);
  row("mAP_Subset", report.map_subset);
  out += "composite       " + format_percent(report.composite) + "  (" +
         std::to_string(report.queries) + " queries)\n";
  return out;
}

}  // namespace cirbench

#endif  // CIRBENCH_METRICS_HPP_
