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

#ifndef CIRBENCH_EVAL_HPP_
#define CIRBENCH_EVAL_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cirbench/checkpoint.hpp"
#include "cirbench/composer.hpp"
#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/metrics.hpp"
#include "cirbench/random.hpp"

namespace cirbench {

struct EvalOptions {
  bool include_reference = false;
  std::size_t depth = 50;  // global list length kept in submissions
  std::uint64_t seed = 0;  // substitute references for random_image_text
  std::vector<std::size_t> global_ks = kGlobalKs;
  std::vector<std::size_t> subset_ks = kSubsetKs;
};

/// Per-record rankings, aligned with the dataset's record order.
struct Retrieval {
  std::vector<RankingResult> global;
  std::vector<RankingResult> subset;
};

/// Rows of the feature store making up a split's candidate corpus.
inline std::vector<std::size_t> corpus_rows(const DatasetFile& dataset, const FeatureStore& store) {
  std::vector<std::size_t> rows;
  std::vector<std::string> missing;
  for (const auto& id : dataset.images()) {
    if (const auto r = store.find(id)) {
      rows.push_back(*r);
    } else {
      missing.push_back(id.str());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", " : "") + missing[i];
    throw DataError("feature store lacks " + std::to_string(missing.size()) + " images (" + list +
                    (missing.size() > 5 ? ", ..." : "") + ")");
  }
  return rows;
}

/// Composes every query of a split and ranks both candidate pools.
class Retriever {
 public:
  Retriever(const Model& model, const FeatureStore& store, const DatasetFile& dataset,
            EvalOptions options = {})
      : model_(model), composer_(model.config()), store_(store), dataset_(dataset),
        options_(std::move(options)), rows_(corpus_rows(dataset, store)) {
    if (store.dimension() != model.config().feature_dim) {
      throw DataError("features have dimension " + std::to_string(store.dimension()) +
                      ", model expects " + std::to_string(model.config().feature_dim));
    }
    const auto params = model_.params.flat();
    for (std::size_t r : rows_) projected_.emplace(r, composer_.project(params, store.row(r)));
  }

  std::vector<double> compose_query(const PairRecord& record, Rng& rng) const {
    std::size_t ref_row = store_.index_of(record.reference);
    if (model_.config().kind == ComposerKind::kRandomImageText) {
      ref_row = rows_[uniform_index(rng, rows_.size())];
    }
    ComposeTape tape;
    const auto tokens = model_.vocab.encode(record.caption);
    return composer_.compose(model_.params.flat(), store_.row(ref_row),
                             std::span<const std::int32_t>(tokens), tape);
  }

  Retrieval run(bool global = true, bool subset = true) const {
    Retrieval out;
    Rng rng(options_.seed);
    std::vector<Candidate> corpus;
    for (std::size_t r : rows_) corpus.push_back({store_.id(r), projected_.at(r)});
    for (const auto& record : dataset_.records) {
      const auto query = compose_query(record, rng);
      if (global) {
        std::vector<Candidate> pool;
        pool.reserve(corpus.size());
        for (const auto& c : corpus) {
          if (options_.include_reference || c.id != record.reference) pool.push_back(c);
        }
        out.global.push_back(rank_candidates(query, pool, record.target_hard, record.pair_id));
      }
      if (subset) {
        std::vector<Candidate> pool;
        for (const auto& m : record.members) {
          if (m == record.reference) continue;
          pool.push_back({m, projected_.at(store_.index_of(m))});
        }
        out.subset.push_back(rank_candidates(query, pool, record.target_hard, record.pair_id));
      }
    }
    return out;
  }

 private:
  const Model& model_;
  Composer composer_;
  const FeatureStore& store_;
  const DatasetFile& dataset_;
  EvalOptions options_;
  std::vector<std::size_t> rows_;
  std::map<std::size_t, std::vector<double>> projected_;
};

/// Keeps only labeled records; hidden-label queries never enter metrics.
inline std::vector<RankingResult> labeled_only(const DatasetFile& dataset,
                                               const std::vector<RankingResult>& results) {
  std::vector<RankingResult> out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (dataset.records[i].labeled()) out.push_back(results[i]);
  }
  return out;
}

inline MetricReport report_from_retrieval(const DatasetFile& dataset, const Retrieval& retrieval,
                                          const EvalOptions& options = {}) {
  const auto global = labeled_only(dataset, retrieval.global);
  const auto subset = labeled_only(dataset, retrieval.subset);
  return make_report(global, subset, options.global_ks, options.subset_ks);
}

/// Local evaluation of a model on a labeled split.
inline MetricReport evaluate(const Model& model, const FeatureStore& store, const DatasetFile& dataset,
                             const EvalOptions& options = {}) {
  const Retriever retriever(model, store, dataset, options);
  return report_from_retrieval(dataset, retriever.run(), options);
}

struct SubmissionEntry {
  std::vector<ImageId> global;
  std::vector<ImageId> subset;
};

/// Versioned submission schema:
/// {"version": 1, "split": "test",
///  "rankings": {"<pairid>": {"global": [...], "subset": [...]}}}
struct Submission {
  std::string split = "test";
  std::map<std::uint64_t, SubmissionEntry> rankings;
};

inline constexpr int kSubmissionVersion = 1;

inline nlohmann::ordered_json submission_to_json(const Submission& s) {
  nlohmann::ordered_json j;
  j["version"] = kSubmissionVersion;
  j["split"] = s.split;
  nlohmann::ordered_json rankings = nlohmann::ordered_json::object();
  for (const auto& [id, entry] : s.rankings) {
    nlohmann::ordered_json e;
    e["global"] = nlohmann::ordered_json::array();
    for (const auto& x : entry.global) e["global"].push_back(x.str());
    e["subset"] = nlohmann::ordered_json::array();
    for (const auto& x : entry.subset) e["subset"].push_back(x.str());
    rankings[std::to_string(id)] = std::move(e);
  }
  j["rankings"] = std::move(rankings);
  return j;
}

inline Submission submission_from_json(const nlohmann::json& j) {
  Submission s;
  try {
    if (j.at("version").get<int>() != kSubmissionVersion) {
      throw FormatError("unsupported submission version");
    }
    s.split = j.at("split").get<std::string>();
    for (const auto& [key, value] : j.at("rankings").items()) {
      const bool digits = !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
      });
      if (!digits) throw FormatError("pair id '" + key + "' is not an integer");
      const auto id = std::stoull(key);
      SubmissionEntry e;
      for (const auto& x : value.at("global")) e.global.emplace_back(x.get<std::string>());
      for (const auto& x : value.at("subset")) e.subset.emplace_back(x.get<std::string>());
      s.rankings.emplace(id, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("submission: ") + e.what());
  } catch (const std::out_of_range&) {
    throw FormatError("submission: pair ids must be integers");
  } catch (const Error&) {
    throw;
  }
  return s;
}

/// Builds a submission from retrieval output, truncating global lists.
inline Submission make_submission(const DatasetFile& dataset, const Retrieval& retrieval,
                                  std::size_t depth = 50) {
  Submission s;
  s.split = std::string(to_string(dataset.split));
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    SubmissionEntry e;
    const auto& g = retrieval.global[i].candidates;
    e.global.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(std::min(depth, g.size())));
    e.subset = retrieval.subset[i].candidates;
    s.rankings.emplace(dataset.records[i].pair_id, std::move(e));
  }
  return s;
}

inline Submission make_submission(const Model& model, const FeatureStore& store,
                                  const DatasetFile& dataset, const EvalOptions& options = {}) {
  EvalOptions opts = options;
  opts.include_reference = false;
  const Retriever retriever(model, store, dataset, opts);
  return make_submission(dataset, retriever.run(), opts.depth);
}

/// Rejection of a submission, with the offending pair ids.
class SubmissionError : public DataError {
 public:
  SubmissionError(const std::string& what, std::vector<std::uint64_t> ids)
      : DataError(what), ids_(std::move(ids)) {}
  const std::vector<std::uint64_t>& pair_ids() const { return ids_; }

 private:
  std::vector<std::uint64_t> ids_;
};

/// Validates the whole submission against the gold split and only then
/// scores it; any violation rejects it without partial metrics.
inline MetricReport score_submission(const DatasetFile& gold, const Submission& submission,
                                     const EvalOptions& options = {}) {
  std::set<std::uint64_t> gold_ids;
  for (const auto& r : gold.records) gold_ids.insert(r.pair_id);
  std::vector<std::uint64_t> unknown, missing;
  for (const auto& [id, entry] : submission.rankings) {
    if (!gold_ids.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) throw SubmissionError("unknown pair ids", unknown);
  for (auto id : gold_ids) {
    if (!submission.rankings.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw SubmissionError("missing pair ids", missing);

  const auto corpus_list = gold.images();
  const std::set<ImageId> corpus(corpus_list.begin(), corpus_list.end());
  const std::size_t required = std::min(options.depth, corpus.empty() ? 0 : corpus.size() - 1);
  std::vector<std::uint64_t> bad_global, bad_subset;
  for (const auto& r : gold.records) {
    const auto& e = submission.rankings.at(r.pair_id);
    const std::set<ImageId> g(e.global.begin(), e.global.end());
    const bool global_ok = g.size() == e.global.size() && !g.contains(r.reference) &&
                           e.global.size() >= required &&
                           std::all_of(g.begin(), g.end(), [&](const auto& x) { return corpus.contains(x); });
    if (!global_ok) bad_global.push_back(r.pair_id);
    std::multiset<ImageId> expected, got(e.subset.begin(), e.subset.end());
    for (const auto& m : r.members) {
      if (m != r.reference) expected.insert(m);
    }
    if (expected != got) bad_subset.push_back(r.pair_id);
  }
  if (!bad_global.empty()) {
    throw SubmissionError("global rankings must be duplicate-free, exclude the reference, "
                          "use split images and hold at least " + std::to_string(required) + " ids",
                          bad_global);
  }
  if (!bad_subset.empty()) {
    throw SubmissionError("subset rankings must be permutations of the subset minus the reference",
                          bad_subset);
  }

  std::vector<RankingResult> global, subset;
  for (const auto& r : gold.records) {
    if (!r.labeled()) continue;
    const auto& e = submission.rankings.at(r.pair_id);
    auto locate = [&](const std::vector<ImageId>& list) {
      RankingResult res;
      res.pair_id = r.pair_id;
      res.candidates = list;
      const auto it = std::find(list.begin(), list.end(), *r.target_hard);
      if (it != list.end()) res.gold_rank = static_cast<std::size_t>(it - list.begin()) + 1;
      return res;
    };
    global.push_back(locate(e.global));
    subset.push_back(locate(e.subset));
  }
  return make_report(global, subset, options.global_ks, options.subset_ks);
}

}  // namespace cirbench

#endif  // CIRBENCH_EVAL_HPP_
