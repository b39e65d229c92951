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

#ifndef CIRBENCH_MINER_HPP_
#define CIRBENCH_MINER_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cirbench/error.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/random.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

struct MinerConfig {
  double near_duplicate_threshold = 0.94;
  double min_gap = 0.002;
  std::size_t candidate_window = 20;
  std::size_t subset_size = kDefaultSubsetSize;
  std::size_t overlap_limit = 2;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(min_gap > 0.0 && min_gap < near_duplicate_threshold &&
          near_duplicate_threshold <= 1.0)) {
      throw UsageError("miner thresholds must satisfy 0 < gap < dup-thresh <= 1");
    }
    if (subset_size < 2) throw UsageError("subset size must be at least 2");
    if (candidate_window + 1 < subset_size) {
      throw UsageError("candidate window smaller than subset size - 1");
    }
  }
};

namespace detail {

struct NormTerms {
  double dot = 0.0, aa = 0.0, bb = 0.0;
};

template <typename A, typename B>
NormTerms norm_terms(std::span<const A> a, std::span<const B> b) {
  NormTerms t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    t.dot += x * y;
    t.aa += x * x;
    t.bb += y * y;
  }
  return t;
}

inline double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace detail

/// Cosine of the angle between a and b in 64-bit arithmetic, clamped to
/// [-1, 1]. Throws on dimension mismatch or a (near) zero vector.
template <typename A, typename B>
double cosine_similarity(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw DataError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()));
  }
  const auto t = detail::norm_terms(a, b);
  const double na = std::sqrt(t.aa), nb = std::sqrt(t.bb);
  if (na < kDegenerateNorm || nb < kDegenerateNorm) {
    throw DataError("cosine_similarity: degenerate input vector");
  }
  return detail::clamp_unit(t.dot / (na * nb));
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine_similarity(std::span<const double>(a), std::span<const double>(b));
}

struct ScoredCandidate {
  ImageId id;
  double similarity = 0.0;
};

/// Anything that scores every other image against a seed.
template <typename P>
concept SimilarityProvider = requires(P p, const ImageId& seed) {
  { p(seed) } -> std::convertible_to<std::vector<ScoredCandidate>>;
};

/// Scores all images of a store against a seed with cosine similarity.
/// Degenerate vectors are never candidates.
class StoreSimilarity {
 public:
  explicit StoreSimilarity(const FeatureStore& store) : store_(&store), norms_(store.size()) {
    for (std::size_t r = 0; r < store.size(); ++r) {
      double sq = 0.0;
      for (double x : store.row(r)) sq += x * x;
      norms_[r] = std::sqrt(sq);
    }
  }

  bool degenerate(std::size_t row) const { return norms_[row] < kDegenerateNorm; }

  std::vector<ScoredCandidate> operator()(const ImageId& seed) const {
    const std::size_t s = store_->index_of(seed);
    std::vector<ScoredCandidate> out;
    if (degenerate(s)) return out;
    out.reserve(store_->size());
    const auto a = store_->row(s);
    for (std::size_t r = 0; r < store_->size(); ++r) {
      if (r == s || degenerate(r)) continue;
      const auto b = store_->row(r);
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
      }
      out.push_back({store_->id(r), detail::clamp_unit(dot / (norms_[s] * norms_[r]))});
    }
    return out;
  }

 private:
  const FeatureStore* store_;
  std::vector<double> norms_;
};

/// Selection on precomputed similarities: sort descending (ties by id),
/// drop near-duplicates of the seed, keep the next candidate_window entries
/// and greedily add each one whose similarity sits more than min_gap below
/// the last added image (the seed counts as 1.0). Returns nullopt when fewer
/// than subset_size - 1 images survive.
inline std::optional<Subset> select_subset(const ImageId& seed,
                                           std::vector<ScoredCandidate> candidates,
                                           const MinerConfig& cfg) {
  std::sort(candidates.begin(), candidates.end(),
            [](const ScoredCandidate& x, const ScoredCandidate& y) {
              if (x.similarity != y.similarity) return x.similarity > y.similarity;
              return x.id < y.id;
            });
  const auto first_kept = std::find_if(candidates.begin(), candidates.end(), [&](const auto& c) {
    return c.similarity < cfg.near_duplicate_threshold;
  });
  const auto window_size = std::min<std::size_t>(
      cfg.candidate_window, static_cast<std::size_t>(candidates.end() - first_kept));

  Subset subset;
  subset.members.push_back(seed);
  subset.seed_similarities.push_back(1.0);
  double last_added = 1.0;
  for (auto it = first_kept; it != first_kept + window_size; ++it) {
    if (subset.members.size() == cfg.subset_size) break;
    if (last_added - it->similarity > cfg.min_gap) {
      subset.members.push_back(it->id);
      subset.seed_similarities.push_back(it->similarity);
      last_added = it->similarity;
    }
  }
  if (subset.members.size() != cfg.subset_size) return std::nullopt;
  return subset;
}

template <SimilarityProvider Provider>
std::optional<Subset> mine_subset_with(const ImageId& seed, Provider&& provider,
                                       const MinerConfig& cfg) {
  cfg.validate();
  return select_subset(seed, provider(seed), cfg);
}

/// Mines one subset around seed; nullopt is a rejection, not an error.
inline std::optional<Subset> mine_subset(const ImageId& seed, const FeatureStore& store,
                                         const MinerConfig& cfg) {
  if (!store.contains(seed)) throw DataError("seed " + seed.str() + " not in feature store");
  if (store.size() < cfg.candidate_window + 1) {
    throw UsageError("feature store has " + std::to_string(store.size()) +
                     " images; mining needs at least candidate_window + 1");
  }
  return mine_subset_with(seed, StoreSimilarity(store), cfg);
}

/// Member-set intersection size.
inline std::size_t overlap(const Subset& a, const Subset& b) {
  std::size_t n = 0;
  for (const auto& x : a.members) {
    n += static_cast<std::size_t>(std::count(b.members.begin(), b.members.end(), x));
  }
  return n;
}

/// Tries seeds in an rng_seed-determined order and accepts each mined subset
/// that shares at most overlap_limit members with every accepted one. Stops
/// after target_count acceptances or when seeds run out. Accepted subsets
/// are numbered 0, 1, ... in acceptance order.
inline std::vector<Subset> mine_all(const FeatureStore& store, const MinerConfig& cfg,
                                    std::size_t target_count) {
  cfg.validate();
  std::vector<Subset> accepted;
  if (target_count == 0) return accepted;
  if (store.size() < cfg.candidate_window + 1) {
    throw UsageError("feature store too small for the candidate window");
  }
  std::vector<std::size_t> seeds(store.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  Rng rng(cfg.rng_seed);
  shuffle(std::span<std::size_t>(seeds), rng);

  const StoreSimilarity similarity(store);
  // image row -> accepted subsets containing it
  std::unordered_map<std::size_t, std::vector<std::size_t>> containing;
  for (const std::size_t seed_row : seeds) {
    auto subset = select_subset(store.id(seed_row), similarity(store.id(seed_row)), cfg);
    if (!subset) continue;
    std::unordered_map<std::size_t, std::size_t> shared;
    bool ok = true;
    for (const auto& member : subset->members) {
      const auto it = containing.find(store.index_of(member));
      if (it == containing.end()) continue;
      for (std::size_t s : it->second) {
        if (++shared[s] > cfg.overlap_limit) ok = false;
      }
    }
    if (!ok) continue;
    subset->id = accepted.size();
    for (const auto& member : subset->members) {
      containing[store.index_of(member)].push_back(accepted.size());
    }
    accepted.push_back(std::move(*subset));
    if (accepted.size() == target_count) break;
  }
  return accepted;
}

}  // namespace cirbench

#endif  // CIRBENCH_MINER_HPP_
