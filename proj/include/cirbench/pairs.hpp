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

#ifndef CIRBENCH_PAIRS_HPP_
#define CIRBENCH_PAIRS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cirbench/error.hpp"
#include "cirbench/random.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

enum class PairKind { kLoop, kBranch };

inline std::string_view to_string(PairKind k) { return k == PairKind::kLoop ? "loop" : "branch"; }

struct DirectedPair {
  std::uint64_t subset_id = 0;
  int reference_rank = 0;
  int target_rank = 0;
  PairKind kind = PairKind::kLoop;

  friend bool operator==(const DirectedPair&, const DirectedPair&) = default;
};

/// The closed loop I1 -> I2 -> ... -> In -> I1 followed by the branches
/// I1 -> I3 ... I1 -> I(n-1). For six members that is 6 + 3 = 9 pairs and
/// I1 is the reference of four of them.
inline std::vector<DirectedPair> draw_pairs(const Subset& subset) {
  const int n = static_cast<int>(subset.members.size());
  std::vector<DirectedPair> pairs;
  if (n < 2) return pairs;
  for (int r = 0; r < n; ++r) pairs.push_back({subset.id, r, (r + 1) % n, PairKind::kLoop});
  for (int t = 2; t <= n - 2; ++t) pairs.push_back({subset.id, 0, t, PairKind::kBranch});
  return pairs;
}

/// Loop pairs are the consecutive-modification edges of the dialogue.
inline bool is_loop_pair(int reference_rank, int target_rank, std::size_t subset_size) {
  return target_rank == (reference_rank + 1) % static_cast<int>(subset_size);
}

enum class Split { kTrain, kVal, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    default: return "test";
  }
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val" || s == "dev") return Split::kVal;
  if (s == "test" || s == "test1") return Split::kTest;
  throw UsageError("unknown split '" + std::string(s) + "'");
}

struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
      throw UsageError("split ratios must be non-negative and sum to 1");
    }
  }
  std::array<double, 3> as_array() const { return {train, val, test}; }
};

struct SplitAssignment {
  std::map<std::uint64_t, Split> splits;
  SplitRatios ratios;
  std::uint64_t rng_seed = 0;

  std::array<std::size_t, 3> counts() const {
    std::array<std::size_t, 3> c{};
    for (const auto& [id, s] : splits) ++c[static_cast<std::size_t>(s)];
    return c;
  }
};

/// Largest-remainder quotas: per-split subset counts summing to total.
inline std::array<std::size_t, 3> split_quotas(std::size_t total, const SplitRatios& ratios) {
  ratios.validate();
  const auto r = ratios.as_array();
  std::array<std::size_t, 3> q{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = r[i] * static_cast<double>(total);
    q[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(q[i]);
    assigned += q[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % 3, ++assigned) ++q[order[k]];
  return q;
}

/// Groups subsets that share any image into connected components, shuffles
/// the components with rng_seed and hands each to the split furthest below
/// its quota. Overlapping subsets therefore always land in the same split.
inline SplitAssignment assign_splits(std::span<const Subset> subsets, const SplitRatios& ratios,
                                     std::uint64_t rng_seed) {
  ratios.validate();
  SplitAssignment out;
  out.ratios = ratios;
  out.rng_seed = rng_seed;
  if (subsets.empty()) return out;

  std::vector<std::size_t> parent(subsets.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<ImageId, std::size_t> first_owner;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    for (const auto& m : subsets[i].members) {
      auto [it, fresh] = first_owner.emplace(m, i);
      if (!fresh) {
        const auto a = find(i), b = find(it->second);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < subsets.size(); ++i) by_root[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> components;
  for (auto& [root, members] : by_root) components.push_back(std::move(members));

  Rng rng(rng_seed);
  shuffle(std::span<std::vector<std::size_t>>(components), rng);

  const auto quota = split_quotas(subsets.size(), ratios);
  std::array<std::size_t, 3> filled{};
  for (const auto& comp : components) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t s = 0; s < 3; ++s) {
      const double deficit = static_cast<double>(quota[s]) - static_cast<double>(filled[s]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    filled[best] += comp.size();
    for (std::size_t i : comp) out.splits[subsets[i].id] = static_cast<Split>(best);
  }
  return out;
}

/// An ordered chain of pair ids whose targets feed the next reference.
struct DialoguePath {
  std::vector<std::uint64_t> pair_ids;
  std::vector<ImageId> images;  // pair_ids.size() + 1 entries; cycles repeat the start
  bool cycle = false;
};

struct DialogueAnalysis {
  std::vector<DialoguePath> paths;
  std::map<std::uint64_t, bool> closed_loop;  // per subset id

  double closed_loop_fraction() const {
    if (closed_loop.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& [id, closed] : closed_loop) n += closed ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(closed_loop.size());
  }
};

/// Builds the image graph of loop (consecutive-modification) pairs. A subset
/// is closed-loop when all of its loop pairs survive; each such subset
/// reports its cycle starting from I1. Chains are the maximal simple paths
/// that start at an image with no incoming loop pair; they follow shared
/// images across subsets. Enumeration stops after max_paths chains.
inline DialogueAnalysis extract_dialogue_paths(std::span<const PairRecord> pairs,
                                               std::size_t max_paths = 100000) {
  struct Edge {
    std::uint64_t pair_id;
    ImageId from, to;
  };
  DialogueAnalysis out;
  std::map<std::uint64_t, std::vector<const PairRecord*>> by_subset;
  for (const auto& p : pairs) by_subset[p.subset_id].push_back(&p);

  std::vector<Edge> edges;
  for (const auto& [sid, recs] : by_subset) {
    const std::size_t n = recs.front()->members.size();
    std::map<int, const PairRecord*> loop_by_ref;
    for (const auto* r : recs) {
      if (!r->labeled() || !r->reference_rank || !r->target_rank) continue;
      if (!is_loop_pair(*r->reference_rank, *r->target_rank, n)) continue;
      loop_by_ref.emplace(*r->reference_rank, r);
    }
    const bool closed = n > 1 && loop_by_ref.size() == n;
    out.closed_loop[sid] = closed;
    for (const auto& [rank, r] : loop_by_ref) edges.push_back({r->pair_id, r->reference, *r->target_hard});
    if (closed) {
      DialoguePath cycle;
      cycle.cycle = true;
      cycle.images.push_back(recs.front()->members[0]);
      for (std::size_t k = 0; k < n; ++k) {
        const auto* r = loop_by_ref.at(static_cast<int>(k));
        cycle.pair_ids.push_back(r->pair_id);
        cycle.images.push_back(*r->target_hard);
      }
      out.paths.push_back(std::move(cycle));
    }
  }

  std::map<ImageId, std::vector<std::size_t>> outgoing;
  std::map<ImageId, std::size_t> indegree;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    outgoing[edges[e].from].push_back(e);
    ++indegree[edges[e].to];
    indegree.try_emplace(edges[e].from, 0);
  }
  std::size_t chains = 0;
  DialoguePath current;
  std::set<ImageId> on_path;
  auto dfs = [&](auto&& self, const ImageId& at) -> void {
    if (chains >= max_paths) return;
    bool extended = false;
    if (const auto it = outgoing.find(at); it != outgoing.end()) {
      for (std::size_t e : it->second) {
        const auto& edge = edges[e];
        if (on_path.contains(edge.to)) continue;
        extended = true;
        on_path.insert(edge.to);
        current.pair_ids.push_back(edge.pair_id);
        current.images.push_back(edge.to);
        self(self, edge.to);
        current.images.pop_back();
        current.pair_ids.pop_back();
        on_path.erase(edge.to);
      }
    }
    if (!extended && !current.pair_ids.empty()) {
      out.paths.push_back(current);
      ++chains;
    }
  };
  for (const auto& [image, deg] : indegree) {
    if (deg != 0) continue;
    current = DialoguePath{};
    current.images.push_back(image);
    on_path = {image};
    dfs(dfs, image);
  }
  return out;
}

}  // namespace cirbench

#endif  // CIRBENCH_PAIRS_HPP_
