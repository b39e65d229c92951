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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "cirbench/error.hpp"
#include "cirbench/pairs.hpp"
#include "fixtures.hpp"

namespace cirbench {
namespace {

using testing::image;

Subset six(std::uint64_t id, std::size_t first_image) {
  Subset s;
  s.id = id;
  for (std::size_t m = 0; m < 6; ++m) s.members.push_back(image(first_image + m));
  return s;
}

TEST(DrawPairs, NinePairsSixLoopFourFromFirst) {
  const auto pairs = draw_pairs(six(3, 0));
  ASSERT_EQ(pairs.size(), 9u);
  std::set<std::pair<int, int>> distinct;
  std::multiset<int> loop_refs, loop_targets;
  std::size_t from_first = 0;
  for (const auto& p : pairs) {
    EXPECT_EQ(p.subset_id, 3u);
    distinct.insert({p.reference_rank, p.target_rank});
    if (p.kind == PairKind::kLoop) {
      loop_refs.insert(p.reference_rank);
      loop_targets.insert(p.target_rank);
      EXPECT_TRUE(is_loop_pair(p.reference_rank, p.target_rank, 6));
    }
    if (p.reference_rank == 0) ++from_first;
  }
  EXPECT_EQ(distinct.size(), 9u);
  EXPECT_EQ(loop_refs, (std::multiset<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(loop_targets, (std::multiset<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(from_first, 4u);
  const std::set<std::pair<int, int>> from_zero{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  for (const auto& e : from_zero) EXPECT_TRUE(distinct.contains(e));
}

TEST(DrawPairs, DependsOnlyOnSubsetSize) {
  auto ranks = [](const Subset& s) {
    std::vector<std::pair<int, int>> out;
    for (const auto& p : draw_pairs(s)) out.emplace_back(p.reference_rank, p.target_rank);
    return out;
  };
  const auto base = ranks(six(0, 0));
  for (std::uint64_t id = 1; id < 20; ++id) EXPECT_EQ(ranks(six(id, id * 13)), base);
}

TEST(DrawPairs, DegreeProfile) {
  std::map<int, int> in, out;
  for (const auto& p : draw_pairs(six(0, 0))) {
    ++out[p.reference_rank];
    ++in[p.target_rank];
  }
  EXPECT_EQ(out[0], 4);
  EXPECT_EQ(in[0], 1);
  for (int r : {2, 3, 4}) EXPECT_EQ(in[r], 2);
  for (int r = 0; r < 6; ++r) {
    EXPECT_GE(in[r], 1);
    EXPECT_GE(out[r], 1);
  }
}

TEST(SplitQuotas, LargestRemainder) {
  EXPECT_EQ(split_quotas(10, {}), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(split_quotas(4351, {}), (std::array<std::size_t, 3>{3481, 435, 435}));
  EXPECT_EQ(split_quotas(83, {}), (std::array<std::size_t, 3>{67, 8, 8}));
  EXPECT_EQ(split_quotas(0, {}), (std::array<std::size_t, 3>{0, 0, 0}));
  EXPECT_THROW(split_quotas(10, {0.5, 0.5, 0.5}).size(), UsageError);
}

TEST(AssignSplits, TenDisjointSubsets) {
  std::vector<Subset> subsets;
  for (std::uint64_t i = 0; i < 10; ++i) subsets.push_back(six(i, i * 6));
  const auto a = assign_splits(subsets, {}, 5);
  EXPECT_EQ(a.counts(), (std::array<std::size_t, 3>{8, 1, 1}));
}

TEST(AssignSplits, FullScaleSizes) {
  std::vector<Subset> subsets;
  for (std::uint64_t i = 0; i < 4351; ++i) subsets.push_back(six(i, i * 6));
  const auto c = assign_splits(subsets, {}, 1).counts();
  EXPECT_EQ(c, (std::array<std::size_t, 3>{3481, 435, 435}));
}

TEST(AssignSplits, OverlappingSubsetsShareASplit) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Subset> subsets;
    const std::size_t pool = 40 + uniform_index(rng, 200);
    for (std::uint64_t i = 0; i < 30; ++i) {
      Subset s;
      s.id = i;
      std::set<std::size_t> picked;
      while (picked.size() < 6) picked.insert(uniform_index(rng, pool));
      for (auto p : picked) s.members.push_back(image(p));
      subsets.push_back(std::move(s));
    }
    const auto a = assign_splits(subsets, {}, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(a.splits.size(), subsets.size());
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      for (std::size_t j = i + 1; j < subsets.size(); ++j) {
        std::vector<ImageId> shared;
        auto x = subsets[i].members, y = subsets[j].members;
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(shared));
        if (!shared.empty()) {
          ASSERT_EQ(a.splits.at(i), a.splits.at(j));
        }
      }
    }
  }
}

TEST(AssignSplits, Deterministic) {
  std::vector<Subset> subsets;
  for (std::uint64_t i = 0; i < 100; ++i) subsets.push_back(six(i, i * 6));
  EXPECT_EQ(assign_splits(subsets, {}, 9).splits, assign_splits(subsets, {}, 9).splits);
  EXPECT_NE(assign_splits(subsets, {}, 9).splits, assign_splits(subsets, {}, 10).splits);
}

TEST(SplitNames, ParseAndPrint) {
  EXPECT_EQ(parse_split("train"), Split::kTrain);
  EXPECT_EQ(parse_split("dev"), Split::kVal);
  EXPECT_EQ(to_string(Split::kTest), "test");
  EXPECT_THROW(parse_split("holdout"), UsageError);
}

std::vector<ImageId> members_of(const Subset& s) { return s.members; }

TEST(DialoguePaths, IntactSubsetIsOneCycle) {
  const auto recs = testing::subset_records(0, members_of(six(0, 0)), 0);
  const auto d = extract_dialogue_paths(recs);
  EXPECT_TRUE(d.closed_loop.at(0));
  ASSERT_EQ(d.paths.size(), 1u);
  EXPECT_TRUE(d.paths[0].cycle);
  EXPECT_EQ(d.paths[0].pair_ids, (std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(d.paths[0].images.front(), d.paths[0].images.back());
  EXPECT_DOUBLE_EQ(d.closed_loop_fraction(), 1.0);
}

TEST(DialoguePaths, BrokenLoopGivesChainOfFive) {
  auto recs = testing::subset_records(0, members_of(six(0, 0)), 0);
  recs.erase(recs.begin() + 2);  // I3 -> I4
  const auto d = extract_dialogue_paths(recs);
  EXPECT_FALSE(d.closed_loop.at(0));
  ASSERT_EQ(d.paths.size(), 1u);
  EXPECT_FALSE(d.paths[0].cycle);
  EXPECT_EQ(d.paths[0].pair_ids, (std::vector<std::uint64_t>{3, 4, 5, 0, 1}));
  EXPECT_EQ(d.paths[0].images,
            (std::vector<ImageId>{image(3), image(4), image(5), image(0), image(1), image(2)}));
}

TEST(DialoguePaths, ChainCrossesSharedImage) {
  auto a = testing::subset_records(0, members_of(six(0, 0)), 0);
  a.erase(a.begin() + 2);  // chain ends at image 2
  std::vector<ImageId> b_members{image(2), image(10), image(11), image(12), image(13), image(14)};
  auto b = testing::subset_records(1, b_members, 100);
  a.insert(a.end(), b.begin(), b.end());
  const auto d = extract_dialogue_paths(a);
  EXPECT_FALSE(d.closed_loop.at(0));
  EXPECT_TRUE(d.closed_loop.at(1));
  const DialoguePath* longest = nullptr;
  for (const auto& p : d.paths) {
    if (!p.cycle && (!longest || p.pair_ids.size() > longest->pair_ids.size())) longest = &p;
  }
  ASSERT_NE(longest, nullptr);
  EXPECT_EQ(longest->pair_ids, (std::vector<std::uint64_t>{3, 4, 5, 0, 1, 100, 101, 102, 103, 104}));
  EXPECT_EQ(longest->images.back(), image(14));
}

TEST(DialoguePaths, BranchPairsAreIgnored) {
  auto recs = testing::subset_records(0, members_of(six(0, 0)), 0);
  recs.resize(6);
  EXPECT_EQ(extract_dialogue_paths(recs).paths.size(), 1u);
  auto only_branches = testing::subset_records(0, members_of(six(0, 0)), 0);
  only_branches.erase(only_branches.begin(), only_branches.begin() + 6);
  const auto d = extract_dialogue_paths(only_branches);
  EXPECT_TRUE(d.paths.empty());
  EXPECT_FALSE(d.closed_loop.at(0));
}

}  // namespace
}  // namespace cirbench
