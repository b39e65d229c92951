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

#ifndef CIRBENCH_SYNTHETIC_HPP_
#define CIRBENCH_SYNTHETIC_HPP_

#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/pairs.hpp"
#include "cirbench/random.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

/// Attribute-world corpus: each image is a tuple of categorical attributes
/// encoded one-hot with Gaussian noise. Subsets are families of near
/// variants of a base tuple and captions spell out the edit between two
/// members.
struct SynthConfig {
  std::size_t images = 500;
  std::size_t attributes = 4;
  std::size_t values = 8;
  std::size_t subset_size = kDefaultSubsetSize;
  std::size_t max_changes = 2;  // attributes altered per family member
  double noise = 0.1;
  SplitRatios ratios;
  std::uint64_t rng_seed = 0;

  std::size_t dimension() const { return attributes * values; }

  void validate() const {
    if (attributes == 0 || values < 2) throw UsageError("synthetic corpus needs attributes and >= 2 values");
    if (subset_size < 3) throw UsageError("subset size must be at least 3");
    if (images < subset_size) throw UsageError("too few images for one subset");
    if (max_changes == 0 || max_changes > attributes) throw UsageError("max_changes out of range");
    if (!(noise >= 0.0)) throw UsageError("noise must be non-negative");
    ratios.validate();
  }
};

struct SyntheticCorpus {
  FeatureStore features;
  std::vector<std::vector<std::size_t>> attributes;  // per store row
  std::vector<Subset> subsets;
  SplitAssignment assignment;
  DatasetFile train, val, test;

  const DatasetFile& split(Split s) const {
    return s == Split::kTrain ? train : s == Split::kVal ? val : test;
  }
};

inline std::string attribute_name(std::size_t a) {
  static const char* const kNames[] = {"color", "shape", "material", "size"};
  return a < 4 ? kNames[a] : "attribute" + std::to_string(a);
}

inline std::string attribute_value(std::size_t a, std::size_t v) {
  static const char* const kWords[4][8] = {
      {"red", "blue", "green", "yellow", "purple", "orange", "black", "white"},
      {"cube", "sphere", "cone", "cylinder", "torus", "pyramid", "ring", "star"},
      {"wood", "metal", "glass", "rubber", "stone", "paper", "cloth", "plastic"},
      {"tiny", "small", "medium", "large", "huge", "tall", "flat", "wide"}};
  if (a < 4 && v < 8) return kWords[a][v];
  return "a" + std::to_string(a) + "v" + std::to_string(v);
}

/// "change color to red and shape to cone"; "keep it the same" when equal.
inline std::string edit_caption(const std::vector<std::size_t>& from, const std::vector<std::size_t>& to) {
  std::string out;
  for (std::size_t a = 0; a < from.size(); ++a) {
    if (from[a] == to[a]) continue;
    out += out.empty() ? "change " : " and ";
    out += attribute_name(a) + " to " + attribute_value(a, to[a]);
  }
  return out.empty() ? "keep it the same" : out;
}

inline SyntheticCorpus make_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  SyntheticCorpus corpus;
  corpus.features = FeatureStore(cfg.dimension());

  auto random_tuple = [&] {
    std::vector<std::size_t> t(cfg.attributes);
    for (auto& v : t) v = uniform_index(rng, cfg.values);
    return t;
  };
  auto add_image = [&](const std::vector<std::size_t>& tuple) {
    std::vector<float> f(cfg.dimension());
    for (auto& x : f) x = static_cast<float>(cfg.noise * standard_normal(rng));
    for (std::size_t a = 0; a < cfg.attributes; ++a) f[a * cfg.values + tuple[a]] += 1.0f;
    char name[32];
    std::snprintf(name, sizeof name, "syn-%05zu", corpus.attributes.size());
    corpus.features.add(ImageId(name), f);
    corpus.attributes.push_back(tuple);
    return ImageId(name);
  };

  const std::size_t families = cfg.images / cfg.subset_size;
  for (std::size_t fam = 0; fam < families; ++fam) {
    const auto base = random_tuple();
    std::set<std::vector<std::size_t>> seen;
    Subset s;
    s.id = fam;
    while (s.members.size() < cfg.subset_size) {
      auto t = base;
      if (!s.members.empty()) {
        const std::size_t changes = 1 + uniform_index(rng, cfg.max_changes);
        std::vector<std::size_t> which(cfg.attributes);
        for (std::size_t a = 0; a < which.size(); ++a) which[a] = a;
        shuffle(std::span<std::size_t>(which), rng);
        for (std::size_t c = 0; c < changes; ++c) {
          t[which[c]] = (t[which[c]] + 1 + uniform_index(rng, cfg.values - 1)) % cfg.values;
        }
      }
      if (!seen.insert(t).second) continue;
      s.members.push_back(add_image(t));
    }
    corpus.subsets.push_back(std::move(s));
  }
  while (corpus.attributes.size() < cfg.images) add_image(random_tuple());

  corpus.assignment = assign_splits(corpus.subsets, cfg.ratios, cfg.rng_seed);
  corpus.train.split = Split::kTrain;
  corpus.val.split = Split::kVal;
  corpus.test.split = Split::kTest;

  std::uint64_t next_pair = 0;
  for (const auto& s : corpus.subsets) {
    const Split which = corpus.assignment.splits.at(s.id);
    auto& file = which == Split::kTrain ? corpus.train : which == Split::kVal ? corpus.val : corpus.test;
    for (const auto& p : draw_pairs(s)) {
      const auto& ref = s.members[static_cast<std::size_t>(p.reference_rank)];
      const auto& tgt = s.members[static_cast<std::size_t>(p.target_rank)];
      PairRecord r;
      r.pair_id = next_pair++;
      r.reference = ref;
      r.target_hard = tgt;
      r.target_soft[tgt] = 1.0;
      r.caption = edit_caption(corpus.attributes[corpus.features.index_of(ref)],
                               corpus.attributes[corpus.features.index_of(tgt)]);
      r.subset_id = s.id;
      r.members = s.members;
      r.reference_rank = p.reference_rank;
      r.target_rank = p.target_rank;
      file.records.push_back(std::move(r));
    }
  }
  return corpus;
}

}  // namespace cirbench

#endif  // CIRBENCH_SYNTHETIC_HPP_
