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

// Shared generators for the test suites.

#ifndef CIRBENCH_TESTS_FIXTURES_HPP_
#define CIRBENCH_TESTS_FIXTURES_HPP_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "cirbench/dataset.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/random.hpp"
#include "cirbench/types.hpp"

namespace cirbench::testing {

inline ImageId image(std::size_t i, const char* prefix = "img") {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, i);
  return ImageId(buf);
}

inline FeatureStore random_store(Rng& rng, std::size_t count, std::size_t dim, const char* prefix = "img") {
  FeatureStore store(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& x : v) x = static_cast<float>(standard_normal(rng));
    store.add(image(i, prefix), v);
  }
  return store;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

/// Six-member subset with the nine drawn pairs, all labeled.
inline std::vector<PairRecord> subset_records(std::uint64_t subset_id, const std::vector<ImageId>& members,
                                              std::uint64_t first_pair_id) {
  std::vector<PairRecord> out;
  const int n = static_cast<int>(members.size());
  auto add = [&](int r, int t) {
    PairRecord rec;
    rec.pair_id = first_pair_id + out.size();
    rec.reference = members[static_cast<std::size_t>(r)];
    rec.target_hard = members[static_cast<std::size_t>(t)];
    rec.target_soft[*rec.target_hard] = 1.0;
    rec.caption = "edit " + std::to_string(r) + " into " + std::to_string(t);
    rec.subset_id = subset_id;
    rec.members = members;
    rec.reference_rank = r;
    rec.target_rank = t;
    out.push_back(std::move(rec));
  };
  for (int r = 0; r < n; ++r) add(r, (r + 1) % n);
  for (int t = 2; t <= n - 2; ++t) add(0, t);
  return out;
}

/// Dataset of disjoint six-member subsets over images img-00000.. .
inline DatasetFile disjoint_dataset(std::size_t subsets, Split split = Split::kVal) {
  DatasetFile file;
  file.split = split;
  for (std::size_t s = 0; s < subsets; ++s) {
    std::vector<ImageId> members;
    for (std::size_t m = 0; m < 6; ++m) members.push_back(image(s * 6 + m));
    auto recs = subset_records(s, members, file.records.size());
    file.records.insert(file.records.end(), recs.begin(), recs.end());
  }
  return file;
}

inline std::string random_caption(Rng& rng) {
  static const char* const kWords[] = {"add", "a", "dog", "Remove", "the", "cat,", "make", "it", "red.",
                                       "\"zoom\"", "in", "café", "–", "two", "more", "birds!", "tab\there",
                                       "back\\slash", "naïve", "ONE"};
  const std::size_t n = 1 + uniform_index(rng, 18);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += uniform_unit(rng) < 0.9 ? " " : "  ";
    out += kWords[uniform_index(rng, std::size(kWords))];
  }
  return out;
}

/// Records over overlapping random subsets with aux answers, soft scores and
/// a mix of labeled and unlabeled pairs.
inline DatasetFile random_dataset(Rng& rng, std::size_t count, Split split = Split::kTrain) {
  static const char* const kAux[] = {"[c] None existed", "[cr0] Nothing worth mentioning", "[cr1] covered above",
                                     "the dog is brown", "", "[c]"};
  DatasetFile file;
  file.split = split;
  const std::size_t pool = 6 + count;
  for (std::size_t i = 0; i < count; ++i) {
    PairRecord r;
    r.pair_id = i * 7 + uniform_index(rng, 7);
    r.subset_id = uniform_index(rng, count);
    std::set<std::size_t> picked;
    while (picked.size() < 6) picked.insert(uniform_index(rng, pool));
    for (auto p : picked) r.members.push_back(image(p, split == Split::kTest ? "test1" : "dev"));
    const int ref = static_cast<int>(uniform_index(rng, 6));
    int tgt = static_cast<int>(uniform_index(rng, 5));
    if (tgt >= ref) ++tgt;
    r.reference = r.members[static_cast<std::size_t>(ref)];
    r.reference_rank = ref;
    r.caption = random_caption(rng);
    if (uniform_unit(rng) < 0.8) {
      r.target_hard = r.members[static_cast<std::size_t>(tgt)];
      r.target_rank = tgt;
      r.target_soft[*r.target_hard] = 1.0;
      for (const auto& m : r.members) {
        if (m == r.reference || m == *r.target_hard || uniform_unit(rng) < 0.5) continue;
        r.target_soft[m] = uniform_unit(rng) < 0.5 ? 0.5 : -1.0;
      }
    }
    if (uniform_unit(rng) < 0.7) {
      AuxAnnotation aux;
      for (std::size_t q = 0; q < 4; ++q) aux.at(q) = AuxAnswer(kAux[uniform_index(rng, std::size(kAux))]);
      r.aux = aux;
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

/// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cirbench-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cirbench::testing

#endif  // CIRBENCH_TESTS_FIXTURES_HPP_
