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

#ifndef CIRBENCH_TYPES_HPP_
#define CIRBENCH_TYPES_HPP_

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cirbench/error.hpp"

namespace cirbench {

/// Image identifier following the NLVR2 naming style ("dev-147-2-img0").
/// Non-empty, no whitespace, no path separators.
class ImageId {
 public:
  ImageId() = default;
  explicit ImageId(std::string value) : value_(std::move(value)) {
    if (!is_valid(value_)) {
      throw DataError("invalid image id '" + value_ + "'");
    }
  }

  static bool is_valid(std::string_view value) {
    if (value.empty()) return false;
    return std::none_of(value.begin(), value.end(), [](char c) {
      return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
             c == '\f' || c == '/' || c == '\\';
    });
  }

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }

  friend auto operator<=>(const ImageId&, const ImageId&) = default;
  friend bool operator==(const ImageId&, const ImageId&) = default;

 private:
  std::string value_;
};

/// Six mutually similar images; members[0] is the seed.
struct Subset {
  std::uint64_t id = 0;
  std::vector<ImageId> members;
  /// Cosine similarity of each member to the seed. Empty when the subset was
  /// loaded from an annotation file rather than mined.
  std::vector<double> seed_similarities;
};

inline constexpr std::size_t kDefaultSubsetSize = 6;

/// Structural checks shared by every producer of subsets.
inline void validate_subset(const Subset& subset,
                            std::size_t expected_size = kDefaultSubsetSize) {
  const auto where = "subset " + std::to_string(subset.id) + ": ";
  if (subset.members.size() != expected_size) {
    throw ConsistencyError(where + "expected " + std::to_string(expected_size) +
                           " members, found " +
                           std::to_string(subset.members.size()));
  }
  std::set<ImageId> distinct(subset.members.begin(), subset.members.end());
  if (distinct.size() != subset.members.size()) {
    throw ConsistencyError(where + "members are not distinct");
  }
  if (subset.seed_similarities.empty()) return;
  if (subset.seed_similarities.size() != subset.members.size()) {
    throw ConsistencyError(where + "similarity count differs from members");
  }
  if (std::abs(subset.seed_similarities[0] - 1.0) > 1e-6) {
    throw ConsistencyError(where + "seed similarity must be 1");
  }
  for (std::size_t i = 2; i < subset.seed_similarities.size(); ++i) {
    if (!(subset.seed_similarities[i] < subset.seed_similarities[i - 1])) {
      throw ConsistencyError(where + "similarities not strictly decreasing");
    }
  }
}

enum class Sentinel { kNotApplicable, kNothingWorthMentioning, kCovered };

inline constexpr std::pair<std::string_view, Sentinel> kSentinels[] = {
    {"[c]", Sentinel::kNotApplicable},
    {"[cr0]", Sentinel::kNothingWorthMentioning},
    {"[cr1]", Sentinel::kCovered},
};

inline std::string_view sentinel_text(Sentinel s) {
  for (const auto& [text, value] : kSentinels) {
    if (value == s) return text;
  }
  return {};
}

/// One auxiliary answer. The raw text is kept verbatim so files round-trip.
class AuxAnswer {
 public:
  AuxAnswer() = default;
  explicit AuxAnswer(std::string raw) : raw_(std::move(raw)) {}

  const std::string& raw() const { return raw_; }

  std::optional<Sentinel> sentinel() const {
    return leading_sentinel(raw_);
  }
  bool applicable() const { return !sentinel().has_value(); }

  /// Answer text with the sentinel prefix and following blanks removed.
  std::string_view text() const {
    std::string_view view = raw_;
    if (const auto s = sentinel()) {
      view.remove_prefix(sentinel_text(*s).size());
      while (!view.empty() && view.front() == ' ') view.remove_prefix(1);
    }
    return view;
  }

  /// A not-applicable answer carries exactly one sentinel prefix.
  bool well_formed() const {
    if (!sentinel()) return true;
    return !leading_sentinel(text()).has_value();
  }

  friend bool operator==(const AuxAnswer&, const AuxAnswer&) = default;

 private:
  static std::optional<Sentinel> leading_sentinel(std::string_view s) {
    for (const auto& [text, value] : kSentinels) {
      if (s.starts_with(text)) return value;
    }
    return std::nullopt;
  }

  std::string raw_;
};

/// Answers to the four auxiliary questions (Q1..Q4).
struct AuxAnnotation {
  AuxAnswer q1, q2, q3, q4;

  const AuxAnswer& at(std::size_t i) const {
    switch (i) {
      case 0: return q1;
      case 1: return q2;
      case 2: return q3;
      default: return q4;
    }
  }
  AuxAnswer& at(std::size_t i) {
    return const_cast<AuxAnswer&>(std::as_const(*this).at(i));
  }
  friend bool operator==(const AuxAnnotation&, const AuxAnnotation&) = default;
};

/// Allowed soft-target scores: same image, no difference worth mentioning,
/// too different.
inline bool is_soft_score(double score) {
  return score == 1.0 || score == 0.5 || score == -1.0;
}

/// One annotated query triple with its subset context. Target fields are
/// absent for hidden-label (test) files.
struct PairRecord {
  std::uint64_t pair_id = 0;
  ImageId reference;
  std::optional<ImageId> target_hard;
  std::map<ImageId, double> target_soft;
  std::string caption;
  std::optional<AuxAnnotation> aux;
  std::uint64_t subset_id = 0;
  std::vector<ImageId> members;
  std::optional<int> reference_rank;
  std::optional<int> target_rank;

  bool labeled() const { return target_hard.has_value(); }
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// Checks the membership, rank and score invariants of a record.
inline void validate_pair_record(const PairRecord& r) {
  const auto where = "pair " + std::to_string(r.pair_id) + ": ";
  if (r.caption.empty()) throw DataError(where + "empty caption");
  if (std::find(r.members.begin(), r.members.end(), r.reference) ==
      r.members.end()) {
    throw ConsistencyError(where + "reference is not a subset member");
  }
  auto rank_ok = [&](const std::optional<int>& rank) {
    return !rank || (*rank >= 0 && static_cast<std::size_t>(*rank) < r.members.size());
  };
  if (!rank_ok(r.reference_rank) || !rank_ok(r.target_rank)) {
    throw ConsistencyError(where + "rank out of range");
  }
  if (r.reference_rank && r.members[*r.reference_rank] != r.reference) {
    throw ConsistencyError(where + "reference_rank does not index reference");
  }
  if (r.reference_rank && r.target_rank && *r.reference_rank == *r.target_rank) {
    throw ConsistencyError(where + "reference_rank equals target_rank");
  }
  for (const auto& [id, score] : r.target_soft) {
    if (!is_soft_score(score)) {
      throw DataError(where + "soft score " + std::to_string(score) +
                      " for " + id.str() + " not in {1.0, 0.5, -1.0}");
    }
  }
  if (r.aux) {
    for (std::size_t i = 0; i < 4; ++i) {
      if (!r.aux->at(i).well_formed()) {
        throw DataError(where + "Q" + std::to_string(i + 1) +
                        " carries more than one sentinel prefix");
      }
    }
  }
  if (!r.target_hard) return;
  if (*r.target_hard == r.reference) {
    throw ConsistencyError(where + "reference equals target");
  }
  if (std::find(r.members.begin(), r.members.end(), *r.target_hard) ==
      r.members.end()) {
    throw ConsistencyError(where + "target is not a subset member");
  }
  if (r.target_rank && r.members[*r.target_rank] != *r.target_hard) {
    throw ConsistencyError(where + "target_rank does not index target");
  }
  if (!r.target_soft.empty()) {
    const auto it = r.target_soft.find(*r.target_hard);
    if (it == r.target_soft.end() || it->second != 1.0) {
      throw ConsistencyError(where + "target_soft must score target_hard 1.0");
    }
  }
}

/// Record-vs-subset check used when a mined subset list is available.
inline void validate_against_subset(const PairRecord& r, const Subset& s) {
  validate_pair_record(r);
  if (r.subset_id != s.id || r.members != s.members) {
    throw ConsistencyError("pair " + std::to_string(r.pair_id) +
                           ": members differ from subset " +
                           std::to_string(s.id));
  }
  if (!r.reference_rank || (r.labeled() && !r.target_rank)) {
    throw ConsistencyError("pair " + std::to_string(r.pair_id) +
                           ": ranks required for subset validation");
  }
}

/// A query ⟨reference, modifier⟩ in model-ready form.
struct Query {
  std::uint64_t pair_id = 0;
  std::size_t reference_index = 0;
  std::vector<std::int32_t> tokens;
};

/// Ordered candidate list for one query; gold_rank is 1-based.
struct RankingResult {
  std::uint64_t pair_id = 0;
  std::vector<ImageId> candidates;
  std::optional<std::size_t> gold_rank;
};

}  // namespace cirbench

#endif  // CIRBENCH_TYPES_HPP_
