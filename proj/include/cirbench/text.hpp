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

#ifndef CIRBENCH_TEXT_HPP_
#define CIRBENCH_TEXT_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cirbench/error.hpp"

namespace cirbench {

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; malformed bytes decode as
// themselves so tokenisation never throws.
inline char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) {
    return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F);
  };
  if (b0 < 0x80) { len = 1; return b0; }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    len = 2;
    return (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) |
           (byte(2) << 6) | byte(3);
  }
  len = 1;
  return b0;
}

inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

inline bool is_punctuation(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
           (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
  }
  return c == 0xA1 || c == 0xAB || c == 0xBB || c == 0xBF ||
         (c >= 0x2010 && c <= 0x2027) || (c >= 0x3001 && c <= 0x3003);
}

}  // namespace detail

/// Lowercases ASCII letters, splits on Unicode whitespace and strips leading
/// and trailing punctuation from each piece. Pieces that are pure
/// punctuation are dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
  struct Piece { std::size_t begin, end; };
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = 0;
    while (i < text.size() && detail::is_unicode_space(detail::decode_utf8(text, i, len))) {
      i += len;
    }
    if (i >= text.size()) break;
    // Collect code point boundaries of this word.
    std::vector<Piece> points;
    while (i < text.size()) {
      const char32_t c = detail::decode_utf8(text, i, len);
      if (detail::is_unicode_space(c)) break;
      points.push_back({i, i + len});
      i += len;
    }
    std::size_t lo = 0, hi = points.size();
    auto punct_at = [&](std::size_t k) {
      std::size_t l = 0;
      return detail::is_punctuation(detail::decode_utf8(text, points[k].begin, l));
    };
    while (lo < hi && punct_at(lo)) ++lo;
    while (hi > lo && punct_at(hi - 1)) --hi;
    if (lo == hi) continue;
    std::string token(text.substr(points[lo].begin, points[hi - 1].end - points[lo].begin));
    for (char& c : token) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

/// Token-to-id table. Ids 0 and 1 are reserved for the out-of-vocabulary
/// token and the classification token; learned words follow in
/// lexicographic order.
class Vocabulary {
 public:
  static constexpr std::int32_t kOov = 0;
  static constexpr std::int32_t kCls = 1;
  static constexpr std::int32_t kReserved = 2;

  Vocabulary() : words_{"[OOV]", "[CLS]"} {}

  explicit Vocabulary(std::vector<std::string> words) : Vocabulary() {
    for (auto& w : words) {
      if (index_.contains(w)) throw DataError("duplicate vocabulary word " + w);
      index_.emplace(w, static_cast<std::int32_t>(words_.size()));
      words_.push_back(std::move(w));
    }
  }

  /// Builds from training captions, keeping words seen at least min_count times.
  static Vocabulary build(const std::vector<std::string>& captions, std::size_t min_count = 1) {
    std::map<std::string, std::size_t> counts;
    for (const auto& caption : captions) {
      for (auto& token : tokenize(caption)) ++counts[std::move(token)];
    }
    std::vector<std::string> words;
    for (const auto& [word, count] : counts) {
      if (count >= min_count) words.push_back(word);
    }
    return Vocabulary(std::move(words));
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }

  /// Learned words only, without the reserved entries.
  std::vector<std::string> learned_words() const {
    return {words_.begin() + kReserved, words_.end()};
  }

  std::int32_t lookup(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kOov : it->second;
  }

  /// Token ids for a caption; never empty (falls back to one OOV token).
  std::vector<std::int32_t> encode(std::string_view caption) const {
    std::vector<std::int32_t> ids;
    for (const auto& token : tokenize(caption)) ids.push_back(lookup(token));
    if (ids.empty()) ids.push_back(kOov);
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

}  // namespace cirbench

#endif  // CIRBENCH_TEXT_HPP_
