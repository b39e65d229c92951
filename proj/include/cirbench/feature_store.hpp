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

#ifndef CIRBENCH_FEATURE_STORE_HPP_
#define CIRBENCH_FEATURE_STORE_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cirbench/error.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

struct NormalizeResult {
  std::vector<double> values;
  bool degenerate = false;
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Scales v to unit Euclidean norm. Vectors with norm below 1e-12 come back
/// unchanged and flagged.
template <typename T>
NormalizeResult l2_normalize(std::span<const T> v) {
  NormalizeResult out;
  out.values.assign(v.begin(), v.end());
  double sq = 0.0;
  for (double x : out.values) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm < kDegenerateNorm) {
    out.degenerate = true;
    return out;
  }
  for (double& x : out.values) x /= norm;
  return out;
}

inline NormalizeResult l2_normalize(const std::vector<double>& v) {
  return l2_normalize(std::span<const double>(v));
}

/// Id-to-vector table of 32-bit image descriptors. Row order is insertion
/// order and is stable; lookups are by id or by row.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw DataError("feature dimension must be positive");
  }

  void add(ImageId id, std::span<const float> vector) {
    if (vector.size() != dimension_) {
      throw ConsistencyError("vector for " + id.str() + " has " +
                             std::to_string(vector.size()) +
                             " components, expected " +
                             std::to_string(dimension_));
    }
    for (float x : vector) {
      if (!std::isfinite(x)) {
        throw DataError("non-finite component in vector for " + id.str());
      }
    }
    if (index_.contains(id.str())) {
      throw DataError("duplicate image id " + id.str());
    }
    index_.emplace(id.str(), ids_.size());
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), vector.begin(), vector.end());
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const ImageId& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<ImageId>& ids() const { return ids_; }

  std::span<const float> row(std::size_t row) const {
    return {data_.data() + row * dimension_, dimension_};
  }

  std::optional<std::size_t> find(const ImageId& id) const {
    const auto it = index_.find(id.str());
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const ImageId& id) const { return find(id).has_value(); }

  std::size_t index_of(const ImageId& id) const {
    if (const auto row = find(id)) return *row;
    throw DataError("image " + id.str() + " not in feature store");
  }

  std::span<const float> at(const ImageId& id) const {
    return row(index_of(id));
  }

  std::vector<double> as_double(std::size_t r) const {
    const auto v = row(r);
    return {v.begin(), v.end()};
  }

  friend bool operator==(const FeatureStore& a, const FeatureStore& b) {
    if (a.dimension_ != b.dimension_ || a.ids_ != b.ids_) return false;
    return std::memcmp(a.data_.data(), b.data_.data(),
                       a.data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<ImageId> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> data_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace detail

inline constexpr char kFeatureMagic[4] = {'C', 'F', 'V', '1'};

/// Sidecar path used when none is given: "<features>.ids".
inline std::filesystem::path default_ids_path(const std::filesystem::path& features) {
  auto p = features;
  p += ".ids";
  return p;
}

/// Decodes a CFV1 payload plus its id list.
inline FeatureStore parse_feature_store(const std::string& bytes,
                                        const std::vector<std::string>& ids) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("missing CFV1 header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t count = detail::get_u32(p + 4);
  const std::uint32_t dim = detail::get_u32(p + 8);
  if (dim == 0) throw FormatError("CFV1 header declares dimension 0");
  const std::uint64_t payload = static_cast<std::uint64_t>(count) * dim * 4;
  if (bytes.size() - 12 != payload) {
    throw ConsistencyError("CFV1 header declares " + std::to_string(count) +
                           " rows of dimension " + std::to_string(dim) +
                           " but payload holds " + std::to_string(bytes.size() - 12) +
                           " bytes");
  }
  if (ids.size() != count) {
    throw ConsistencyError("id file lists " + std::to_string(ids.size()) +
                           " ids for " + std::to_string(count) + " vectors");
  }
  FeatureStore store(dim);
  std::vector<float> row(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      std::uint32_t bits = detail::get_u32(p + 12 + (static_cast<std::uint64_t>(r) * dim + c) * 4);
      row[c] = std::bit_cast<float>(bits);
    }
    store.add(ImageId(ids[r]), row);
  }
  return store;
}

inline std::vector<std::string> read_id_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ids.push_back(line);
  }
  return ids;
}

/// Reads a CFV1 feature file and its sidecar id list.
inline FeatureStore load_feature_store(const std::filesystem::path& path,
                                       std::optional<std::filesystem::path> ids_path = {}) {
  const auto bytes = detail::read_file(path);
  const auto ids = read_id_lines(ids_path.value_or(default_ids_path(path)));
  return parse_feature_store(bytes, ids);
}

inline std::string serialize_feature_store(const FeatureStore& store) {
  std::string out(kFeatureMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(store.dimension()));
  out.reserve(out.size() + store.size() * store.dimension() * 4);
  for (std::size_t r = 0; r < store.size(); ++r) {
    for (float x : store.row(r)) detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

inline void write_feature_store(const FeatureStore& store, const std::filesystem::path& path,
                                std::optional<std::filesystem::path> ids_path = {}) {
  detail::write_file(path, serialize_feature_store(store));
  std::string lines;
  for (const auto& id : store.ids()) lines += id.str() + "\n";
  detail::write_file(ids_path.value_or(default_ids_path(path)), lines);
}

}  // namespace cirbench

#endif  // CIRBENCH_FEATURE_STORE_HPP_
