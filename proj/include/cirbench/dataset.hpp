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

#ifndef CIRBENCH_DATASET_HPP_
#define CIRBENCH_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cirbench/error.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/pairs.hpp"
#include "cirbench/text.hpp"
#include "cirbench/types.hpp"

namespace cirbench {

struct DatasetFile {
  Split split = Split::kTrain;
  std::vector<PairRecord> records;
  std::vector<std::string> warnings;  // not part of equality

  std::vector<const PairRecord*> labeled() const {
    std::vector<const PairRecord*> out;
    for (const auto& r : records) {
      if (r.labeled()) out.push_back(&r);
    }
    return out;
  }

  /// Distinct images referenced anywhere in the file, sorted by id.
  std::vector<ImageId> images() const {
    std::set<ImageId> all;
    for (const auto& r : records) {
      all.insert(r.reference);
      if (r.target_hard) all.insert(*r.target_hard);
      all.insert(r.members.begin(), r.members.end());
    }
    return {all.begin(), all.end()};
  }

  friend bool operator==(const DatasetFile& a, const DatasetFile& b) {
    return a.split == b.split && a.records == b.records;
  }
};

/// Guesses the split from a file name such as "cap.rc2.val.json".
inline std::optional<Split> split_from_filename(const std::filesystem::path& path) {
  const auto name = path.filename().string();
  if (name.find("train") != std::string::npos) return Split::kTrain;
  if (name.find("val") != std::string::npos || name.find("dev") != std::string::npos) {
    return Split::kVal;
  }
  if (name.find("test") != std::string::npos) return Split::kTest;
  return std::nullopt;
}

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline const std::set<std::string> kRecordKeys = {
    "pairid", "reference", "target_hard", "target_soft", "caption",
    "caption_extend", "img_set", "reference_rank", "target_rank"};
inline const std::set<std::string> kImgSetKeys = {"id", "members", "reference_rank",
                                                  "target_rank"};

inline std::string record_where(std::size_t index) {
  return "record " + std::to_string(index) + ": ";
}

inline const json& require(const json& obj, const char* key, std::size_t index) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(record_where(index) + "missing required key '" + key + "'");
  }
  return *it;
}

inline std::optional<int> optional_rank(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<int>();
}

inline PairRecord parse_record(const json& obj, std::size_t index,
                               std::vector<std::string>& warnings) {
  if (!obj.is_object()) throw DataError(record_where(index) + "not a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!kRecordKeys.contains(key)) {
      warnings.push_back(record_where(index) + "unknown key '" + key + "'");
    }
  }
  PairRecord r;
  try {
    r.pair_id = require(obj, "pairid", index).get<std::uint64_t>();
    r.reference = ImageId(require(obj, "reference", index).get<std::string>());
    r.caption = require(obj, "caption", index).get<std::string>();
    const auto& img_set = require(obj, "img_set", index);
    if (!img_set.is_object()) throw DataError(record_where(index) + "img_set is not an object");
    for (const auto& [key, value] : img_set.items()) {
      if (!kImgSetKeys.contains(key)) {
        warnings.push_back(record_where(index) + "unknown img_set key '" + key + "'");
      }
    }
    const auto members_it = img_set.find("members");
    if (members_it == img_set.end()) {
      throw DataError(record_where(index) + "missing required key 'img_set.members'");
    }
    for (const auto& m : *members_it) r.members.emplace_back(m.get<std::string>());
    if (const auto it = img_set.find("id"); it != img_set.end()) r.subset_id = it->get<std::uint64_t>();

    if (const auto it = obj.find("target_hard"); it != obj.end() && !it->is_null()) {
      r.target_hard = ImageId(it->get<std::string>());
    }
    if (const auto it = obj.find("target_soft"); it != obj.end() && !it->is_null()) {
      for (const auto& [id, score] : it->items()) r.target_soft[ImageId(id)] = score.get<double>();
    }
    if (const auto it = obj.find("caption_extend"); it != obj.end() && !it->is_null()) {
      AuxAnnotation aux;
      for (std::size_t q = 0; q < 4; ++q) {
        const auto key = std::to_string(q);
        const auto a = it->find(key);
        if (a == it->end()) {
          throw DataError(record_where(index) + "caption_extend lacks key '" + key + "'");
        }
        aux.at(q) = AuxAnswer(a->get<std::string>());
      }
      r.aux = std::move(aux);
    }
    r.reference_rank = optional_rank(img_set, "reference_rank");
    if (!r.reference_rank) r.reference_rank = optional_rank(obj, "reference_rank");
    r.target_rank = optional_rank(img_set, "target_rank");
    if (!r.target_rank) r.target_rank = optional_rank(obj, "target_rank");
  } catch (const json::exception& e) {
    throw DataError(record_where(index) + e.what());
  }
  try {
    validate_pair_record(r);
  } catch (const Error& e) {
    throw DataError(record_where(index) + e.what());
  }
  return r;
}

}  // namespace detail

/// Parses CIRR annotation text: a JSON array of records, an object keyed by
/// pair id, or JSON lines.
inline DatasetFile parse_dataset(const std::string& text, Split split) {
  using detail::json;
  DatasetFile file;
  file.split = split;
  std::vector<json> docs;
  try {
    // Ordered parse keeps keyed-object records in file order.
    auto doc = nlohmann::ordered_json::parse(text);
    if (doc.is_array()) {
      for (const auto& e : doc) docs.emplace_back(e);
    } else if (doc.is_object() && doc.contains("reference")) {
      docs.emplace_back(doc);
    } else if (doc.is_object()) {
      for (auto& [key, item] : doc.items()) {
        json value(item);
        if (value.is_object() && !value.contains("pairid")) {
          const bool digits = !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
            return c >= '0' && c <= '9';
          });
          if (!digits) throw FormatError("record key '" + key + "' is not a pair id");
          value["pairid"] = std::stoull(key);
        }
        docs.push_back(std::move(value));
      }
    } else {
      throw FormatError("dataset must be a JSON array, object or JSON lines");
    }
  } catch (const json::parse_error&) {
    std::istringstream lines(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(lines, line);) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        docs.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto record = detail::parse_record(docs[i], i, file.warnings);
    if (!seen.insert(record.pair_id).second) {
      throw DataError(detail::record_where(i) + "duplicate pairid " +
                      std::to_string(record.pair_id));
    }
    file.records.push_back(std::move(record));
  }
  return file;
}

inline DatasetFile read_dataset(const std::filesystem::path& path,
                                std::optional<Split> split = std::nullopt) {
  return parse_dataset(detail::read_file(path),
                       split.value_or(split_from_filename(path).value_or(Split::kTrain)));
}

/// Canonical key order: pairid, reference, target_hard, target_soft, caption,
/// caption_extend, img_set{id, members, reference_rank, target_rank}.
inline nlohmann::ordered_json record_to_json(const PairRecord& r) {
  nlohmann::ordered_json obj;
  obj["pairid"] = r.pair_id;
  obj["reference"] = r.reference.str();
  if (r.target_hard) obj["target_hard"] = r.target_hard->str();
  if (r.target_hard || !r.target_soft.empty()) {
    nlohmann::ordered_json soft = nlohmann::ordered_json::object();
    for (const auto& [id, score] : r.target_soft) soft[id.str()] = score;
    obj["target_soft"] = std::move(soft);
  }
  obj["caption"] = r.caption;
  if (r.aux) {
    nlohmann::ordered_json ext;
    for (std::size_t q = 0; q < 4; ++q) ext[std::to_string(q)] = r.aux->at(q).raw();
    obj["caption_extend"] = std::move(ext);
  }
  nlohmann::ordered_json img_set;
  img_set["id"] = r.subset_id;
  nlohmann::ordered_json members = nlohmann::ordered_json::array();
  for (const auto& m : r.members) members.push_back(m.str());
  img_set["members"] = std::move(members);
  if (r.reference_rank) img_set["reference_rank"] = *r.reference_rank;
  if (r.target_rank) img_set["target_rank"] = *r.target_rank;
  obj["img_set"] = std::move(img_set);
  return obj;
}

inline std::string serialize_dataset(const DatasetFile& file, bool json_lines = false) {
  if (json_lines) {
    std::string out;
    for (const auto& r : file.records) out += record_to_json(r).dump(-1, ' ', false) + "\n";
    return out;
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : file.records) arr.push_back(record_to_json(r));
  return arr.dump(4, ' ', false) + "\n";
}

inline void write_dataset(const DatasetFile& file, const std::filesystem::path& path,
                          bool json_lines = false) {
  detail::write_file(path, serialize_dataset(file, json_lines));
}

/// Copy with targets removed, as released for a hidden-label split.
inline DatasetFile without_labels(DatasetFile file) {
  for (auto& r : file.records) {
    r.target_hard.reset();
    r.target_soft.clear();
    r.target_rank.reset();
  }
  return file;
}

inline nlohmann::ordered_json subset_to_json(const Subset& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["members"] = nlohmann::ordered_json::array();
  for (const auto& m : s.members) j["members"].push_back(m.str());
  j["seed_similarities"] = s.seed_similarities;
  return j;
}

/// One subset object per line.
inline std::string serialize_subsets(std::span<const Subset> subsets) {
  std::string out;
  for (const auto& s : subsets) out += subset_to_json(s).dump() + "\n";
  return out;
}

inline std::vector<Subset> parse_subsets(const std::string& text) {
  std::vector<Subset> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Subset s;
      s.id = j.at("id").get<std::uint64_t>();
      for (const auto& m : j.at("members")) s.members.emplace_back(m.get<std::string>());
      if (j.contains("seed_similarities")) s.seed_similarities = j["seed_similarities"].get<std::vector<double>>();
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("subsets line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

struct SplitStats {
  std::string name;
  std::size_t subsets = 0;
  std::size_t pairs = 0;
  double pairs_per_subset = 0.0;
  std::size_t images = 0;
};

namespace detail {

inline SplitStats stats_over(std::string name, std::span<const DatasetFile* const> files) {
  SplitStats s;
  s.name = std::move(name);
  std::set<std::uint64_t> subsets;
  std::set<ImageId> images;
  for (const auto* f : files) {
    for (const auto& r : f->records) {
      subsets.insert(r.subset_id);
      images.insert(r.reference);
      if (r.target_hard) images.insert(*r.target_hard);
      images.insert(r.members.begin(), r.members.end());
      ++s.pairs;
    }
  }
  s.subsets = subsets.size();
  s.images = images.size();
  s.pairs_per_subset = s.subsets == 0 ? 0.0 : static_cast<double>(s.pairs) / static_cast<double>(s.subsets);
  return s;
}

}  // namespace detail

/// One row per input file (named by its split) plus a "total" row when more
/// than one file is given.
inline std::vector<SplitStats> dataset_stats(std::span<const DatasetFile> files) {
  std::vector<SplitStats> rows;
  std::vector<const DatasetFile*> all;
  for (const auto& f : files) {
    const DatasetFile* one[] = {&f};
    rows.push_back(detail::stats_over(std::string(to_string(f.split)), one));
    all.push_back(&f);
  }
  if (files.size() > 1) rows.push_back(detail::stats_over("total", all));
  if (files.empty()) rows.push_back(detail::stats_over("total", all));
  return rows;
}

struct CaptionLengthStats {
  std::size_t captions = 0;
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;  // population
};

inline CaptionLengthStats caption_length_stats(std::span<const DatasetFile> files) {
  std::vector<double> lengths;
  for (const auto& f : files) {
    for (const auto& r : f.records) lengths.push_back(static_cast<double>(tokenize(r.caption).size()));
  }
  CaptionLengthStats s;
  s.captions = lengths.size();
  if (lengths.empty()) return s;
  double sum = 0.0;
  for (double x : lengths) sum += x;
  s.mean = sum / static_cast<double>(lengths.size());
  double var = 0.0;
  for (double x : lengths) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(lengths.size()));
  std::sort(lengths.begin(), lengths.end());
  const std::size_t n = lengths.size();
  s.median = n % 2 == 1 ? lengths[n / 2] : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
  return s;
}

}  // namespace cirbench

#endif  // CIRBENCH_DATASET_HPP_
