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
#include <cctype>
#include <sstream>
#include <string>
#include <vector>

#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "fixtures.hpp"

namespace cirbench {
namespace {

using testing::image;

const char* kOfficialStyle = R"([
  {
    "pairid": 12063,
    "reference": "dev-245-2-img1",
    "target_hard": "dev-846-2-img0",
    "target_soft": {"dev-846-2-img0": 1.0, "dev-743-3-img0": -1.0},
    "caption": "Remove all but one dog and add a woman hugging it.",
    "caption_extend": {"0": "[c] None existed", "1": "the dog is brown", "2": "[cr1] covered", "3": "[cr0] Nothing worth mentioning"},
    "img_set": {"id": 264, "members": ["dev-245-2-img1", "dev-846-2-img0", "dev-743-3-img0", "dev-1-0-img1", "dev-2-0-img1", "dev-3-0-img1"], "reference_rank": 0, "target_rank": 1}
  }
])";

TEST(ReadDataset, AuxSentinelAndSoftTargets) {
  const auto file = parse_dataset(kOfficialStyle, Split::kVal);
  ASSERT_EQ(file.records.size(), 1u);
  const auto& r = file.records[0];
  ASSERT_TRUE(r.aux.has_value());
  EXPECT_FALSE(r.aux->q4.applicable());
  EXPECT_EQ(r.aux->q4.sentinel(), Sentinel::kNothingWorthMentioning);
  EXPECT_EQ(r.aux->q1.sentinel(), Sentinel::kNotApplicable);
  EXPECT_TRUE(r.aux->q2.applicable());
  EXPECT_EQ(r.target_soft.size(), 2u);
  EXPECT_EQ(r.target_soft.at(*r.target_hard), 1.0);
  EXPECT_EQ(r.target_soft.at(ImageId("dev-743-3-img0")), -1.0);
  EXPECT_EQ(r.subset_id, 264u);
  EXPECT_TRUE(file.warnings.empty());
}

TEST(ReadDataset, AcceptsArrayObjectAndJsonLines) {
  const auto base = testing::disjoint_dataset(2);
  const auto array_text = serialize_dataset(base);
  const auto lines_text = serialize_dataset(base, true);
  nlohmann::ordered_json keyed;
  for (const auto& r : base.records) {
    auto j = record_to_json(r);
    j.erase("pairid");
    keyed[std::to_string(r.pair_id)] = j;
  }
  EXPECT_EQ(parse_dataset(array_text, Split::kVal), base);
  EXPECT_EQ(parse_dataset(lines_text, Split::kVal), base);
  EXPECT_EQ(parse_dataset(keyed.dump(), Split::kVal), base);
  EXPECT_EQ(parse_dataset(record_to_json(base.records[0]).dump(), Split::kVal).records.size(), 1u);
}

TEST(ReadDataset, MissingRequiredKeyNamesRecord) {
  auto j = nlohmann::json::parse(serialize_dataset(testing::disjoint_dataset(1)));
  j[3].erase("caption");
  try {
    parse_dataset(j.dump(), Split::kVal);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("caption"), std::string::npos);
  }
  auto k = nlohmann::json::parse(serialize_dataset(testing::disjoint_dataset(1)));
  k[0]["img_set"].erase("members");
  EXPECT_THROW(parse_dataset(k.dump(), Split::kVal), DataError);
}

TEST(ReadDataset, UnknownKeysWarn) {
  auto j = nlohmann::json::parse(serialize_dataset(testing::disjoint_dataset(1)));
  j[0]["extra"] = 1;
  j[1]["img_set"]["color"] = "red";
  const auto file = parse_dataset(j.dump(), Split::kVal);
  EXPECT_EQ(file.warnings.size(), 2u);
  EXPECT_EQ(file.records.size(), 9u);
}

TEST(ReadDataset, RejectsDuplicatesAndInvalidRecords) {
  auto j = nlohmann::json::parse(serialize_dataset(testing::disjoint_dataset(1)));
  j[1]["pairid"] = j[0]["pairid"];
  EXPECT_THROW(parse_dataset(j.dump(), Split::kVal), DataError);
  auto k = nlohmann::json::parse(serialize_dataset(testing::disjoint_dataset(1)));
  k[0]["target_soft"][k[0]["reference"].get<std::string>()] = 0.3;
  EXPECT_THROW(parse_dataset(k.dump(), Split::kVal), DataError);
  EXPECT_THROW(parse_dataset("{\"x\": {\"reference\": 1}}", Split::kVal), Error);
  EXPECT_THROW(parse_dataset("[1, 2", Split::kVal), FormatError);
}

TEST(ReadDataset, SplitFromFileName) {
  EXPECT_EQ(split_from_filename("cap.rc2.train.json"), Split::kTrain);
  EXPECT_EQ(split_from_filename("cap.rc2.val.json"), Split::kVal);
  EXPECT_EQ(split_from_filename("cap.rc2.test1.json"), Split::kTest);
  EXPECT_FALSE(split_from_filename("annotations.json").has_value());
}

TEST(WriteDataset, RoundTripIsCanonical) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto file = testing::random_dataset(rng, 50 + uniform_index(rng, 50));
    const auto first = serialize_dataset(file);
    const auto back = parse_dataset(first, file.split);
    EXPECT_EQ(back, file);
    EXPECT_EQ(serialize_dataset(back), first);
    EXPECT_EQ(serialize_dataset(parse_dataset(serialize_dataset(file, true), file.split), true),
              serialize_dataset(file, true));
  }
}

TEST(WriteDataset, KeyOrderIsCanonical) {
  auto j = nlohmann::ordered_json::parse(kOfficialStyle);
  // Reverse the key order of the record; output order must not change.
  nlohmann::ordered_json reversed;
  std::vector<std::string> keys;
  for (auto& [k, v] : j[0].items()) keys.push_back(k);
  std::reverse(keys.begin(), keys.end());
  for (const auto& k : keys) reversed[k] = j[0][k];
  const auto a = serialize_dataset(parse_dataset(j.dump(), Split::kVal));
  const auto b = serialize_dataset(parse_dataset(nlohmann::json::array({reversed}).dump(), Split::kVal));
  EXPECT_EQ(a, b);
  EXPECT_LT(a.find("\"pairid\""), a.find("\"reference\""));
  EXPECT_LT(a.find("\"caption\""), a.find("\"img_set\""));
}

TEST(WriteDataset, HiddenLabelsStayHidden) {
  const auto hidden = without_labels(testing::disjoint_dataset(1, Split::kTest));
  const auto text = serialize_dataset(hidden);
  EXPECT_EQ(text.find("target_hard"), std::string::npos);
  EXPECT_EQ(text.find("target_rank"), std::string::npos);
  EXPECT_EQ(parse_dataset(text, Split::kTest), hidden);
}

TEST(Subsets, JsonLinesRoundTrip) {
  std::vector<Subset> subsets{{0, {image(0), image(1)}, {1.0, 0.5}}, {1, {image(2), image(3)}, {}}};
  const auto text = serialize_subsets(subsets);
  const auto back = parse_subsets(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].members, subsets[0].members);
  EXPECT_EQ(back[0].seed_similarities, subsets[0].seed_similarities);
  EXPECT_EQ(serialize_subsets(back), text);
  EXPECT_THROW(parse_subsets("{\"members\": []}\n"), FormatError);
}

TEST(DatasetStats, EmptyFileIsZero) {
  const DatasetFile empty;
  const auto rows = dataset_stats(std::span<const DatasetFile>(&empty, 1));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].subsets, 0u);
  EXPECT_EQ(rows[0].pairs, 0u);
  EXPECT_EQ(rows[0].pairs_per_subset, 0.0);
  EXPECT_EQ(rows[0].images, 0u);
}

TEST(DatasetStats, TwoSubsetFixture) {
  const auto file = testing::disjoint_dataset(2);
  const auto rows = dataset_stats(std::span<const DatasetFile>(&file, 1));
  EXPECT_EQ(rows[0].subsets, 2u);
  EXPECT_EQ(rows[0].pairs, 18u);
  EXPECT_DOUBLE_EQ(rows[0].pairs_per_subset, 9.0);
  EXPECT_EQ(rows[0].images, 12u);
}

TEST(DatasetStats, TotalsAcrossSplitsAndPermutationInvariance) {
  Rng rng(5);
  std::vector<DatasetFile> files{testing::random_dataset(rng, 40, Split::kTrain),
                                 testing::random_dataset(rng, 30, Split::kVal)};
  const auto rows = dataset_stats(files);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].name, "total");
  EXPECT_EQ(rows[2].pairs, 70u);
  auto shuffled = files;
  for (auto& f : shuffled) shuffle(std::span<PairRecord>(f.records), rng);
  const auto again = dataset_stats(shuffled);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(again[i].subsets, rows[i].subsets);
    EXPECT_EQ(again[i].pairs, rows[i].pairs);
    EXPECT_EQ(again[i].images, rows[i].images);
    EXPECT_EQ(again[i].pairs_per_subset, rows[i].pairs_per_subset);
  }
}

TEST(CaptionStats, SingleCaption) {
  DatasetFile f = testing::disjoint_dataset(1);
  f.records.resize(1);
  f.records[0].caption = "add a dog";
  const auto s = caption_length_stats(std::span<const DatasetFile>(&f, 1));
  EXPECT_EQ(s.captions, 1u);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.median, 3.0);
  EXPECT_DOUBLE_EQ(s.stddev, 0.0);
}

// Words are blank-separated pieces holding at least one letter or digit.
double oracle_word_count(const std::string& caption) {
  std::istringstream in(caption);
  std::string piece;
  double n = 0;
  while (in >> piece) {
    for (auto at = piece.find("–"); at != std::string::npos; at = piece.find("–")) piece.erase(at, 3);
    if (std::any_of(piece.begin(), piece.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; })) {
      ++n;
    }
  }
  return n;
}

TEST(CaptionStats, MatchesWordCountOracle) {
  Rng rng(44);
  DatasetFile f = testing::random_dataset(rng, 1000);
  std::vector<double> counts;
  for (const auto& r : f.records) counts.push_back(oracle_word_count(r.caption));
  double sum = 0;
  for (double c : counts) sum += c;
  const double mean = sum / 1000.0;
  double var = 0;
  for (double c : counts) var += (c - mean) * (c - mean);
  std::sort(counts.begin(), counts.end());
  const auto s = caption_length_stats(std::span<const DatasetFile>(&f, 1));
  EXPECT_EQ(s.captions, 1000u);
  EXPECT_DOUBLE_EQ(s.mean, mean);
  EXPECT_DOUBLE_EQ(s.median, 0.5 * (counts[499] + counts[500]));
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(var / 1000.0));
}

}  // namespace
}  // namespace cirbench
