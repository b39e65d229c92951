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
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "cirbench/checkpoint.hpp"
#include "cirbench/error.hpp"
#include "cirbench/eval.hpp"
#include "cirbench/server.hpp"
#include "cirbench/synthetic.hpp"
#include "cirbench/trainer.hpp"
#include "fixtures.hpp"

namespace cirbench {
namespace {

using testing::disjoint_dataset;
using testing::image;
using testing::TempDir;

struct Trained {
  SyntheticCorpus corpus;
  Model model;
};

const Trained& trained() {
  static const Trained t = [] {
    SynthConfig sc;
    sc.images = 150;
    sc.attributes = 3;
    sc.values = 4;
    sc.rng_seed = 21;
    Trained out{make_synthetic_corpus(sc), {}};
    ComposerConfig mc;
    mc.kind = ComposerKind::kConcatMlp;
    mc.d_model = 8;
    mc.d_ff = 16;
    TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs = 4;
    tc.rng_seed = 3;
    out.model = train(mc, {&out.corpus.train, &out.corpus.features}, tc, 2).model;
    return out;
  }();
  return t;
}

Model identity_model(std::size_t dim) {
  ComposerConfig c;
  c.kind = ComposerKind::kImageOnly;
  c.feature_dim = dim;
  c.d_model = dim;
  c.projection = ProjectionKind::kIdentity;
  return Model{Vocabulary(), ComposerParameters(c)};
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto& model = trained().model;
  const auto bytes = serialize_model(model);
  const auto back = parse_model(bytes);
  EXPECT_EQ(back.params, model.params);
  EXPECT_EQ(back.vocab, model.vocab);
  EXPECT_EQ(serialize_model(back), bytes);
  TempDir dir;
  save_model(model, dir / "m.cpr");
  EXPECT_EQ(load_model(dir / "m.cpr").params, model.params);
}

TEST(Checkpoint, RejectsDamage) {
  const auto bytes = serialize_model(trained().model);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_model(bad_magic), FormatError);
  EXPECT_THROW(parse_model(bytes.substr(0, 8)), FormatError);
  EXPECT_THROW(parse_model(bytes.substr(0, bytes.size() - 8)), ConsistencyError);
  EXPECT_THROW(parse_model(bytes + "12345678"), ConsistencyError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(parse_model(bad_version), FormatError);
}

TEST(Retriever, GlobalPoolExcludesReference) {
  const auto& t = trained();
  const auto& val = t.corpus.val;
  const auto corpus_size = val.images().size();
  const auto r = Retriever(t.model, t.corpus.features, val).run();
  ASSERT_EQ(r.global.size(), val.records.size());
  for (std::size_t i = 0; i < val.records.size(); ++i) {
    const auto& rec = val.records[i];
    const auto& g = r.global[i].candidates;
    EXPECT_EQ(g.size(), corpus_size - 1);
    EXPECT_EQ(std::count(g.begin(), g.end(), rec.reference), 0);
    const auto& s = r.subset[i].candidates;
    EXPECT_EQ(s.size(), rec.members.size() - 1);
    EXPECT_EQ(std::count(s.begin(), s.end(), rec.reference), 0);
    ASSERT_TRUE(r.global[i].gold_rank.has_value());
  }
  EvalOptions with_ref;
  with_ref.include_reference = true;
  const auto w = Retriever(t.model, t.corpus.features, val, with_ref).run();
  for (const auto& g : w.global) EXPECT_EQ(g.candidates.size(), corpus_size);
}

TEST(Retriever, PlantedTargetRanksFirst) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto records = testing::subset_records(0, {image(0), image(1), image(2), image(3), image(4), image(5)}, 0);
    const std::size_t which = uniform_index(rng, records.size());
    DatasetFile file;
    file.split = Split::kVal;
    file.records = {records[which]};
    const auto ref = records[which].reference;
    const auto tgt = *records[which].target_hard;
    FeatureStore store(6);
    std::vector<float> base(6);
    for (auto& x : base) x = static_cast<float>(standard_normal(rng));
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<float> v(6);
      if (image(i) == ref) {
        v = base;
      } else if (image(i) == tgt) {
        for (std::size_t k = 0; k < 6; ++k) v[k] = base[k] + 0.01f * static_cast<float>(standard_normal(rng));
      } else {
        for (auto& x : v) x = static_cast<float>(standard_normal(rng));
      }
      store.add(image(i), v);
    }
    const auto model = identity_model(6);
    const auto r = Retriever(model, store, file).run();
    EXPECT_EQ(r.global[0].gold_rank, 1u);
    EXPECT_EQ(r.subset[0].gold_rank, 1u);
  }
}

TEST(Retriever, RejectsMissingFeatures) {
  const auto file = disjoint_dataset(2);
  Rng rng(2);
  const auto store = testing::random_store(rng, 6, 4);
  EXPECT_THROW(Retriever(identity_model(4), store, file), DataError);
  const auto wide = testing::random_store(rng, 12, 5);
  EXPECT_THROW(Retriever(identity_model(4), wide, file), DataError);
}

TEST(Submission, DepthIsMinOfFiftyAndPool) {
  const auto& t = trained();
  const auto pool = t.corpus.val.images().size() - 1;
  const auto full = make_submission(t.model, t.corpus.features, t.corpus.val);
  for (const auto& [id, e] : full.rankings) EXPECT_EQ(e.global.size(), std::min<std::size_t>(50, pool));
  EvalOptions shallow;
  shallow.depth = 3;
  const auto cut = make_submission(t.model, t.corpus.features, t.corpus.val, shallow);
  for (const auto& [id, e] : cut.rankings) {
    EXPECT_EQ(e.global.size(), 3u);
    EXPECT_EQ(e.subset.size(), 5u);
  }
  EXPECT_EQ(full.split, "val");
}

TEST(Submission, JsonRoundTrip) {
  const auto& t = trained();
  const auto s = make_submission(t.model, t.corpus.features, t.corpus.val);
  const auto j = submission_to_json(s);
  const auto back = submission_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(submission_to_json(back).dump(), j.dump());
  EXPECT_EQ(j["version"], 1);
}

TEST(Submission, MalformedJsonIsFormatError) {
  for (const char* text : {R"({"split":"val","rankings":{}})", R"({"version":2,"split":"val","rankings":{}})",
                           R"({"version":1,"split":"val","rankings":{"x1":{"global":[],"subset":[]}}})",
                           R"({"version":1,"split":"val","rankings":{"99999999999999999999999":{"global":[],"subset":[]}}})",
                           R"({"version":1,"split":"val","rankings":{"1":{"global":[3],"subset":[]}}})"}) {
    EXPECT_THROW(submission_from_json(nlohmann::json::parse(text)), FormatError) << text;
  }
}

Submission perfect(const DatasetFile& gold) {
  Submission s;
  s.split = std::string(to_string(gold.split));
  const auto images = gold.images();
  for (const auto& r : gold.records) {
    SubmissionEntry e;
    e.global.push_back(*r.target_hard);
    e.subset.push_back(*r.target_hard);
    for (const auto& m : images) {
      if (m != r.reference && m != *r.target_hard) e.global.push_back(m);
    }
    for (const auto& m : r.members) {
      if (m != r.reference && m != *r.target_hard) e.subset.push_back(m);
    }
    s.rankings.emplace(r.pair_id, std::move(e));
  }
  return s;
}

TEST(ScoreSubmission, GoldSubmissionScoresHundred) {
  const auto gold = disjoint_dataset(10);
  const auto report = score_submission(gold, perfect(gold));
  for (const auto& [k, v] : report.recall) EXPECT_EQ(v, 100.0);
  for (const auto& [k, v] : report.recall_subset) EXPECT_EQ(v, 100.0);
  EXPECT_EQ(report.composite, 100.0);
  EXPECT_EQ(report.queries, gold.records.size());
}

std::vector<std::uint64_t> rejected(const DatasetFile& gold, const Submission& s) {
  try {
    score_submission(gold, s);
  } catch (const SubmissionError& e) {
    return e.pair_ids();
  }
  return {};
}

TEST(ScoreSubmission, RejectsWholeSubmissionNamingPairs) {
  const auto gold = disjoint_dataset(10);
  const auto good = perfect(gold);
  const std::uint64_t id = gold.records[13].pair_id;

  auto missing = good;
  missing.rankings.erase(id);
  EXPECT_EQ(rejected(gold, missing), std::vector<std::uint64_t>{id});

  auto unknown = good;
  unknown.rankings[9999] = good.rankings.at(id);
  EXPECT_EQ(rejected(gold, unknown), std::vector<std::uint64_t>{9999});

  auto duplicate = good;
  duplicate.rankings.at(id).global[1] = duplicate.rankings.at(id).global[0];
  EXPECT_EQ(rejected(gold, duplicate), std::vector<std::uint64_t>{id});

  auto with_reference = good;
  with_reference.rankings.at(id).global.back() = gold.records[13].reference;
  EXPECT_EQ(rejected(gold, with_reference), std::vector<std::uint64_t>{id});

  auto foreign = good;
  foreign.rankings.at(id).global.back() = ImageId("elsewhere");
  EXPECT_EQ(rejected(gold, foreign), std::vector<std::uint64_t>{id});

  auto short_list = good;
  short_list.rankings.at(id).global.resize(10);
  EXPECT_EQ(rejected(gold, short_list), std::vector<std::uint64_t>{id});

  auto bad_subset = good;
  bad_subset.rankings.at(id).subset.pop_back();
  EXPECT_EQ(rejected(gold, bad_subset), std::vector<std::uint64_t>{id});

  auto two_bad = good;
  two_bad.rankings.at(3).subset.push_back(image(0));
  two_bad.rankings.at(40).subset.clear();
  EXPECT_EQ(rejected(gold, two_bad), (std::vector<std::uint64_t>{3, 40}));
}

TEST(ScoreSubmission, RandomSubsetRankingNearTwentyPercent) {
  const auto gold = disjoint_dataset(300);
  auto s = perfect(gold);
  Rng rng(4);
  for (auto& [id, e] : s.rankings) shuffle(std::span<ImageId>(e.subset), rng);
  const auto report = score_submission(gold, s);
  const double n = static_cast<double>(gold.records.size());
  const double sigma = 100.0 * std::sqrt(0.2 * 0.8 / n);
  EXPECT_NEAR(report.recall_subset.at(1), 20.0, 3 * sigma);
  EXPECT_NEAR(report.recall_subset.at(2), 40.0, 100.0 * 3 * std::sqrt(0.4 * 0.6 / n));
}

TEST(ScoreSubmission, MatchesLocalEvaluation) {
  const auto& t = trained();
  const auto local = evaluate(t.model, t.corpus.features, t.corpus.val);
  const auto remote = score_submission(t.corpus.val, make_submission(t.model, t.corpus.features, t.corpus.val));
  EXPECT_EQ(report_to_json(local).dump(), report_to_json(remote).dump());
}

TEST(Fingerprint, Fnv1a) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  const auto gold = disjoint_dataset(3);
  auto edited = gold;
  edited.records[0].caption += "!";
  EXPECT_EQ(dataset_fingerprint(gold), dataset_fingerprint(disjoint_dataset(3)));
  EXPECT_NE(dataset_fingerprint(gold), dataset_fingerprint(edited));
  EXPECT_EQ(dataset_fingerprint(gold).size(), 16u);
}

TEST(EvaluationService, HandlesSubmissions) {
  const auto gold = disjoint_dataset(5);
  const EvaluationService service(gold);
  const auto health = nlohmann::json::parse(service.health().body);
  EXPECT_EQ(health["status"], "ok");
  EXPECT_EQ(health["split"], "val");
  EXPECT_EQ(health["pairs"], 45);

  const auto good = submission_to_json(perfect(gold)).dump();
  const auto ok = service.submit(good);
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(ok.body, report_to_json(score_submission(gold, perfect(gold))).dump());

  EXPECT_EQ(service.submit("{not json").status, 400);
  EXPECT_EQ(service.submit(R"({"version":1})").status, 400);

  auto wrong_split = perfect(gold);
  wrong_split.split = "test";
  EXPECT_EQ(service.submit(submission_to_json(wrong_split).dump()).status, 422);

  auto missing = perfect(gold);
  missing.rankings.erase(7);
  const auto r = service.submit(submission_to_json(missing).dump());
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(nlohmann::json::parse(r.body)["pair_ids"], nlohmann::json::array({7}));
}

class LiveServer {
 public:
  LiveServer(const EvaluationService& service, std::size_t max_body) : server_(service, max_body) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.listen(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  EvaluationServer server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(EvaluationServer, ServesOverHttp) {
  const auto gold = disjoint_dataset(5);
  const EvaluationService service(gold);
  const auto body = submission_to_json(perfect(gold)).dump();
  LiveServer live(service, body.size() + 100);
  httplib::Client client("127.0.0.1", live.port());

  const auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(nlohmann::json::parse(health->body)["fingerprint"], service.fingerprint());

  const auto ok = client.Post("/v1/submit", body, "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(ok->body, service.submit(body).body);

  const auto bad = client.Post("/v1/submit", "[]", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_TRUE(nlohmann::json::parse(bad->body).contains("error"));

  const auto big = client.Post("/v1/submit", std::string(body.size() + 1000, ' '), "application/json");
  ASSERT_TRUE(big);
  EXPECT_EQ(big->status, 413);
  EXPECT_EQ(nlohmann::json::parse(big->body)["error"], "request body too large");

  const auto missing = client.Get("/v1/nothing");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST(EvaluationServer, ConcurrentSubmissionsAgree) {
  const auto gold = disjoint_dataset(20);
  const EvaluationService service(gold);
  LiveServer live(service, EvaluationServer::kDefaultMaxBody);
  auto sub = perfect(gold);
  Rng rng(5);
  for (auto& [id, e] : sub.rankings) shuffle(std::span<ImageId>(e.subset), rng);
  const auto body = submission_to_json(sub).dump();
  std::vector<std::future<std::string>> replies;
  for (int i = 0; i < 8; ++i) {
    replies.push_back(std::async(std::launch::async, [&] {
      httplib::Client client("127.0.0.1", live.port());
      const auto res = client.Post("/v1/submit", body, "application/json");
      return res ? std::to_string(res->status) + res->body : std::string("no response");
    }));
  }
  const std::string expected = "200" + service.submit(body).body;
  for (auto& f : replies) EXPECT_EQ(f.get(), expected);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CIRBENCH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const auto d = dir.path().string();
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("stats"), 1);
  EXPECT_EQ(run_cli("train --train x.json --bogus"), 1);
  EXPECT_EQ(run_cli("stats " + d + "/absent.json"), 2);
  EXPECT_EQ(run_cli("grad-check --kind concat_mlp --tolerance 1e-300"), 3);
  EXPECT_EQ(run_cli("grad-check --kind concat_mlp"), 0);
  EXPECT_EQ(run_cli("train --train x.json -o m.cpr --kind lstm"), 1);
}

TEST(Cli, SynthTrainEvaluate) {
  TempDir dir;
  const auto d = dir.path().string();
  ASSERT_EQ(run_cli("--seed 3 synth --out-dir " + d + " --images 120 --attributes 3 --values 4"), 0);
  const auto features = d + "/synth.features.cfv";
  ASSERT_EQ(run_cli("train --train " + d + "/synth.train.json --features " + features + " --kind concat_mlp" +
                    " --d-model 8 --epochs 2 --batch 8 -o " + d + "/m.cpr --trace " + d + "/trace.csv"),
            0);
  ASSERT_EQ(run_cli("eval --model " + d + "/m.cpr --features " + features + " --dataset " + d +
                    "/synth.val.json --json " + d + "/local.json"),
            0);
  ASSERT_EQ(run_cli("submit --model " + d + "/m.cpr --features " + features + " --dataset " + d +
                    "/synth.val.json -o " + d + "/sub.json"),
            0);
  ASSERT_EQ(run_cli("eval --submission " + d + "/sub.json --dataset " + d + "/synth.val.json --json " + d +
                    "/remote.json"),
            0);
  std::ifstream a(d + "/local.json"), b(d + "/remote.json");
  EXPECT_EQ(nlohmann::json::parse(a), nlohmann::json::parse(b));
  EXPECT_EQ(run_cli("eval --model " + d + "/m.cpr --features " + features + " --dataset " + d +
                    "/synth.test.json --composite recall@x"),
            1);
  EXPECT_EQ(run_cli("eval --model " + d + "/trace.csv --features " + features + " --dataset " + d +
                    "/synth.val.json"),
            2);
}

}  // namespace
}  // namespace cirbench
