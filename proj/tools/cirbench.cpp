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

// cirbench command-line front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "cirbench/checkpoint.hpp"
#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "cirbench/eval.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/metrics.hpp"
#include "cirbench/miner.hpp"
#include "cirbench/pairs.hpp"
#include "cirbench/random.hpp"
#include "cirbench/server.hpp"
#include "cirbench/synthetic.hpp"
#include "cirbench/trainer.hpp"

namespace fs = std::filesystem;
using namespace cirbench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  detail::write_file(path, text);
}

FeatureStore load_features(const std::string& path, const std::string& ids) {
  return load_feature_store(path, ids.empty() ? std::nullopt : std::optional<fs::path>(ids));
}

DatasetFile load_dataset(const std::string& path, const std::string& split) {
  return read_dataset(path, split.empty() ? std::nullopt : std::optional<Split>(parse_split(split)));
}

std::vector<CompositeTerm> composite_terms(const std::vector<std::string>& specs) {
  if (specs.empty()) return kCirrComposite;
  std::vector<CompositeTerm> terms;
  for (const auto& s : specs) terms.push_back(parse_composite_term(s));
  return terms;
}

std::string format_count(std::size_t n) {
  auto digits = std::to_string(n);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return digits;
}

struct FeatureArgs {
  std::string features, ids;
  void add(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("--features", features, "CFV1 feature file");
    if (required) opt->required();
    app->add_option("--ids", ids, "id sidecar (default <features>.ids)");
  }
};

struct DatasetArgs {
  std::string path, split;
  void add(CLI::App* app) {
    app->add_option("--dataset", path, "annotation file (JSON or JSONL)")->required();
    app->add_option("--split", split, "override the split guessed from the file name");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composed image retrieval benchmark toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cirbench 0.1.0");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "rng seed (CIRBENCH_SEED overrides)");
  std::function<void()> run;

  // mine
  auto* mine = app.add_subcommand("mine", "mine visually similar image subsets");
  FeatureArgs mine_features;
  mine_features.add(mine);
  MinerConfig miner_cfg;
  std::size_t mine_count = 0;
  std::string mine_out, mine_seed_image;
  mine->add_option("--count", mine_count, "stop after this many subsets (0 = all seeds)");
  mine->add_option("--threshold", miner_cfg.near_duplicate_threshold, "near-duplicate cosine cut")
      ->capture_default_str();
  mine->add_option("--min-gap", miner_cfg.min_gap, "minimum similarity gap")->capture_default_str();
  mine->add_option("--window", miner_cfg.candidate_window, "candidate window")->capture_default_str();
  mine->add_option("--size", miner_cfg.subset_size, "subset size")->capture_default_str();
  mine->add_option("--overlap-limit", miner_cfg.overlap_limit, "max members shared between subsets")
      ->capture_default_str();
  mine->add_option("--seed-image", mine_seed_image, "mine a single subset around this image");
  mine->add_option("-o,--out", mine_out, "output JSONL (default stdout)");
  mine->callback([&] {
    run = [&] {
      const auto store = load_features(mine_features.features, mine_features.ids);
      miner_cfg.rng_seed = resolve_seed(seed);
      std::vector<Subset> subsets;
      if (!mine_seed_image.empty()) {
        auto s = mine_subset(ImageId(mine_seed_image), store, miner_cfg);
        if (!s) {
          std::cerr << "no subset around " << mine_seed_image << "\n";
          throw DataError("miner found too few spaced candidates");
        }
        subsets.push_back(std::move(*s));
      } else {
        subsets = mine_all(store, miner_cfg, mine_count == 0 ? store.size() : mine_count);
      }
      write_text(mine_out, serialize_subsets(subsets));
      std::cerr << "mined " << subsets.size() << " subsets from " << store.size() << " images\n";
    };
  });

  // pairs
  auto* pairs = app.add_subcommand("pairs", "draw the directed pairs of each subset");
  std::string pairs_in, pairs_out;
  pairs->add_option("--subsets", pairs_in, "subsets JSONL")->required();
  pairs->add_option("-o,--out", pairs_out, "output JSONL (default stdout)");
  pairs->callback([&] {
    run = [&] {
      std::string out;
      for (const auto& s : parse_subsets(detail::read_file(pairs_in))) {
        validate_subset(s, s.members.size());
        for (const auto& p : draw_pairs(s)) {
          nlohmann::ordered_json j;
          j["subset_id"] = p.subset_id;
          j["reference"] = s.members[static_cast<std::size_t>(p.reference_rank)].str();
          j["target"] = s.members[static_cast<std::size_t>(p.target_rank)].str();
          j["reference_rank"] = p.reference_rank;
          j["target_rank"] = p.target_rank;
          j["kind"] = to_string(p.kind);
          out += j.dump() + "\n";
        }
      }
      write_text(pairs_out, out);
    };
  });

  // split
  auto* split = app.add_subcommand("split", "assign subsets to train/val/test");
  std::string split_in, split_out;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  split->add_option("--subsets", split_in, "subsets JSONL")->required();
  split->add_option("--ratios", ratios, "train val test ratios")->expected(3)->capture_default_str();
  split->add_option("-o,--out", split_out, "output JSON (default stdout)");
  split->callback([&] {
    run = [&] {
      const auto subsets = parse_subsets(detail::read_file(split_in));
      const SplitRatios r{ratios[0], ratios[1], ratios[2]};
      const auto a = assign_splits(subsets, r, resolve_seed(seed));
      nlohmann::ordered_json j;
      j["seed"] = a.rng_seed;
      j["ratios"] = {{"train", r.train}, {"val", r.val}, {"test", r.test}};
      const auto c = a.counts();
      j["counts"] = {{"train", c[0]}, {"val", c[1]}, {"test", c[2]}};
      nlohmann::ordered_json m = nlohmann::ordered_json::object();
      for (const auto& [id, s] : a.splits) m[std::to_string(id)] = to_string(s);
      j["splits"] = std::move(m);
      write_text(split_out, j.dump(2) + "\n");
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "per-split subset, pair and image counts");
  std::vector<std::string> stats_files;
  bool stats_json = false;
  stats->add_option("files", stats_files, "annotation files")->required();
  stats->add_flag("--json", stats_json, "emit JSON");
  stats->callback([&] {
    run = [&] {
      std::vector<DatasetFile> files;
      for (const auto& f : stats_files) files.push_back(read_dataset(f));
      const auto rows = dataset_stats(files);
      if (stats_json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
          arr.push_back({{"split", r.name}, {"subsets", r.subsets}, {"pairs", r.pairs},
                         {"pairs_per_subset", round_percent(r.pairs_per_subset)}, {"images", r.images}});
        }
        std::cout << arr.dump(2) << "\n";
        return;
      }
      std::printf("%-8s %10s %10s %16s %10s\n", "split", "subsets", "pairs", "pairs/subset", "images");
      for (const auto& r : rows) {
        std::printf("%-8s %10s %10s %16s %10s\n", r.name.c_str(), format_count(r.subsets).c_str(),
                    format_count(r.pairs).c_str(), format_percent(r.pairs_per_subset).c_str(),
                    format_count(r.images).c_str());
      }
    };
  });

  // analyze-captions
  auto* captions = app.add_subcommand("analyze-captions", "caption length statistics in words");
  std::vector<std::string> caption_files;
  captions->add_option("files", caption_files, "annotation files")->required();
  captions->callback([&] {
    run = [&] {
      std::vector<DatasetFile> files;
      for (const auto& f : caption_files) files.push_back(read_dataset(f));
      const auto s = caption_length_stats(files);
      std::printf("captions %zu\nmean     %.2f\nmedian   %.2f\nstddev   %.2f\n", s.captions, s.mean, s.median,
                  s.stddev);
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train a composer with the soft triplet loss");
  FeatureArgs train_features;
  train_features.add(train_cmd);
  std::string train_path, val_path, model_out, trace_out, kind_name = "transformer", projection = "learned",
                                                               optimizer = "adamw", preset;
  ComposerConfig model_cfg;
  TrainConfig train_cfg;
  train_cmd->add_option("--train", train_path, "training annotation file")->required();
  train_cmd->add_option("--val", val_path, "validation annotation file for the trace");
  train_cmd->add_option("--kind", kind_name, "composer kind")->capture_default_str();
  train_cmd->add_option("--projection", projection, "learned or identity")->capture_default_str();
  train_cmd->add_option("--d-model", model_cfg.d_model)->capture_default_str();
  train_cmd->add_option("--d-ff", model_cfg.d_ff)->capture_default_str();
  train_cmd->add_option("--layers", model_cfg.layers)->capture_default_str();
  train_cmd->add_option("--heads", model_cfg.heads)->capture_default_str();
  train_cmd->add_option("--max-tokens", model_cfg.max_tokens)->capture_default_str();
  train_cmd->add_option("--preset", preset, "'paper' for the published schedule");
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", train_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--optimizer", optimizer, "adamw or sgd")->capture_default_str();
  train_cmd->add_option("--weight-decay", train_cfg.weight_decay)->capture_default_str();
  train_cmd->add_option("--negatives", train_cfg.negatives_per_positive, "negatives per positive")
      ->capture_default_str();
  train_cmd->add_flag("--in-batch-negatives", train_cfg.in_batch_negatives, "draw negatives from the batch");
  train_cmd->add_option("--threads", train_cfg.threads)->capture_default_str();
  train_cmd->add_option("--eval-every", train_cfg.eval_every, "epochs between validation passes")
      ->capture_default_str();
  train_cmd->add_option("-o,--out", model_out, "checkpoint path")->required();
  train_cmd->add_option("--trace", trace_out, "loss trace (.csv or .json)");
  train_cmd->callback([&] {
    run = [&] {
      if (preset == "paper") {
        const auto p = TrainConfig::published_preset();
        train_cfg.learning_rate = p.learning_rate;
        train_cfg.batch_size = p.batch_size;
        train_cfg.epochs = p.epochs;
      } else if (!preset.empty()) {
        throw UsageError("unknown preset '" + preset + "'");
      }
      if (optimizer == "sgd") {
        train_cfg.optimizer = OptimizerKind::kSgd;
      } else if (optimizer != "adamw") {
        throw UsageError("unknown optimizer '" + optimizer + "'");
      }
      model_cfg.kind = parse_composer_kind(kind_name);
      if (projection == "identity") {
        model_cfg.projection = ProjectionKind::kIdentity;
      } else if (projection != "learned") {
        throw UsageError("projection must be learned or identity");
      }
      train_cfg.rng_seed = resolve_seed(seed);
      const auto store = load_features(train_features.features, train_features.ids);
      const auto train_set = load_dataset(train_path, "train");
      std::optional<DatasetFile> val_set;
      if (!val_path.empty()) val_set = load_dataset(val_path, "val");
      const auto result = train(model_cfg, {&train_set, &store, val_set ? &*val_set : nullptr}, train_cfg,
                                train_cfg.rng_seed);
      save_model(result.model, model_out);
      if (!trace_out.empty()) {
        write_text(trace_out, fs::path(trace_out).extension() == ".json" ? trace_json(result.trace).dump(2) + "\n"
                                                                         : trace_csv(result.trace));
      }
      const auto& last = result.trace.back();
      std::fprintf(stderr, "trained %s: %zu epochs, %zu steps, final loss %.6f\n",
                   std::string(to_string(model_cfg.kind)).c_str(), last.epoch, last.step, last.loss);
    };
  });

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  std::vector<std::string> grad_kinds{"concat_mlp", "gated_residual", "transformer"};
  GradCheckConfig grad_cfg;
  double tolerance = 1e-4;
  grad->add_option("--kind", grad_kinds, "composer kinds")->capture_default_str();
  grad->add_option("--tolerance", tolerance)->capture_default_str();
  grad->add_option("--step", grad_cfg.step, "central-difference step")->capture_default_str();
  grad->add_option("--d-model", grad_cfg.d_model)->capture_default_str();
  grad->add_option("--layers", grad_cfg.layers)->capture_default_str();
  grad->add_option("--heads", grad_cfg.heads)->capture_default_str();
  grad->add_option("--tokens", grad_cfg.tokens)->capture_default_str();
  grad->add_option("--vocab", grad_cfg.vocab_size)->capture_default_str();
  grad->callback([&] {
    run = [&] {
      grad_cfg.seed = resolve_seed(grad_cfg.seed);
      bool ok = true;
      for (const auto& name : grad_kinds) {
        const auto report = grad_check(parse_composer_kind(name), grad_cfg, tolerance);
        std::printf("%s\n", name.c_str());
        for (const auto& g : report.groups) {
          std::printf("  %-28s %6zu  max rel err %.3e\n", g.name.c_str(), g.size, g.max_relative_error);
        }
        std::printf("  %s (max %.3e, tolerance %.1e)\n", report.passed() ? "PASS" : "FAIL",
                    report.max_relative_error(), tolerance);
        ok = ok && report.passed();
      }
      if (!ok) throw NumericalError("gradient check failed");
    };
  });

  // embed
  auto* embed = app.add_subcommand("embed", "write composed query (or projected corpus) features");
  FeatureArgs embed_features;
  embed_features.add(embed);
  DatasetArgs embed_data;
  embed_data.add(embed);
  std::string embed_model, embed_out;
  bool embed_corpus = false;
  embed->add_option("--model", embed_model, "checkpoint")->required();
  embed->add_option("-o,--out", embed_out, "output CFV1 file")->required();
  embed->add_flag("--corpus", embed_corpus, "project the split corpus instead of composing queries");
  embed->callback([&] {
    run = [&] {
      const auto model = load_model(embed_model);
      const auto store = load_features(embed_features.features, embed_features.ids);
      const auto dataset = load_dataset(embed_data.path, embed_data.split);
      EvalOptions opts;
      opts.seed = resolve_seed(seed);
      const Retriever retriever(model, store, dataset, opts);
      const Composer composer(model.config());
      FeatureStore out(model.config().d_model);
      auto add = [&](const std::string& id, const std::vector<double>& v) {
        std::vector<float> f(v.begin(), v.end());
        out.add(ImageId(id), f);
      };
      if (embed_corpus) {
        for (auto r : corpus_rows(dataset, store)) add(store.id(r).str(), composer.project(model.params.flat(), store.row(r)));
      } else {
        Rng rng(opts.seed);
        for (const auto& r : dataset.records) add(std::to_string(r.pair_id), retriever.compose_query(r, rng));
      }
      write_feature_store(out, embed_out);
    };
  });

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "rank global and subset candidates for every query");
  FeatureArgs retrieve_features;
  retrieve_features.add(retrieve);
  DatasetArgs retrieve_data;
  retrieve_data.add(retrieve);
  std::string retrieve_model, retrieve_out;
  std::size_t top = 50;
  bool retrieve_include_ref = false;
  retrieve->add_option("--model", retrieve_model, "checkpoint")->required();
  retrieve->add_option("--top", top, "global list length")->capture_default_str();
  retrieve->add_flag("--include-reference", retrieve_include_ref, "keep the reference in the global pool");
  retrieve->add_option("-o,--out", retrieve_out, "output JSONL (default stdout)");
  retrieve->callback([&] {
    run = [&] {
      const auto model = load_model(retrieve_model);
      const auto store = load_features(retrieve_features.features, retrieve_features.ids);
      const auto dataset = load_dataset(retrieve_data.path, retrieve_data.split);
      EvalOptions opts;
      opts.seed = resolve_seed(seed);
      opts.include_reference = retrieve_include_ref;
      const auto result = Retriever(model, store, dataset, opts).run();
      std::string out;
      for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        nlohmann::ordered_json j;
        j["pairid"] = dataset.records[i].pair_id;
        const auto& g = result.global[i];
        auto ids = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < std::min(top, g.candidates.size()); ++k) ids.push_back(g.candidates[k].str());
        j["global"] = std::move(ids);
        ids = nlohmann::ordered_json::array();
        for (const auto& c : result.subset[i].candidates) ids.push_back(c.str());
        j["subset"] = std::move(ids);
        j["gold_rank_global"] = g.gold_rank ? nlohmann::ordered_json(*g.gold_rank) : nullptr;
        j["gold_rank_subset"] =
            result.subset[i].gold_rank ? nlohmann::ordered_json(*result.subset[i].gold_rank) : nullptr;
        out += j.dump() + "\n";
      }
      write_text(retrieve_out, out);
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Recall@K, Recall_Subset@K and mAP@K on a labeled split");
  FeatureArgs eval_features;
  eval_features.add(eval, false);
  DatasetArgs eval_data;
  eval_data.add(eval);
  std::string eval_model, eval_submission, eval_json;
  std::vector<std::string> composite;
  bool eval_include_ref = false;
  eval->add_option("--model", eval_model, "checkpoint");
  eval->add_option("--submission", eval_submission, "score a submission file instead of a model");
  eval->add_option("--composite", composite, "composite terms such as recall@5 recall_subset@1");
  eval->add_flag("--include-reference", eval_include_ref, "keep the reference in the global pool");
  eval->add_option("--json", eval_json, "write the report JSON here");
  eval->callback([&] {
    run = [&] {
      const auto dataset = load_dataset(eval_data.path, eval_data.split);
      EvalOptions opts;
      opts.seed = resolve_seed(seed);
      opts.include_reference = eval_include_ref;
      MetricReport report;
      if (!eval_submission.empty()) {
        const auto sub = submission_from_json(nlohmann::json::parse(detail::read_file(eval_submission)));
        report = score_submission(dataset, sub, opts);
      } else {
        if (eval_model.empty() || eval_features.features.empty()) {
          throw UsageError("eval needs --model and --features, or --submission");
        }
        report = evaluate(load_model(eval_model), load_features(eval_features.features, eval_features.ids),
                          dataset, opts);
      }
      const auto terms = composite_terms(composite);
      report.composite = composite_score(report, terms);
      std::cout << report_table(report);
      const auto j = report_to_json(report).dump(2) + "\n";
      if (eval_json.empty()) {
        std::cout << j;
      } else {
        write_text(eval_json, j);
      }
    };
  });

  // submit
  auto* submit = app.add_subcommand("submit", "build a submission and optionally post it to a server");
  FeatureArgs submit_features;
  submit_features.add(submit);
  DatasetArgs submit_data;
  submit_data.add(submit);
  std::string submit_model, submit_out, server_url;
  std::size_t depth = 50;
  submit->add_option("--model", submit_model, "checkpoint")->required();
  submit->add_option("--depth", depth, "global list length")->capture_default_str();
  submit->add_option("-o,--out", submit_out, "submission JSON path");
  submit->add_option("--server", server_url, "e.g. http://127.0.0.1:8080");
  submit->callback([&] {
    run = [&] {
      EvalOptions opts;
      opts.seed = resolve_seed(seed);
      opts.depth = depth;
      const auto sub = make_submission(load_model(submit_model),
                                       load_features(submit_features.features, submit_features.ids),
                                       load_dataset(submit_data.path, submit_data.split), opts);
      const auto body = submission_to_json(sub).dump();
      if (!submit_out.empty()) write_text(submit_out, body + "\n");
      if (server_url.empty()) {
        if (submit_out.empty()) std::cout << body << "\n";
        return;
      }
      httplib::Client client(server_url);
      client.set_read_timeout(300);
      const auto res = client.Post("/v1/submit", body, "application/json");
      if (!res) throw DataError("cannot reach " + server_url + ": " + httplib::to_string(res.error()));
      std::cout << res->body << "\n";
      if (res->status != 200) throw DataError("server rejected the submission (HTTP " + std::to_string(res->status) + ")");
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "hidden-label evaluation server");
  std::string gold_path, gold_split, host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body = EvaluationServer::kDefaultMaxBody;
  serve->add_option("--gold", gold_path, "labeled annotation file")->required();
  serve->add_option("--split", gold_split, "override the split guessed from the file name");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--max-body", max_body, "largest accepted request body in bytes")->capture_default_str();
  serve->callback([&] {
    run = [&] {
      const EvaluationService service(load_dataset(gold_path, gold_split));
      EvaluationServer server(service, max_body);
      const int bound = server.bind(host, port);
      std::printf("serving %s (%zu pairs, fingerprint %s) on http://%s:%d\n",
                  std::string(to_string(service.gold().split)).c_str(), service.gold().records.size(),
                  service.fingerprint().c_str(), host.c_str(), bound);
      std::fflush(stdout);
      server.listen();
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic attribute-edit corpus");
  SynthConfig synth_cfg;
  std::string synth_dir = ".";
  synth->add_option("--out-dir", synth_dir)->capture_default_str();
  synth->add_option("--images", synth_cfg.images)->capture_default_str();
  synth->add_option("--attributes", synth_cfg.attributes)->capture_default_str();
  synth->add_option("--values", synth_cfg.values)->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise)->capture_default_str();
  synth->callback([&] {
    run = [&] {
      synth_cfg.rng_seed = resolve_seed(seed);
      const auto corpus = make_synthetic_corpus(synth_cfg);
      const fs::path dir(synth_dir);
      fs::create_directories(dir);
      write_feature_store(corpus.features, dir / "synth.features.cfv");
      detail::write_file(dir / "synth.subsets.jsonl", serialize_subsets(corpus.subsets));
      for (auto s : {Split::kTrain, Split::kVal, Split::kTest}) {
        write_dataset(corpus.split(s), dir / ("synth." + std::string(to_string(s)) + ".json"));
      }
      std::printf("%zu images, %zu subsets, pairs train/val/test %zu/%zu/%zu in %s\n", corpus.features.size(),
                  corpus.subsets.size(), corpus.train.records.size(), corpus.val.records.size(),
                  corpus.test.records.size(), dir.string().c_str());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run) run();
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
