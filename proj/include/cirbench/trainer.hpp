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

#ifndef CIRBENCH_TRAINER_HPP_
#define CIRBENCH_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cirbench/checkpoint.hpp"
#include "cirbench/composer.hpp"
#include "cirbench/dataset.hpp"
#include "cirbench/error.hpp"
#include "cirbench/eval.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/nn.hpp"
#include "cirbench/random.hpp"

namespace cirbench {

/// Soft triplet loss log(1 + exp(d_pos - d_neg)) on Euclidean distances,
/// evaluated as max(x, 0) + log1p(exp(-|x|)).
inline double soft_triplet_value(double d_pos, double d_neg) {
  const double x = d_pos - d_neg;
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

struct TripletLoss {
  double loss = 0.0;
  double d_pos = 0.0, d_neg = 0.0;
  std::vector<double> grad_query, grad_positive, grad_negative;
};

inline TripletLoss soft_triplet_loss(std::span<const double> query, std::span<const double> positive,
                                     std::span<const double> negative) {
  if (query.size() != positive.size() || query.size() != negative.size()) {
    throw DataError("soft_triplet_loss: dimension mismatch");
  }
  const std::size_t d = query.size();
  TripletLoss out;
  std::vector<double> to_pos(d), to_neg(d);
  for (std::size_t i = 0; i < d; ++i) {
    to_pos[i] = query[i] - positive[i];
    to_neg[i] = query[i] - negative[i];
  }
  out.d_pos = std::sqrt(nn::dot(to_pos.data(), to_pos.data(), d));
  out.d_neg = std::sqrt(nn::dot(to_neg.data(), to_neg.data(), d));
  out.loss = soft_triplet_value(out.d_pos, out.d_neg);
  const double slope = nn::sigmoid(out.d_pos - out.d_neg);
  const double wp = out.d_pos > 0.0 ? slope / out.d_pos : 0.0;
  const double wn = out.d_neg > 0.0 ? slope / out.d_neg : 0.0;
  out.grad_query.resize(d);
  out.grad_positive.resize(d);
  out.grad_negative.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.grad_query[i] = wp * to_pos[i] - wn * to_neg[i];
    out.grad_positive[i] = -wp * to_pos[i];
    out.grad_negative[i] = wn * to_neg[i];
  }
  return out;
}

/// One training triple with its sampled negatives, as raw features.
struct TripletSample {
  std::span<const float> reference;
  std::vector<std::int32_t> tokens;
  std::span<const float> positive;
  std::vector<std::span<const float>> negatives;
};

/// Mean soft triplet loss over every (sample, negative) pair and, when grad
/// is non-empty, its exact gradient (overwritten). Each sample's gradient is
/// computed into its own buffer and the buffers are reduced in sample order,
/// so the result does not depend on the thread count.
inline double batch_loss_gradient(const Composer& composer, std::span<const double> params,
                                  std::span<const TripletSample> batch, std::span<double> grad,
                                  std::size_t threads = 1) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("empty batch");
  const bool want_grad = !grad.empty();
  const std::size_t p = composer.parameter_count();
  if (want_grad && grad.size() != p) throw UsageError("gradient size mismatch");
  std::vector<double> losses(n, 0.0);
  std::vector<std::vector<double>> per_sample(want_grad ? n : 0);

  auto work = [&](std::size_t i) {
    const auto& s = batch[i];
    if (s.negatives.empty()) throw UsageError("sample without negatives");
    ComposeTape tape;
    ImageTape pos_tape, neg_tape;
    const auto& phi = composer.compose(params, s.reference, std::span<const std::int32_t>(s.tokens), tape);
    composer.project(params, s.positive, pos_tape);
    std::vector<double> dphi(phi.size(), 0.0), dpos(phi.size(), 0.0);
    if (want_grad) per_sample[i].assign(p, 0.0);
    const double w = 1.0 / static_cast<double>(s.negatives.size());
    double loss = 0.0;
    for (const auto& neg : s.negatives) {
      composer.project(params, neg, neg_tape);
      const auto t = soft_triplet_loss(phi, pos_tape.output(), neg_tape.output());
      loss += w * t.loss;
      if (!want_grad) continue;
      nn::axpy(w, t.grad_query.data(), dphi.data(), dphi.size());
      nn::axpy(w, t.grad_positive.data(), dpos.data(), dpos.size());
      std::vector<double> dneg(t.grad_negative);
      for (double& x : dneg) x *= w;
      composer.project_backward(params, neg_tape, dneg, per_sample[i]);
    }
    losses[i] = loss;
    if (want_grad) {
      composer.compose_backward(params, tape, dphi, per_sample[i]);
      composer.project_backward(params, pos_tape, dpos, per_sample[i]);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const double scale = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (double l : losses) total += l;
  if (want_grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& g : per_sample) nn::axpy(scale, g.data(), grad.data(), p);
  }
  return total * scale;
}

/// A labeled query resolved to store rows and token ids.
struct TrainingExample {
  std::uint64_t pair_id = 0;
  std::size_t reference = 0;
  std::size_t target = 0;
  std::vector<std::int32_t> tokens;
};

inline std::vector<TrainingExample> build_examples(const DatasetFile& dataset, const FeatureStore& store,
                                                   const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  for (const auto* r : dataset.labeled()) {
    out.push_back({r->pair_id, store.index_of(r->reference), store.index_of(*r->target_hard),
                   vocab.encode(r->caption)});
  }
  return out;
}

/// Query/positive/negative rows of one triplet.
struct TripletIndex {
  std::size_t example = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TripletBatch {
  std::vector<TripletIndex> triplets;
};

/// Draws `per_positive` uniform negatives for each example from the corpus,
/// never the example's own reference or positive.
inline TripletBatch sample_negatives(std::span<const TrainingExample> examples,
                                     std::span<const std::size_t> batch,
                                     std::span<const std::size_t> corpus, Rng& rng,
                                     std::size_t per_positive = 1) {
  if (corpus.size() < 3) throw DataError("negative sampling needs at least 3 corpus images");
  TripletBatch out;
  for (std::size_t e : batch) {
    const auto& ex = examples[e];
    const auto eligible = std::count_if(corpus.begin(), corpus.end(), [&](std::size_t r) {
      return r != ex.reference && r != ex.target;
    });
    if (eligible == 0) throw DataError("no eligible negative for pair " + std::to_string(ex.pair_id));
    for (std::size_t k = 0; k < per_positive; ++k) {
      std::size_t neg = 0;
      do {
        neg = corpus[uniform_index(rng, corpus.size())];
      } while (neg == ex.reference || neg == ex.target);
      out.triplets.push_back({e, ex.target, neg});
    }
  }
  return out;
}

enum class OptimizerKind { kAdamW, kSgd };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t negatives_per_positive = 1;
  bool in_batch_negatives = false;
  std::size_t threads = 1;
  std::uint64_t rng_seed = 0;
  std::size_t eval_every = 0;  // epochs between validation passes; 0 disables

  /// Published fine-tuning schedule: AdamW at 1e-5, batch 32, 300 epochs.
  static TrainConfig published_preset() {
    TrainConfig c;
    c.learning_rate = 1e-5;
    c.batch_size = 32;
    c.epochs = 300;
    c.optimizer = OptimizerKind::kAdamW;
    return c;
  }

  void validate() const {
    if (batch_size < 2) throw UsageError("batch_size must be at least 2");
    if (!(learning_rate >= 0.0)) throw UsageError("learning rate must be non-negative");
    if (negatives_per_positive == 0) throw UsageError("need at least one negative per positive");
  }
};

/// Decoupled-weight-decay Adam, or plain SGD when configured.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t size)
      : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
      params[i] -= lr * (update + cfg_.weight_decay * params[i]);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Linear decay from the initial rate to zero over all steps, no warm-up.
inline double scheduled_lr(double initial, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return initial;
  return initial * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

struct TraceRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_recall_subset_1;
};

struct TrainResult {
  Model model;
  std::vector<TraceRow> trace;
};

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,step,loss,lr,val_recall_subset_1\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.lr << ',';
    if (r.val_recall_subset_1) out << *r.val_recall_subset_1;
    out << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json trace_json(const std::vector<TraceRow>& trace) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : trace) {
    nlohmann::ordered_json row;
    row["epoch"] = r.epoch;
    row["step"] = r.step;
    row["loss"] = r.loss;
    row["lr"] = r.lr;
    row["val_recall_subset_1"] = r.val_recall_subset_1 ? nlohmann::ordered_json(*r.val_recall_subset_1) : nullptr;
    out.push_back(std::move(row));
  }
  return out;
}

namespace detail {

inline std::string largest_group(const ComposerParameters& params) {
  std::string name = "(none)";
  double best = -1.0;
  for (const auto& g : params.layout().groups) {
    const auto v = params.group(g.name);
    const double norm = std::sqrt(nn::dot(v.data(), v.data(), v.size()));
    if (norm > best || !std::isfinite(norm)) {
      best = norm;
      name = g.name;
      if (!std::isfinite(norm)) break;
    }
  }
  std::ostringstream out;
  out << name << " (norm " << best << ")";
  return out.str();
}

}  // namespace detail

struct TrainInputs {
  const DatasetFile* train = nullptr;
  const FeatureStore* features = nullptr;
  const DatasetFile* validation = nullptr;  // optional, for the trace
};

/// Trains a composer with the mean soft triplet loss. The vocabulary comes
/// from the training captions; candidates share the query projection.
inline TrainResult train(ComposerConfig model_cfg, const TrainInputs& inputs, const TrainConfig& cfg,
                         std::uint64_t init_seed = 0) {
  cfg.validate();
  if (!inputs.train || !inputs.features) throw UsageError("train: dataset and features are required");
  const auto& dataset = *inputs.train;
  const auto& store = *inputs.features;

  std::vector<std::string> captions;
  for (const auto& r : dataset.records) captions.push_back(r.caption);
  TrainResult result;
  result.model.vocab = Vocabulary::build(captions);
  model_cfg.feature_dim = store.dimension();
  model_cfg.vocab_size = result.model.vocab.size();
  result.model.params = ComposerParameters::initialized(model_cfg, init_seed);
  auto& params = result.model.params;
  const Composer composer(model_cfg);

  const auto examples = build_examples(dataset, store, result.model.vocab);
  if (examples.empty()) throw DataError("training split has no labeled pairs");
  const auto corpus = corpus_rows(dataset, store);

  const std::size_t steps_per_epoch = (examples.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  Optimizer optimizer(cfg, params.size());
  std::vector<double> grad(params.size());
  Rng rng(cfg.rng_seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    double lr = cfg.learning_rate;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> batch_ids(order.data() + start,
                                                   std::min(cfg.batch_size, order.size() - start));
      std::vector<TripletSample> batch;
      batch.reserve(batch_ids.size());
      std::vector<std::size_t> in_batch_targets;
      for (auto e : batch_ids) in_batch_targets.push_back(examples[e].target);
      const auto triplets = cfg.in_batch_negatives && in_batch_targets.size() >= 3
                                ? sample_negatives(examples, batch_ids, in_batch_targets, rng,
                                                   cfg.negatives_per_positive)
                                : sample_negatives(examples, batch_ids, corpus, rng,
                                                   cfg.negatives_per_positive);
      for (std::size_t k = 0; k < batch_ids.size(); ++k) {
        const auto& ex = examples[batch_ids[k]];
        TripletSample s;
        std::size_t ref = ex.reference;
        if (model_cfg.kind == ComposerKind::kRandomImageText) ref = corpus[uniform_index(rng, corpus.size())];
        s.reference = store.row(ref);
        s.tokens = ex.tokens;
        s.positive = store.row(ex.target);
        for (std::size_t j = 0; j < cfg.negatives_per_positive; ++j) {
          s.negatives.push_back(store.row(triplets.triplets[k * cfg.negatives_per_positive + j].negative));
        }
        batch.push_back(std::move(s));
      }
      const double loss = batch_loss_gradient(composer, params.flat(), batch, grad, cfg.threads);
      lr = scheduled_lr(cfg.learning_rate, step, total_steps);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (lr " << lr << ", largest parameter group "
            << detail::largest_group(params) << ")";
        throw NumericalError(msg.str());
      }
      optimizer.step(params.flat(), grad, lr);
      epoch_loss += loss * static_cast<double>(batch_ids.size());
      ++step;
    }
    TraceRow row{epoch, step, epoch_loss / static_cast<double>(examples.size()), lr, std::nullopt};
    if (inputs.validation && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      row.val_recall_subset_1 = evaluate(result.model, store, *inputs.validation).recall_subset.at(1);
    }
    result.trace.push_back(row);
  }
  return result;
}

struct GroupCheck {
  std::string name;
  std::size_t size = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0, numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double tolerance = 1e-4;

  double max_relative_error() const {
    double m = 0.0;
    for (const auto& g : groups) m = std::max(m, g.max_relative_error);
    return m;
  }
  bool passed() const { return max_relative_error() < tolerance; }
};

struct GradCheckConfig {
  std::size_t feature_dim = 12;
  std::size_t d_model = 16;
  std::size_t d_ff = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t vocab_size = 50;
  std::size_t tokens = 5;
  std::size_t batch = 3;
  std::size_t negatives = 2;
  double step = 1e-4;
  double jitter = 0.1;
  ProjectionKind projection = ProjectionKind::kLearned;
  std::uint64_t seed = 7;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares the analytic gradient of the batch loss with central differences
/// on a random desk-scale problem, reporting the worst coordinate per group.
inline GradCheckReport grad_check(ComposerKind kind, const GradCheckConfig& gc, double tolerance = 1e-4) {
  ComposerConfig cfg;
  cfg.kind = kind;
  cfg.feature_dim = gc.projection == ProjectionKind::kIdentity ? gc.d_model : gc.feature_dim;
  cfg.d_model = gc.d_model;
  cfg.d_ff = gc.d_ff;
  cfg.layers = gc.layers;
  cfg.heads = gc.heads;
  cfg.vocab_size = gc.vocab_size;
  cfg.max_tokens = gc.tokens;
  cfg.projection = gc.projection;

  auto params = ComposerParameters::initialized(cfg, gc.seed);
  Rng rng(gc.seed + 1);
  for (double& v : params.flat()) v += uniform_real(rng, -gc.jitter, gc.jitter);
  const Composer composer(cfg);

  const std::size_t images = gc.batch * (2 + gc.negatives);
  std::vector<std::vector<float>> features(images, std::vector<float>(cfg.feature_dim));
  for (auto& f : features) {
    for (auto& x : f) x = static_cast<float>(standard_normal(rng));
  }
  std::vector<TripletSample> batch;
  std::size_t next = 0;
  for (std::size_t i = 0; i < gc.batch; ++i) {
    TripletSample s;
    s.reference = features[next++];
    s.positive = features[next++];
    for (std::size_t j = 0; j < gc.negatives; ++j) s.negatives.push_back(features[next++]);
    for (std::size_t t = 0; t < gc.tokens; ++t) {
      s.tokens.push_back(static_cast<std::int32_t>(Vocabulary::kReserved +
                                                   uniform_index(rng, gc.vocab_size - Vocabulary::kReserved)));
    }
    batch.push_back(std::move(s));
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<double> analytic(params.size());
  if (params.size() > 0) batch_loss_gradient(composer, params.flat(), batch, analytic);
  auto flat = params.flat();
  for (const auto& g : params.layout().groups) {
    GroupCheck check;
    check.name = g.name;
    check.size = g.size();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t i = g.offset + k;
      const double saved = flat[i];
      flat[i] = saved + gc.step;
      const double up = batch_loss_gradient(composer, flat, batch, {});
      flat[i] = saved - gc.step;
      const double down = batch_loss_gradient(composer, flat, batch, {});
      flat[i] = saved;
      const double numeric = (up - down) / (2.0 * gc.step);
      const double err = relative_error(analytic[i], numeric);
      if (err > check.max_relative_error || k == 0) {
        check.max_relative_error = err;
        check.worst_index = k;
        check.analytic = analytic[i];
        check.numeric = numeric;
      }
    }
    report.groups.push_back(check);
  }
  return report;
}

}  // namespace cirbench

#endif  // CIRBENCH_TRAINER_HPP_
