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

#ifndef CIRBENCH_COMPOSER_HPP_
#define CIRBENCH_COMPOSER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cirbench/error.hpp"
#include "cirbench/nn.hpp"
#include "cirbench/random.hpp"
#include "cirbench/text.hpp"

namespace cirbench {

enum class ComposerKind {
  kImageOnly,
  kTextOnly,
  kRandomImageText,
  kConcatMlp,
  kGatedResidual,
  kTransformer,
};

inline constexpr std::pair<std::string_view, ComposerKind> kComposerKinds[] = {
    {"image_only", ComposerKind::kImageOnly},
    {"text_only", ComposerKind::kTextOnly},
    {"random_image_text", ComposerKind::kRandomImageText},
    {"concat_mlp", ComposerKind::kConcatMlp},
    {"gated_residual", ComposerKind::kGatedResidual},
    {"transformer", ComposerKind::kTransformer},
};

inline std::string_view to_string(ComposerKind kind) {
  for (const auto& [name, k] : kComposerKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

inline ComposerKind parse_composer_kind(std::string_view name) {
  for (const auto& [n, k] : kComposerKinds) {
    if (n == name) return k;
  }
  throw UsageError("unknown composer kind '" + std::string(name) + "'");
}

enum class ProjectionKind { kLearned, kIdentity };

struct ComposerConfig {
  ComposerKind kind = ComposerKind::kTransformer;
  std::size_t feature_dim = 0;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;  // also the MLP hidden width of concat/gated models
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t vocab_size = 2;
  std::size_t max_tokens = 32;
  ProjectionKind projection = ProjectionKind::kLearned;

  bool uses_text() const { return kind != ComposerKind::kImageOnly; }

  void validate() const {
    if (feature_dim == 0 || d_model == 0) throw UsageError("feature_dim and d_model must be positive");
    if (projection == ProjectionKind::kIdentity && feature_dim != d_model) {
      throw UsageError("identity projection requires d_model == feature_dim");
    }
    if (kind == ComposerKind::kTransformer) {
      if (heads == 0 || d_model % heads != 0) throw UsageError("d_model must be divisible by heads");
      if (max_tokens == 0) throw UsageError("max_tokens must be positive");
    }
    if ((kind == ComposerKind::kConcatMlp || kind == ComposerKind::kRandomImageText ||
         kind == ComposerKind::kGatedResidual || kind == ComposerKind::kTransformer) &&
        d_ff == 0) {
      throw UsageError("d_ff must be positive");
    }
    if (uses_text() && vocab_size < 2) throw UsageError("vocabulary must hold the reserved tokens");
  }
};

enum class InitRule { kFanIn, kEmbedding, kZero, kOne };

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  InitRule init = InitRule::kZero;

  std::size_t size() const { return rows * cols; }
};

/// Offsets of one y = W x + b block inside the flat vector.
struct LinearSlot {
  std::size_t w = 0, b = 0, out = 0, in = 0;
};

struct LayerSlots {
  LinearSlot query, key, value, output;
  std::size_t ln1_gain = 0, ln1_bias = 0;
  LinearSlot ffn_in, ffn_out;
  std::size_t ln2_gain = 0, ln2_bias = 0;
};

/// Named groups plus the typed offsets the kernels use.
struct ParameterLayout {
  std::vector<ParamGroup> groups;
  std::size_t total = 0;

  bool learned_projection = false;
  LinearSlot projection;
  std::size_t token_embedding = 0;
  std::size_t position_embedding = 0;
  LinearSlot mlp_hidden, mlp_out;             // concat / random image+text
  LinearSlot gate, residual_hidden, residual_out;  // gated residual
  std::vector<LayerSlots> layers;

  const ParamGroup* find(std::string_view name) const {
    for (const auto& g : groups) {
      if (g.name == name) return &g;
    }
    return nullptr;
  }
};

namespace detail {

class LayoutBuilder {
 public:
  explicit LayoutBuilder(ParameterLayout& layout) : layout_(layout) {}

  std::size_t add(std::string name, std::size_t rows, std::size_t cols, InitRule init) {
    const std::size_t offset = layout_.total;
    layout_.groups.push_back({std::move(name), offset, rows, cols, init});
    layout_.total += rows * cols;
    return offset;
  }

  LinearSlot linear(const std::string& name, std::size_t out, std::size_t in) {
    LinearSlot s;
    s.out = out;
    s.in = in;
    s.w = add(name + ".weight", out, in, InitRule::kFanIn);
    s.b = add(name + ".bias", out, 1, InitRule::kZero);
    return s;
  }

 private:
  ParameterLayout& layout_;
};

}  // namespace detail

/// Parameter layout as a pure function of the configuration.
inline ParameterLayout make_layout(const ComposerConfig& cfg) {
  cfg.validate();
  ParameterLayout layout;
  detail::LayoutBuilder b(layout);
  const std::size_t d = cfg.d_model;
  if (cfg.projection == ProjectionKind::kLearned) {
    layout.learned_projection = true;
    layout.projection = b.linear("img_proj", d, cfg.feature_dim);
  }
  if (cfg.uses_text()) {
    layout.token_embedding = b.add("token_embedding", cfg.vocab_size, d, InitRule::kEmbedding);
  }
  switch (cfg.kind) {
    case ComposerKind::kImageOnly:
    case ComposerKind::kTextOnly:
      break;
    case ComposerKind::kConcatMlp:
    case ComposerKind::kRandomImageText:
      layout.mlp_hidden = b.linear("mlp.hidden", cfg.d_ff, 2 * d);
      layout.mlp_out = b.linear("mlp.out", d, cfg.d_ff);
      break;
    case ComposerKind::kGatedResidual:
      layout.gate = b.linear("gate", d, 2 * d);
      layout.residual_hidden = b.linear("residual.hidden", cfg.d_ff, 2 * d);
      layout.residual_out = b.linear("residual.out", d, cfg.d_ff);
      break;
    case ComposerKind::kTransformer: {
      layout.position_embedding =
          b.add("position_embedding", cfg.max_tokens + 2, d, InitRule::kEmbedding);
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto p = "layer" + std::to_string(l) + ".";
        LayerSlots s;
        s.query = b.linear(p + "attn.query", d, d);
        s.key = b.linear(p + "attn.key", d, d);
        s.value = b.linear(p + "attn.value", d, d);
        s.output = b.linear(p + "attn.output", d, d);
        s.ln1_gain = b.add(p + "ln1.gain", d, 1, InitRule::kOne);
        s.ln1_bias = b.add(p + "ln1.bias", d, 1, InitRule::kZero);
        s.ffn_in = b.linear(p + "ffn.in", cfg.d_ff, d);
        s.ffn_out = b.linear(p + "ffn.out", d, cfg.d_ff);
        s.ln2_gain = b.add(p + "ln2.gain", d, 1, InitRule::kOne);
        s.ln2_bias = b.add(p + "ln2.bias", d, 1, InitRule::kZero);
        layout.layers.push_back(s);
      }
      break;
    }
  }
  return layout;
}

/// All trainable weights of one model in a single flat vector. Named group
/// views alias the flat storage.
class ComposerParameters {
 public:
  ComposerParameters() = default;
  explicit ComposerParameters(const ComposerConfig& cfg)
      : config_(cfg), layout_(make_layout(cfg)), values_(layout_.total, 0.0) {
    for (const auto& g : layout_.groups) {
      if (g.init == InitRule::kOne) {
        std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>(g.offset), g.size(), 1.0);
      }
    }
  }

  /// Symmetric uniform initialisation scaled by fan-in (linear weights) or
  /// by d_model (embeddings); biases 0, layer-norm gains 1.
  static ComposerParameters initialized(const ComposerConfig& cfg, std::uint64_t seed) {
    ComposerParameters p(cfg);
    Rng rng(seed);
    for (const auto& g : p.layout_.groups) {
      double bound = 0.0;
      if (g.init == InitRule::kFanIn) bound = 1.0 / std::sqrt(static_cast<double>(g.cols));
      if (g.init == InitRule::kEmbedding) bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
      if (bound == 0.0) continue;
      for (std::size_t i = 0; i < g.size(); ++i) {
        p.values_[g.offset + i] = uniform_real(rng, -bound, bound);
      }
    }
    return p;
  }

  const ComposerConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  std::span<double> group(std::string_view name) {
    const auto* g = require(name);
    return {values_.data() + g->offset, g->size()};
  }
  std::span<const double> group(std::string_view name) const {
    const auto* g = require(name);
    return {values_.data() + g->offset, g->size()};
  }

  friend bool operator==(const ComposerParameters& a, const ComposerParameters& b) {
    return a.values_ == b.values_ && a.layout_.total == b.layout_.total;
  }

 private:
  const ParamGroup* require(std::string_view name) const {
    const auto* g = layout_.find(name);
    if (!g) throw UsageError("no parameter group '" + std::string(name) + "'");
    return g;
  }

  ComposerConfig config_;
  ParameterLayout layout_;
  std::vector<double> values_;
};

/// Forward intermediates of one image projection.
struct ImageTape {
  std::vector<double> input;
  nn::NormalizeTape norm;

  const std::vector<double>& output() const { return norm.out; }
};

struct LayerTape {
  std::vector<double> x, q, k, v, attn, ctx, y, ffn_pre, ffn_act, out;
  nn::LayerNormTape ln1, ln2;
};

/// Forward intermediates of one composition; reusable across samples.
struct ComposeTape {
  ImageTape image;
  std::vector<std::int32_t> tokens;
  std::vector<double> text_mean;
  std::vector<double> concat, hidden_pre, gate, residual_pre;
  std::vector<double> pre_norm;
  std::vector<LayerTape> layers;
  std::size_t seq_len = 0;
  nn::NormalizeTape out;

  const std::vector<double>& output() const { return out.out; }
};

/// Stateless forward/backward kernels for one configuration. Parameters and
/// gradients are passed as flat spans laid out by make_layout.
class Composer {
 public:
  explicit Composer(const ComposerConfig& cfg) : cfg_(cfg), layout_(make_layout(cfg)) {}

  const ComposerConfig& config() const { return cfg_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.total; }

  /// Shared candidate/reference projection: normalize(W f + b).
  template <typename T>
  void project(std::span<const double> params, std::span<const T> feature, ImageTape& tape) const {
    if (feature.size() != cfg_.feature_dim) {
      throw DataError("feature has dimension " + std::to_string(feature.size()) + ", model expects " +
                      std::to_string(cfg_.feature_dim));
    }
    tape.input.assign(feature.begin(), feature.end());
    if (!layout_.learned_projection) {
      nn::normalize_forward(tape.input, tape.norm);
      return;
    }
    const auto& s = layout_.projection;
    std::vector<double> z(s.out);
    nn::linear(params.data() + s.w, params.data() + s.b, tape.input.data(), z.data(), s.out, s.in);
    nn::normalize_forward(z, tape.norm);
  }

  template <typename T>
  std::vector<double> project(std::span<const double> params, std::span<const T> feature) const {
    ImageTape tape;
    project(params, feature, tape);
    return tape.norm.out;
  }

  void project_backward(std::span<const double> params, const ImageTape& tape,
                        std::span<const double> dphi, std::span<double> grad) const {
    if (!layout_.learned_projection) return;
    std::vector<double> dz(cfg_.d_model);
    nn::normalize_backward(tape.norm, dphi, dz);
    const auto& s = layout_.projection;
    nn::linear_backward(params.data() + s.w, tape.input.data(), dz.data(), grad.data() + s.w,
                        grad.data() + s.b, nullptr, s.out, s.in);
  }

  /// Composes ⟨reference feature, caption tokens⟩ into a unit vector. For
  /// random_image_text the caller passes the substitute reference.
  template <typename T>
  const std::vector<double>& compose(std::span<const double> params, std::span<const T> reference,
                                     std::span<const std::int32_t> tokens, ComposeTape& tape) const {
    if (params.size() != layout_.total) throw UsageError("parameter vector size mismatch");
    project(params, reference, tape.image);
    if (cfg_.uses_text()) {
      if (tokens.empty()) throw DataError("compose: empty token list");
      for (auto t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
          throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));
        }
      }
    }
    tape.tokens.assign(tokens.begin(), tokens.end());
    switch (cfg_.kind) {
      case ComposerKind::kImageOnly:
        tape.out = tape.image.norm;
        break;
      case ComposerKind::kTextOnly:
        text_mean(params, tape);
        nn::normalize_forward(tape.text_mean, tape.out);
        break;
      case ComposerKind::kConcatMlp:
      case ComposerKind::kRandomImageText:
        concat_forward(params, tape);
        break;
      case ComposerKind::kGatedResidual:
        gated_forward(params, tape);
        break;
      case ComposerKind::kTransformer:
        transformer_forward(params, tape);
        break;
    }
    return tape.out.out;
  }

  /// Accumulates dLoss/dparams into grad given dLoss/dphi.
  void compose_backward(std::span<const double> params, const ComposeTape& tape,
                        std::span<const double> dphi, std::span<double> grad) const {
    if (grad.size() != layout_.total) throw UsageError("gradient vector size mismatch");
    const std::size_t d = cfg_.d_model;
    std::vector<double> dimg(d, 0.0);
    switch (cfg_.kind) {
      case ComposerKind::kImageOnly:
        std::copy(dphi.begin(), dphi.end(), dimg.begin());
        break;
      case ComposerKind::kTextOnly: {
        std::vector<double> de(d);
        nn::normalize_backward(tape.out, dphi, de);
        text_mean_backward(tape, de, grad);
        break;
      }
      case ComposerKind::kConcatMlp:
      case ComposerKind::kRandomImageText:
        concat_backward(params, tape, dphi, dimg, grad);
        break;
      case ComposerKind::kGatedResidual:
        gated_backward(params, tape, dphi, dimg, grad);
        break;
      case ComposerKind::kTransformer:
        transformer_backward(params, tape, dphi, dimg, grad);
        break;
    }
    project_backward(params, tape.image, dimg, grad);
  }

 private:
  void text_mean(std::span<const double> params, ComposeTape& tape) const {
    const std::size_t d = cfg_.d_model;
    tape.text_mean.assign(d, 0.0);
    const double scale = 1.0 / static_cast<double>(tape.tokens.size());
    for (auto t : tape.tokens) {
      nn::axpy(scale, params.data() + layout_.token_embedding + static_cast<std::size_t>(t) * d,
               tape.text_mean.data(), d);
    }
  }

  void text_mean_backward(const ComposeTape& tape, std::span<const double> de,
                          std::span<double> grad) const {
    const std::size_t d = cfg_.d_model;
    const double scale = 1.0 / static_cast<double>(tape.tokens.size());
    for (auto t : tape.tokens) {
      nn::axpy(scale, de.data(), grad.data() + layout_.token_embedding + static_cast<std::size_t>(t) * d, d);
    }
  }

  void build_concat(std::span<const double> params, ComposeTape& tape) const {
    text_mean(params, tape);
    tape.concat = tape.image.norm.out;
    tape.concat.insert(tape.concat.end(), tape.text_mean.begin(), tape.text_mean.end());
  }

  // Splits d(concat) into the image and text halves.
  void scatter_concat(const ComposeTape& tape, std::span<const double> dconcat,
                      std::span<double> dimg, std::span<double> grad) const {
    const std::size_t d = cfg_.d_model;
    for (std::size_t i = 0; i < d; ++i) dimg[i] += dconcat[i];
    text_mean_backward(tape, dconcat.subspan(d, d), grad);
  }

  void concat_forward(std::span<const double> params, ComposeTape& tape) const {
    build_concat(params, tape);
    const auto& h = layout_.mlp_hidden;
    const auto& o = layout_.mlp_out;
    tape.hidden_pre.resize(h.out);
    nn::linear(params.data() + h.w, params.data() + h.b, tape.concat.data(), tape.hidden_pre.data(),
               h.out, h.in);
    std::vector<double> act(h.out);
    for (std::size_t i = 0; i < h.out; ++i) act[i] = nn::relu(tape.hidden_pre[i]);
    tape.pre_norm.resize(o.out);
    nn::linear(params.data() + o.w, params.data() + o.b, act.data(), tape.pre_norm.data(), o.out, o.in);
    nn::normalize_forward(tape.pre_norm, tape.out);
  }

  void concat_backward(std::span<const double> params, const ComposeTape& tape,
                       std::span<const double> dphi, std::span<double> dimg,
                       std::span<double> grad) const {
    const auto& h = layout_.mlp_hidden;
    const auto& o = layout_.mlp_out;
    std::vector<double> dz(o.out);
    nn::normalize_backward(tape.out, dphi, dz);
    std::vector<double> act(h.out), dact(h.out, 0.0);
    for (std::size_t i = 0; i < h.out; ++i) act[i] = nn::relu(tape.hidden_pre[i]);
    nn::linear_backward(params.data() + o.w, act.data(), dz.data(), grad.data() + o.w,
                        grad.data() + o.b, dact.data(), o.out, o.in);
    for (std::size_t i = 0; i < h.out; ++i) {
      if (tape.hidden_pre[i] <= 0.0) dact[i] = 0.0;
    }
    std::vector<double> dconcat(h.in, 0.0);
    nn::linear_backward(params.data() + h.w, tape.concat.data(), dact.data(), grad.data() + h.w,
                        grad.data() + h.b, dconcat.data(), h.out, h.in);
    scatter_concat(tape, dconcat, dimg, grad);
  }

  // z = sigmoid(gate(c)) * phi_img + residual(c), c = [phi_img; text].
  void gated_forward(std::span<const double> params, ComposeTape& tape) const {
    build_concat(params, tape);
    const auto& g = layout_.gate;
    const auto& rh = layout_.residual_hidden;
    const auto& ro = layout_.residual_out;
    const std::size_t d = cfg_.d_model;
    tape.gate.resize(d);
    nn::linear(params.data() + g.w, params.data() + g.b, tape.concat.data(), tape.gate.data(), g.out, g.in);
    for (double& x : tape.gate) x = nn::sigmoid(x);
    tape.residual_pre.resize(rh.out);
    nn::linear(params.data() + rh.w, params.data() + rh.b, tape.concat.data(), tape.residual_pre.data(),
               rh.out, rh.in);
    std::vector<double> act(rh.out);
    for (std::size_t i = 0; i < rh.out; ++i) act[i] = nn::relu(tape.residual_pre[i]);
    tape.pre_norm.resize(d);
    nn::linear(params.data() + ro.w, params.data() + ro.b, act.data(), tape.pre_norm.data(), ro.out, ro.in);
    const auto& img = tape.image.norm.out;
    for (std::size_t i = 0; i < d; ++i) tape.pre_norm[i] += tape.gate[i] * img[i];
    nn::normalize_forward(tape.pre_norm, tape.out);
  }

  void gated_backward(std::span<const double> params, const ComposeTape& tape,
                      std::span<const double> dphi, std::span<double> dimg,
                      std::span<double> grad) const {
    const auto& g = layout_.gate;
    const auto& rh = layout_.residual_hidden;
    const auto& ro = layout_.residual_out;
    const std::size_t d = cfg_.d_model;
    const auto& img = tape.image.norm.out;
    std::vector<double> dz(d);
    nn::normalize_backward(tape.out, dphi, dz);

    std::vector<double> dgate_pre(d);
    for (std::size_t i = 0; i < d; ++i) {
      dimg[i] += dz[i] * tape.gate[i];
      dgate_pre[i] = dz[i] * img[i] * tape.gate[i] * (1.0 - tape.gate[i]);
    }
    std::vector<double> act(rh.out), dact(rh.out, 0.0);
    for (std::size_t i = 0; i < rh.out; ++i) act[i] = nn::relu(tape.residual_pre[i]);
    nn::linear_backward(params.data() + ro.w, act.data(), dz.data(), grad.data() + ro.w,
                        grad.data() + ro.b, dact.data(), ro.out, ro.in);
    for (std::size_t i = 0; i < rh.out; ++i) {
      if (tape.residual_pre[i] <= 0.0) dact[i] = 0.0;
    }
    std::vector<double> dconcat(2 * d, 0.0);
    nn::linear_backward(params.data() + rh.w, tape.concat.data(), dact.data(), grad.data() + rh.w,
                        grad.data() + rh.b, dconcat.data(), rh.out, rh.in);
    nn::linear_backward(params.data() + g.w, tape.concat.data(), dgate_pre.data(), grad.data() + g.w,
                        grad.data() + g.b, dconcat.data(), g.out, g.in);
    scatter_concat(tape, dconcat, dimg, grad);
  }

  // Sequence [CLS, w_1..w_T, v_img] with learned positions, post-norm layers,
  // output read at the image slot.
  void transformer_forward(std::span<const double> params, ComposeTape& tape) const {
    const std::size_t d = cfg_.d_model;
    if (tape.tokens.size() > cfg_.max_tokens) tape.tokens.resize(cfg_.max_tokens);
    const std::size_t n = tape.tokens.size() + 2;
    tape.seq_len = n;
    const double* emb = params.data() + layout_.token_embedding;
    const double* pos = params.data() + layout_.position_embedding;

    std::vector<double> x(n * d);
    for (std::size_t t = 0; t < n; ++t) {
      double* row = x.data() + t * d;
      const double* src = nullptr;
      if (t == 0) {
        src = emb + static_cast<std::size_t>(Vocabulary::kCls) * d;
      } else if (t + 1 < n) {
        src = emb + static_cast<std::size_t>(tape.tokens[t - 1]) * d;
      } else {
        src = tape.image.norm.out.data();
      }
      for (std::size_t i = 0; i < d; ++i) row[i] = src[i] + pos[t * d + i];
    }

    tape.layers.resize(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      layer_forward(params, layout_.layers[l], x, n, tape.layers[l]);
      x = tape.layers[l].out;
    }
    tape.pre_norm.assign(x.begin() + static_cast<std::ptrdiff_t>((n - 1) * d), x.end());
    nn::normalize_forward(tape.pre_norm, tape.out);
  }

  void layer_forward(std::span<const double> params, const LayerSlots& s, const std::vector<double>& x,
                     std::size_t n, LayerTape& t) const {
    const std::size_t d = cfg_.d_model;
    const std::size_t heads = cfg_.heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* p = params.data();
    t.x = x;
    t.q.resize(n * d);
    t.k.resize(n * d);
    t.v.resize(n * d);
    nn::linear_rows(p + s.query.w, p + s.query.b, x.data(), t.q.data(), n, d, d);
    nn::linear_rows(p + s.key.w, p + s.key.b, x.data(), t.k.data(), n, d, d);
    nn::linear_rows(p + s.value.w, p + s.value.b, x.data(), t.v.data(), n, d, d);

    t.attn.assign(heads * n * n, 0.0);
    t.ctx.assign(n * d, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double* a = t.attn.data() + (h * n + i) * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          a[j] = scale * nn::dot(t.q.data() + i * d + h * dh, t.k.data() + j * d + h * dh, dh);
          mx = std::max(mx, a[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          a[j] = std::exp(a[j] - mx);
          sum += a[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          a[j] /= sum;
          nn::axpy(a[j], t.v.data() + j * d + h * dh, t.ctx.data() + i * d + h * dh, dh);
        }
      }
    }
    std::vector<double> r(n * d);
    nn::linear_rows(p + s.output.w, p + s.output.b, t.ctx.data(), r.data(), n, d, d);
    for (std::size_t i = 0; i < n * d; ++i) r[i] += x[i];
    t.y.resize(n * d);
    nn::layer_norm_forward(r.data(), p + s.ln1_gain, p + s.ln1_bias, t.y.data(), n, d, t.ln1);

    const std::size_t ff = cfg_.d_ff;
    t.ffn_pre.resize(n * ff);
    t.ffn_act.resize(n * ff);
    nn::linear_rows(p + s.ffn_in.w, p + s.ffn_in.b, t.y.data(), t.ffn_pre.data(), n, ff, d);
    for (std::size_t i = 0; i < n * ff; ++i) t.ffn_act[i] = nn::gelu(t.ffn_pre[i]);
    nn::linear_rows(p + s.ffn_out.w, p + s.ffn_out.b, t.ffn_act.data(), r.data(), n, d, ff);
    for (std::size_t i = 0; i < n * d; ++i) r[i] += t.y[i];
    t.out.resize(n * d);
    nn::layer_norm_forward(r.data(), p + s.ln2_gain, p + s.ln2_bias, t.out.data(), n, d, t.ln2);
  }

  // dout (n x d) in, dx (n x d) out.
  void layer_backward(std::span<const double> params, const LayerSlots& s, const LayerTape& t,
                      std::size_t n, const std::vector<double>& dout, std::vector<double>& dx,
                      std::span<double> grad) const {
    const std::size_t d = cfg_.d_model;
    const std::size_t ff = cfg_.d_ff;
    const std::size_t heads = cfg_.heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* p = params.data();
    double* g = grad.data();

    std::vector<double> dr2(n * d);
    nn::layer_norm_backward(t.ln2, p + s.ln2_gain, dout.data(), g + s.ln2_gain, g + s.ln2_bias,
                            dr2.data(), n, d);
    std::vector<double> dy = dr2;
    std::vector<double> dact(n * ff, 0.0);
    nn::linear_rows_backward(p + s.ffn_out.w, t.ffn_act.data(), dr2.data(), g + s.ffn_out.w,
                             g + s.ffn_out.b, dact.data(), n, d, ff);
    for (std::size_t i = 0; i < n * ff; ++i) dact[i] *= nn::gelu_grad(t.ffn_pre[i]);
    nn::linear_rows_backward(p + s.ffn_in.w, t.y.data(), dact.data(), g + s.ffn_in.w, g + s.ffn_in.b,
                             dy.data(), n, ff, d);

    std::vector<double> dr1(n * d);
    nn::layer_norm_backward(t.ln1, p + s.ln1_gain, dy.data(), g + s.ln1_gain, g + s.ln1_bias,
                            dr1.data(), n, d);
    dx = dr1;
    std::vector<double> dctx(n * d, 0.0);
    nn::linear_rows_backward(p + s.output.w, t.ctx.data(), dr1.data(), g + s.output.w, g + s.output.b,
                             dctx.data(), n, d, d);

    std::vector<double> dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0), da(n);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* a = t.attn.data() + (h * n + i) * n;
        const double* dci = dctx.data() + i * d + h * dh;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          da[j] = nn::dot(dci, t.v.data() + j * d + h * dh, dh);
          nn::axpy(a[j], dci, dv.data() + j * d + h * dh, dh);
          weighted += a[j] * da[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double ds = scale * a[j] * (da[j] - weighted);
          nn::axpy(ds, t.k.data() + j * d + h * dh, dq.data() + i * d + h * dh, dh);
          nn::axpy(ds, t.q.data() + i * d + h * dh, dk.data() + j * d + h * dh, dh);
        }
      }
    }
    nn::linear_rows_backward(p + s.query.w, t.x.data(), dq.data(), g + s.query.w, g + s.query.b,
                             dx.data(), n, d, d);
    nn::linear_rows_backward(p + s.key.w, t.x.data(), dk.data(), g + s.key.w, g + s.key.b, dx.data(),
                             n, d, d);
    nn::linear_rows_backward(p + s.value.w, t.x.data(), dv.data(), g + s.value.w, g + s.value.b,
                             dx.data(), n, d, d);
  }

  void transformer_backward(std::span<const double> params, const ComposeTape& tape,
                            std::span<const double> dphi, std::span<double> dimg,
                            std::span<double> grad) const {
    const std::size_t d = cfg_.d_model;
    const std::size_t n = tape.seq_len;
    std::vector<double> dx(n * d, 0.0);
    nn::normalize_backward(tape.out, dphi,
                           std::span<double>(dx).subspan((n - 1) * d, d));
    std::vector<double> dprev;
    for (std::size_t l = cfg_.layers; l-- > 0;) {
      layer_backward(params, layout_.layers[l], tape.layers[l], n, dx, dprev, grad);
      dx.swap(dprev);
    }
    double* demb = grad.data() + layout_.token_embedding;
    double* dpos = grad.data() + layout_.position_embedding;
    for (std::size_t t = 0; t < n; ++t) {
      const double* row = dx.data() + t * d;
      nn::axpy(1.0, row, dpos + t * d, d);
      if (t == 0) {
        nn::axpy(1.0, row, demb + static_cast<std::size_t>(Vocabulary::kCls) * d, d);
      } else if (t + 1 < n) {
        nn::axpy(1.0, row, demb + static_cast<std::size_t>(tape.tokens[t - 1]) * d, d);
      } else {
        for (std::size_t i = 0; i < d; ++i) dimg[i] += row[i];
      }
    }
  }

  ComposerConfig cfg_;
  ParameterLayout layout_;
};

}  // namespace cirbench

#endif  // CIRBENCH_COMPOSER_HPP_
