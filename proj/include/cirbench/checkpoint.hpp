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

#ifndef CIRBENCH_CHECKPOINT_HPP_
#define CIRBENCH_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cirbench/composer.hpp"
#include "cirbench/error.hpp"
#include "cirbench/feature_store.hpp"
#include "cirbench/text.hpp"

namespace cirbench {

/// A trained composition model: configuration, vocabulary and weights.
struct Model {
  Vocabulary vocab;
  ComposerParameters params;

  const ComposerConfig& config() const { return params.config(); }
  Composer composer() const { return Composer(params.config()); }
};

inline nlohmann::ordered_json config_to_json(const ComposerConfig& c, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(c.kind));
  j["feature_dim"] = c.feature_dim;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["max_tokens"] = c.max_tokens;
  j["projection"] = c.projection == ProjectionKind::kLearned ? "learned" : "identity";
  j["vocab_size"] = c.vocab_size;
  j["vocab"] = vocab.learned_words();
  return j;
}

inline ComposerConfig config_from_json(const nlohmann::json& j) {
  ComposerConfig c;
  c.kind = parse_composer_kind(j.at("kind").get<std::string>());
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  const auto projection = j.at("projection").get<std::string>();
  if (projection != "learned" && projection != "identity") {
    throw FormatError("unknown projection '" + projection + "'");
  }
  c.projection = projection == "learned" ? ProjectionKind::kLearned : ProjectionKind::kIdentity;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  return c;
}

inline constexpr char kCheckpointMagic[4] = {'C', 'P', 'R', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "CPR1", u32 version, u32 config length, UTF-8 JSON config,
/// then the flat parameters as little-endian 64-bit reals. The parameter
/// count follows from the config.
inline std::string serialize_model(const Model& model) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  const auto blob = config_to_json(model.config(), model.vocab).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out += blob;
  for (double v : model.params.flat()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

inline Model parse_model(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("missing CPR1 header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_u32(p + 4) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  const std::uint32_t blob_size = detail::get_u32(p + 8);
  if (bytes.size() < 12ull + blob_size) throw FormatError("truncated checkpoint config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(12, blob_size));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Model model;
  try {
    const auto cfg = config_from_json(j);
    model.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    if (cfg.uses_text() && model.vocab.size() != cfg.vocab_size) {
      throw ConsistencyError("checkpoint vocabulary size differs from config");
    }
    model.params = ComposerParameters(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const std::size_t offset = 12 + blob_size;
  const std::size_t count = model.params.size();
  if (bytes.size() - offset != count * 8) {
    throw ConsistencyError("checkpoint holds " + std::to_string((bytes.size() - offset) / 8) +
                           " parameters, config implies " + std::to_string(count));
  }
  auto flat = model.params.flat();
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[offset + i * 8 + b]) << (8 * b);
    flat[i] = std::bit_cast<double>(bits);
  }
  return model;
}

inline void save_model(const Model& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_model(model));
}

inline Model load_model(const std::filesystem::path& path) { return parse_model(detail::read_file(path)); }

}  // namespace cirbench

#endif  // CIRBENCH_CHECKPOINT_HPP_
