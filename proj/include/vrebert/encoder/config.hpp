#pragma once

#include <cstdint>
#include <string>

namespace vrebert {

enum class PositionMode { kRelative, kAbsolute };
// How relative-position tables are shared: one for the whole stack, one per
// layer (shared across heads), or one per head in every layer.
enum class RelativeSharing { kShared, kPerLayer, kPerHead };

struct ModelConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t ff_dim = 128;
  double dropout = 0.1;
  std::size_t num_predicates = 8;
  std::size_t relative_clip = 8;
  PositionMode position_mode = PositionMode::kRelative;
  RelativeSharing relative_sharing = RelativeSharing::kPerLayer;
  std::size_t max_length = 32;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;
  // false: image slots hold one learned null embedding (language-only).
  bool visual_input = true;
  bool image_position = true;
  bool freeze_feature_projection = false;
  double init_std = 0.02;
  double layer_norm_eps = 1e-5;

  // 64 hidden, 4 heads, 2 layers, 128 feed-forward.
  static ModelConfig desk();
  // 768 hidden, 12 heads, 12 layers, 3072 feed-forward.
  static ModelConfig paper();

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  // Throws ConfigError.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  // FNV-1a of the canonical JSON, as 16 hex digits.
  std::string fingerprint() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

const char* to_string(PositionMode mode);
const char* to_string(RelativeSharing sharing);

}  // namespace vrebert
