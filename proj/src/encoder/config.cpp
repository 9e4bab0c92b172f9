#include "vrebert/encoder/config.hpp"

#include <cstdio>
#include <json.hpp>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/rng.hpp"

namespace vrebert {

using nlohmann::json;

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.hidden_dim = 768;
  c.num_heads = 12;
  c.num_layers = 12;
  c.ff_dim = 3072;
  return c;
}

void ModelConfig::validate() const {
  if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
    throw ConfigError("hidden dim " + std::to_string(hidden_dim) +
                      " is not divisible by " + std::to_string(num_heads) +
                      " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (num_predicates < 2) throw ConfigError("need at least 2 predicates");
  if (ff_dim == 0) throw ConfigError("feed-forward dim must be positive");
  if (vocab_size < 5) throw ConfigError("vocabulary is missing special tokens");
  if (visual_input && feature_dim == 0) {
    throw ConfigError("visual input requires a feature dim");
  }
  if (max_length < 9) throw ConfigError("max length must be at least 9");
  if (!(init_std > 0.0) || !(layer_norm_eps > 0.0)) {
    throw ConfigError("init std and layer-norm eps must be positive");
  }
}

const char* to_string(PositionMode mode) {
  return mode == PositionMode::kRelative ? "relative" : "absolute";
}

const char* to_string(RelativeSharing sharing) {
  switch (sharing) {
    case RelativeSharing::kShared: return "shared";
    case RelativeSharing::kPerLayer: return "per-layer";
    case RelativeSharing::kPerHead: return "per-head";
  }
  return "per-layer";
}

namespace {

PositionMode parse_position(const std::string& s) {
  if (s == "relative") return PositionMode::kRelative;
  if (s == "absolute") return PositionMode::kAbsolute;
  throw ConfigError("unknown position mode '" + s + "'");
}

RelativeSharing parse_sharing(const std::string& s) {
  if (s == "shared") return RelativeSharing::kShared;
  if (s == "per-layer") return RelativeSharing::kPerLayer;
  if (s == "per-head") return RelativeSharing::kPerHead;
  throw ConfigError("unknown relative sharing '" + s + "'");
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j = {{"hidden_dim", hidden_dim},
            {"num_heads", num_heads},
            {"num_layers", num_layers},
            {"ff_dim", ff_dim},
            {"dropout", dropout},
            {"num_predicates", num_predicates},
            {"relative_clip", relative_clip},
            {"position_mode", to_string(position_mode)},
            {"relative_sharing", to_string(relative_sharing)},
            {"max_length", max_length},
            {"vocab_size", vocab_size},
            {"feature_dim", feature_dim},
            {"visual_input", visual_input},
            {"image_position", image_position},
            {"freeze_feature_projection", freeze_feature_projection},
            {"init_std", init_std},
            {"layer_norm_eps", layer_norm_eps}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.num_predicates = j.at("num_predicates").get<std::size_t>();
    c.relative_clip = j.at("relative_clip").get<std::size_t>();
    c.position_mode = parse_position(j.at("position_mode").get<std::string>());
    c.relative_sharing =
        parse_sharing(j.at("relative_sharing").get<std::string>());
    c.max_length = j.at("max_length").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.visual_input = j.at("visual_input").get<bool>();
    c.image_position = j.at("image_position").get<bool>();
    c.freeze_feature_projection = j.at("freeze_feature_projection").get<bool>();
    c.init_std = j.at("init_std").get<double>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  return c;
}

std::string ModelConfig::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json())));
  return buf;
}

}  // namespace vrebert
