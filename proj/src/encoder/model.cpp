#include "vrebert/encoder/model.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vrebert/encoder/attention.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/binary_io.hpp"
#include "vrebert/numerics/ops.hpp"

namespace vrebert {

using nlohmann::json;

Tensor encoder_forward(const SequenceBatch& batch, const EncoderWeights& weights,
                       const ModelConfig& config, bool train, Rng* rng) {
  if (batch.max_length > config.max_length) {
    throw ContractError("sequence length " + std::to_string(batch.max_length) +
                        " exceeds the configured maximum " +
                        std::to_string(config.max_length));
  }
  const double p = train ? config.dropout : 0.0;
  if (p > 0.0 && !rng) {
    throw ContractError("encoder_forward: training dropout needs an rng");
  }
  const AttentionShape shape{batch.batch_size, batch.max_length, batch.lengths,
                             config.num_heads};
  Tensor x = batch.embeddings;
  for (const auto& layer : weights.layers) {
    Tensor q = ops::matmul(x, layer.query);
    Tensor k = ops::matmul(x, layer.key);
    Tensor v = ops::linear(x, layer.value, layer.value_bias);
    const RelativePositionTable* table =
        config.position_mode == PositionMode::kRelative ? &layer.relative
                                                        : nullptr;
    Tensor context = multi_head_attention(q, k, v, table, shape, p, rng, train);
    Tensor attn = ops::linear(context, layer.output, layer.output_bias);
    if (p > 0.0) attn = ops::dropout(attn, p, *rng, train);
    x = ops::layer_norm(ops::add(x, attn), layer.attn_gamma, layer.attn_beta,
                        config.layer_norm_eps);

    Tensor ff = ops::gelu(ops::linear(x, layer.ff_in, layer.ff_in_bias));
    ff = ops::linear(ff, layer.ff_out, layer.ff_out_bias);
    if (p > 0.0) ff = ops::dropout(ff, p, *rng, train);
    x = ops::layer_norm(ops::add(x, ff), layer.ff_gamma, layer.ff_beta,
                        config.layer_norm_eps);
  }
  return x;
}

Tensor encoder_forward(const SequenceInput& seq, const EncoderWeights& weights,
                       const ModelConfig& config, bool train, Rng* rng) {
  return encoder_forward(as_batch(seq), weights, config, train, rng);
}

Tensor predicate_probabilities(const SequenceBatch& batch,
                               const EncoderWeights& weights,
                               const ModelConfig& config, bool train,
                               Rng* rng) {
  if (batch.mask_rows.size() != batch.batch_size) {
    throw ContractError("every sequence needs one [MASK] position");
  }
  Tensor hidden = encoder_forward(batch, weights, config, train, rng);
  std::vector<std::int64_t> rows(batch.mask_rows.begin(), batch.mask_rows.end());
  Tensor masked = ops::gather_rows(hidden, rows);
  Tensor logits = ops::linear(masked, weights.head, weights.head_bias);
  return ops::softmax(logits, 1);
}

PredicateDistribution masked_predict(const SequenceInput& seq,
                                     const EncoderWeights& weights,
                                     const ModelConfig& config) {
  NoGradGuard guard;
  Tensor probs =
      predicate_probabilities(as_batch(seq), weights, config, false, nullptr);
  return {probs.data().begin(), probs.data().end()};
}

namespace {

Tensor normal_init(Rng& rng, Shape shape, double stddev) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

ModelConfig resolved(ModelConfig config, const Vocabulary& vocab,
                     const CategoryVocab& categories) {
  config.vocab_size = vocab.size();
  config.num_predicates = categories.predicates.size();
  config.validate();
  return config;
}

}  // namespace

Model::Model(ModelConfig config, Vocabulary vocab, CategoryVocab categories,
             std::uint64_t init_seed)
    : config_(resolved(config, vocab, categories)),
      vocab_(std::move(vocab)),
      categories_(std::move(categories)),
      labels_(categories_, vocab_) {
  const auto D = config_.hidden_dim, FF = config_.ff_dim,
             P = config_.num_predicates;
  const auto F = std::max<std::size_t>(config_.feature_dim, 1);
  const double sd = config_.init_std;
  Rng rng = Rng::stream(init_seed, "init");

  auto& e = weights_.embedding;
  e.word = normal_init(rng, {vocab_.size(), D}, sd);
  e.segment = normal_init(rng, {2, D}, sd);
  e.null_image = normal_init(rng, {1, D}, sd);
  e.feature_weight = normal_init(rng, {F, D}, sd);
  e.feature_bias = zeros({D});
  e.position_weight = normal_init(rng, {5, D}, sd);
  e.position_bias = zeros({D});
  e.norm_gamma = ones({D});
  e.norm_beta = zeros({D});
  if (config_.freeze_feature_projection) {
    e.feature_weight.set_requires_grad(false);
    e.feature_bias.set_requires_grad(false);
  }

  const auto dz = config_.head_dim();
  const auto span = 2 * config_.relative_clip + 1;
  const bool relative = config_.position_mode == PositionMode::kRelative;
  Tensor shared_table;
  if (relative && config_.relative_sharing == RelativeSharing::kShared) {
    shared_table = normal_init(rng, {span, dz}, sd);
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    LayerWeights layer;
    layer.query = normal_init(rng, {D, D}, sd);
    layer.key = normal_init(rng, {D, D}, sd);
    layer.value = normal_init(rng, {D, D}, sd);
    layer.value_bias = zeros({D});
    layer.output = normal_init(rng, {D, D}, sd);
    layer.output_bias = zeros({D});
    layer.attn_gamma = ones({D});
    layer.attn_beta = zeros({D});
    layer.ff_in = normal_init(rng, {D, FF}, sd);
    layer.ff_in_bias = zeros({FF});
    layer.ff_out = normal_init(rng, {FF, D}, sd);
    layer.ff_out_bias = zeros({D});
    layer.ff_gamma = ones({D});
    layer.ff_beta = zeros({D});
    layer.relative.clip = config_.relative_clip;
    if (relative) {
      switch (config_.relative_sharing) {
        case RelativeSharing::kShared:
          layer.relative.weights = shared_table;
          break;
        case RelativeSharing::kPerLayer:
          layer.relative.weights = normal_init(rng, {span, dz}, sd);
          break;
        case RelativeSharing::kPerHead:
          layer.relative.weights =
              normal_init(rng, {span * config_.num_heads, dz}, sd);
          break;
      }
    }
    weights_.layers.push_back(std::move(layer));
  }
  weights_.head = normal_init(rng, {D, P}, sd);
  weights_.head_bias = zeros({P});
  register_parameters();
}

void Model::register_parameters() {
  params_.clear();
  auto add = [this](std::string name, const Tensor& t) {
    params_.push_back({std::move(name), t});
  };
  const auto& e = weights_.embedding;
  add("embedding.word", e.word);
  add("embedding.segment", e.segment);
  add("embedding.null_image", e.null_image);
  add("embedding.feature.weight", e.feature_weight);
  add("embedding.feature.bias", e.feature_bias);
  add("embedding.position.weight", e.position_weight);
  add("embedding.position.bias", e.position_bias);
  add("embedding.norm.gamma", e.norm_gamma);
  add("embedding.norm.beta", e.norm_beta);
  const bool relative = config_.position_mode == PositionMode::kRelative;
  if (relative && config_.relative_sharing == RelativeSharing::kShared &&
      !weights_.layers.empty()) {
    add("relative", weights_.layers.front().relative.weights);
  }
  for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
    const auto& L = weights_.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "attn.query", L.query);
    add(p + "attn.key", L.key);
    add(p + "attn.value", L.value);
    add(p + "attn.value_bias", L.value_bias);
    add(p + "attn.output", L.output);
    add(p + "attn.output_bias", L.output_bias);
    add(p + "attn.norm.gamma", L.attn_gamma);
    add(p + "attn.norm.beta", L.attn_beta);
    add(p + "ff.in", L.ff_in);
    add(p + "ff.in_bias", L.ff_in_bias);
    add(p + "ff.out", L.ff_out);
    add(p + "ff.out_bias", L.ff_out_bias);
    add(p + "ff.norm.gamma", L.ff_gamma);
    add(p + "ff.norm.beta", L.ff_beta);
    if (relative && config_.relative_sharing != RelativeSharing::kShared) {
      add(p + "relative", L.relative.weights);
    }
  }
  add("head.weight", weights_.head);
  add("head.bias", weights_.head_bias);
}

std::vector<NamedTensor> Model::named_parameters() const { return params_; }

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

SequenceBatch Model::embed(std::span<const PairInput> pairs) const {
  return build_batch(pairs, labels_, vocab_, weights_.embedding, config_);
}

Tensor Model::probabilities(std::span<const PairInput> pairs, bool train,
                            Rng* rng) const {
  return predicate_probabilities(embed(pairs), weights_, config_, train, rng);
}

std::vector<PredicateDistribution> Model::predict(
    std::span<const PairInput> pairs) const {
  std::vector<PredicateDistribution> out;
  if (pairs.empty()) return out;
  NoGradGuard guard;
  Tensor probs = probabilities(pairs, false, nullptr);
  const auto P = config_.num_predicates;
  const auto data = probs.data();
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    out.emplace_back(data.begin() + b * P, data.begin() + (b + 1) * P);
  }
  return out;
}

void Model::load_parameters(const std::vector<NamedTensor>& params,
                            bool require_all) {
  for (auto& [name, target] : params_) {
    auto it = std::find_if(params.begin(), params.end(),
                           [&](const NamedTensor& p) { return p.name == name; });
    if (it == params.end()) {
      if (require_all) {
        throw ConfigError("snapshot lacks parameter '" + name + "'");
      }
      continue;
    }
    if (it->tensor.shape() != target.shape()) {
      throw ConfigError("parameter '" + name + "' has shape " +
                        shape_to_string(it->tensor.shape()) +
                        " in the snapshot but " +
                        shape_to_string(target.shape()) + " in the model");
    }
    auto dst = target.mutable_data();
    std::copy(it->tensor.data().begin(), it->tensor.data().end(), dst.begin());
  }
}

std::string Model::serialize() const {
  json header = {{"config", json::parse(config_.to_json())},
                 {"tokens", vocab_.tokens()},
                 {"objects", categories_.objects},
                 {"predicates", categories_.predicates}};
  std::ostringstream out(std::ios::binary);
  out.write("VRC1", 4);
  binary::write_string(out, header.dump());
  write_parameters(out, params_);
  return out.str();
}

void Model::save(const std::filesystem::path& path) const {
  write_file_atomically(path, serialize());
}

Model Model::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  binary::expect_magic(in, "VRC1", "model snapshot");
  const std::string text = binary::read_string(in, "model header");
  ModelConfig config;
  Vocabulary vocab({std::string(kPadToken), std::string(kUnkToken),
                    std::string(kClsToken), std::string(kSepToken),
                    std::string(kMaskToken)});
  CategoryVocab categories;
  try {
    const json header = json::parse(text);
    config = ModelConfig::from_json(header.at("config").dump());
    vocab = Vocabulary(header.at("tokens").get<std::vector<std::string>>());
    categories.objects = header.at("objects").get<std::vector<std::string>>();
    categories.predicates =
        header.at("predicates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  Model model(config, std::move(vocab), std::move(categories), 0);
  model.load_parameters(read_parameters(in), true);
  return model;
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

Model Model::clone() const { return deserialize(serialize()); }

}  // namespace vrebert
