#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"
#include "vrebert/embedding/positional.hpp"
#include "vrebert/embedding/sequence.hpp"
#include "vrebert/embedding/vocabulary.hpp"
#include "vrebert/encoder/config.hpp"
#include "vrebert/numerics/rng.hpp"
#include "vrebert/numerics/snapshot.hpp"

namespace vrebert {

struct LayerWeights {
  Tensor query, key;               // [D x D], no bias
  Tensor value, value_bias;        // [D x D], [D]
  Tensor output, output_bias;      // [D x D], [D]
  Tensor attn_gamma, attn_beta;    // post-attention layer norm
  Tensor ff_in, ff_in_bias;        // [D x FF], [FF]
  Tensor ff_out, ff_out_bias;      // [FF x D], [D]
  Tensor ff_gamma, ff_beta;        // post-feed-forward layer norm
  RelativePositionTable relative;  // undefined weights in absolute mode
};

struct EncoderWeights {
  EmbeddingWeights embedding;
  std::vector<LayerWeights> layers;
  Tensor head, head_bias;  // [D x P], [P]
};

// Post-norm encoder stack. Each layer:
//   h = LayerNorm(x + Dropout(Attn(x) W^O))
//   y = LayerNorm(h + Dropout(GELU(h W1) W2))
// Returns [B * max_length x D]. `rng` drives dropout and may be null when
// !train or dropout is 0. Zero layers return the embeddings unchanged.
Tensor encoder_forward(const SequenceBatch& batch, const EncoderWeights& weights,
                       const ModelConfig& config, bool train, Rng* rng);
Tensor encoder_forward(const SequenceInput& seq, const EncoderWeights& weights,
                       const ModelConfig& config, bool train, Rng* rng);

// Softmax of the predicate head at every [MASK] row, [B x P].
Tensor predicate_probabilities(const SequenceBatch& batch,
                               const EncoderWeights& weights,
                               const ModelConfig& config, bool train, Rng* rng);

using PredicateDistribution = std::vector<double>;

// Inference-mode distribution over predicates. Throws ContractError when
// the sequence has no mask position.
PredicateDistribution masked_predict(const SequenceInput& seq,
                                     const EncoderWeights& weights,
                                     const ModelConfig& config);

// Config, vocabularies and named parameters of one encoder.
class Model {
 public:
  // Seeded N(0, init_std) initialization; layer-norm gains start at 1 and
  // biases at 0. Fills vocab_size / num_predicates from the vocabularies.
  Model(ModelConfig config, Vocabulary vocab, CategoryVocab categories,
        std::uint64_t init_seed);

  // Tensors are shared handles, so copies would alias weights.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model clone() const;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const CategoryVocab& categories() const { return categories_; }
  const LabelTokens& labels() const { return labels_; }
  const EncoderWeights& weights() const { return weights_; }
  EncoderWeights& weights() { return weights_; }

  std::vector<NamedTensor> named_parameters() const;
  // Parameters updated by the optimizer (excludes frozen ones).
  std::vector<Tensor> trainable_parameters() const;

  SequenceBatch embed(std::span<const PairInput> pairs) const;
  Tensor probabilities(std::span<const PairInput> pairs, bool train,
                       Rng* rng) const;
  // No-grad inference, one distribution per pair.
  std::vector<PredicateDistribution> predict(
      std::span<const PairInput> pairs) const;

  // Copies values for every parameter present in `params`. Throws
  // ConfigError on a shape mismatch or (when `require_all`) a missing name.
  void load_parameters(const std::vector<NamedTensor>& params,
                       bool require_all = true);

  // Snapshot: magic "VRC1", u32 length + JSON header (config, tokens,
  // categories), then the "VRW1" parameter block.
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Model load(const std::filesystem::path& path);
  static Model deserialize(const std::string& bytes);

 private:
  void register_parameters();

  ModelConfig config_;
  Vocabulary vocab_;
  CategoryVocab categories_;
  LabelTokens labels_;
  EncoderWeights weights_;
  std::vector<NamedTensor> params_;
};

}  // namespace vrebert
