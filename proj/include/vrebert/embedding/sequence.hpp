#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vrebert/data/records.hpp"
#include "vrebert/embedding/vocabulary.hpp"
#include "vrebert/encoder/config.hpp"
#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

// Trainable tables of the input layer.
struct EmbeddingWeights {
  Tensor word;                // [V x D]
  Tensor segment;             // [2 x D]
  Tensor null_image;          // [1 x D], fills image slots when !visual_input
  Tensor feature_weight;      // [F x D]
  Tensor feature_bias;        // [D]
  Tensor position_weight;     // [5 x D], image positional projection P
  Tensor position_bias;       // [D]
  Tensor norm_gamma;          // [D]
  Tensor norm_beta;           // [D]
};

// One (subject, object) query. Detections must outlive the batch build.
struct PairInput {
  const Detection* subject = nullptr;
  const Detection* object = nullptr;
  double width = 0.0;
  double height = 0.0;
};

enum class TokenKind : std::uint8_t { kWord, kSubjectImage, kPredicateImage, kObjectImage, kPad };

// Layout of one sequence before embedding lookup:
//   [CLS] i_sub i_pred i_obj [SEP] sub-label... [MASK] obj-label... [SEP]
struct SequenceLayout {
  std::vector<TokenKind> kinds;
  std::vector<long> token_ids;  // -1 for image slots
  std::vector<int> segment_ids;
  std::size_t mask_position = 0;

  std::size_t length() const { return kinds.size(); }
};

SequenceLayout make_layout(std::span<const std::size_t> subject_tokens,
                           std::span<const std::size_t> object_tokens,
                           const Vocabulary& vocab);

struct SequenceInput {
  Tensor token_embeddings;  // [L x D]
  std::vector<int> segment_ids;
  std::optional<std::size_t> mask_position;
  std::size_t length = 0;
};

// Sequences padded to a common length and stacked row-wise: sequence b owns
// rows [b * max_length, (b + 1) * max_length).
struct SequenceBatch {
  Tensor embeddings;  // [B * max_length x D]
  std::size_t batch_size = 0;
  std::size_t max_length = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> mask_rows;  // absolute row of each [MASK]
  std::vector<int> segment_ids;        // B * max_length
};

// Category label -> token ids, tokenized once.
class LabelTokens {
 public:
  LabelTokens(const CategoryVocab& categories, const Vocabulary& vocab);
  std::span<const std::size_t> operator()(std::size_t category) const;
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::vector<std::size_t>> tokens_;
};

// Embeds each pair: image tokens are the projected region feature plus the
// image positional embedding of the box (the union box for i_pred); word
// tokens are word embeddings. Every token adds its segment embedding, and
// in absolute mode its sinusoidal position; the sum is layer-normalized.
// [CLS] and [SEP] carry no image positional term.
SequenceBatch build_batch(std::span<const PairInput> pairs,
                          const LabelTokens& labels, const Vocabulary& vocab,
                          const EmbeddingWeights& weights,
                          const ModelConfig& config);

// Single-pair form with an explicit union-region feature.
SequenceInput build_sequence(const Detection& subject, const Detection& object,
                             std::span<const float> union_feature, double width,
                             double height, const LabelTokens& labels,
                             const Vocabulary& vocab,
                             const EmbeddingWeights& weights,
                             const ModelConfig& config);

SequenceBatch as_batch(const SequenceInput& seq);

}  // namespace vrebert
