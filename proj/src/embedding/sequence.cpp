#include "vrebert/embedding/sequence.hpp"

#include <algorithm>

#include "vrebert/embedding/positional.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/ops.hpp"

namespace vrebert {

SequenceLayout make_layout(std::span<const std::size_t> subject_tokens,
                           std::span<const std::size_t> object_tokens,
                           const Vocabulary& vocab) {
  SequenceLayout layout;
  auto push = [&layout](TokenKind kind, long id, int segment) {
    layout.kinds.push_back(kind);
    layout.token_ids.push_back(id);
    layout.segment_ids.push_back(segment);
  };
  const auto word = [](std::size_t id) { return static_cast<long>(id); };
  push(TokenKind::kWord, word(vocab.cls_id()), 0);
  push(TokenKind::kSubjectImage, -1, 0);
  push(TokenKind::kPredicateImage, -1, 0);
  push(TokenKind::kObjectImage, -1, 0);
  push(TokenKind::kWord, word(vocab.sep_id()), 0);
  for (auto t : subject_tokens) push(TokenKind::kWord, word(t), 1);
  layout.mask_position = layout.length();
  push(TokenKind::kWord, word(vocab.mask_id()), 1);
  for (auto t : object_tokens) push(TokenKind::kWord, word(t), 1);
  push(TokenKind::kWord, word(vocab.sep_id()), 1);
  return layout;
}

LabelTokens::LabelTokens(const CategoryVocab& categories,
                         const Vocabulary& vocab) {
  for (const auto& name : categories.objects) {
    tokens_.push_back(tokenize(name, vocab));
  }
}

std::span<const std::size_t> LabelTokens::operator()(
    std::size_t category) const {
  if (category >= tokens_.size()) {
    throw ContractError("category id " + std::to_string(category) +
                        " outside the label table");
  }
  return tokens_[category];
}

namespace {

SequenceBatch build_core(std::span<const PairInput> pairs,
                         std::span<const std::vector<float>> union_features,
                         const LabelTokens& labels, const Vocabulary& vocab,
                         const EmbeddingWeights& w, const ModelConfig& config) {
  if (pairs.empty()) throw ContractError("build_batch: no pairs");
  const auto D = config.hidden_dim;
  const auto F = config.feature_dim;

  std::vector<SequenceLayout> layouts;
  layouts.reserve(pairs.size());
  std::size_t max_len = 0;
  for (const auto& p : pairs) {
    if (!p.subject || !p.object) {
      throw ContractError("build_batch: pair without detections");
    }
    layouts.push_back(make_layout(labels(p.subject->category_id),
                                  labels(p.object->category_id), vocab));
    max_len = std::max(max_len, layouts.back().length());
  }
  if (max_len > config.max_length) {
    throw ContractError("sequence length " + std::to_string(max_len) +
                        " exceeds the configured maximum " +
                        std::to_string(config.max_length));
  }

  const auto B = pairs.size();
  const auto rows = B * max_len;
  std::vector<std::int64_t> word_idx(rows, -1), image_idx(rows, -1),
      seg_idx(rows, 1);
  SequenceBatch batch;
  batch.batch_size = B;
  batch.max_length = max_len;
  batch.segment_ids.assign(rows, 1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& layout = layouts[b];
    const auto base = b * max_len;
    batch.lengths.push_back(layout.length());
    batch.mask_rows.push_back(base + layout.mask_position);
    for (std::size_t t = 0; t < max_len; ++t) {
      const auto r = base + t;
      if (t >= layout.length()) {
        word_idx[r] = static_cast<std::int64_t>(vocab.pad_id());
        continue;
      }
      seg_idx[r] = layout.segment_ids[t];
      batch.segment_ids[r] = layout.segment_ids[t];
      switch (layout.kinds[t]) {
        case TokenKind::kWord:
          word_idx[r] = layout.token_ids[t];
          break;
        case TokenKind::kSubjectImage:
          image_idx[r] = static_cast<std::int64_t>(3 * b);
          break;
        case TokenKind::kPredicateImage:
          image_idx[r] = static_cast<std::int64_t>(3 * b + 1);
          break;
        case TokenKind::kObjectImage:
          image_idx[r] = static_cast<std::int64_t>(3 * b + 2);
          break;
        case TokenKind::kPad:
          break;
      }
    }
  }

  // Three image slot rows per pair: subject, union, object.
  Tensor image_rows;
  if (config.visual_input) {
    std::vector<double> feats(3 * B * F);
    std::vector<double> geometry(3 * B * 5);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& p = pairs[b];
      const std::vector<float>* slot_feats[3] = {
          &p.subject->feature, &union_features[b], &p.object->feature};
      const BoundingBox slot_boxes[3] = {
          p.subject->bbox, union_box(p.subject->bbox, p.object->bbox),
          p.object->bbox};
      for (std::size_t s = 0; s < 3; ++s) {
        if (slot_feats[s]->size() != F) {
          throw ConfigError("region feature has length " +
                            std::to_string(slot_feats[s]->size()) +
                            ", model expects " + std::to_string(F));
        }
        std::copy(slot_feats[s]->begin(), slot_feats[s]->end(),
                  feats.begin() + (3 * b + s) * F);
        const auto g = normalized_box_geometry(slot_boxes[s], p.width, p.height);
        std::copy(g.begin(), g.end(), geometry.begin() + (3 * b + s) * 5);
      }
    }
    image_rows = ops::linear(Tensor::from({3 * B, F}, std::move(feats)),
                             w.feature_weight, w.feature_bias);
    if (config.image_position) {
      image_rows = ops::add(
          image_rows, ops::linear(Tensor::from({3 * B, 5}, std::move(geometry)),
                                  w.position_weight, w.position_bias));
    }
  } else {
    std::vector<std::int64_t> zeros(3 * B, 0);
    image_rows = ops::gather_rows(w.null_image, zeros);
  }

  Tensor sum = ops::add(ops::gather_rows(w.word, word_idx),
                        ops::gather_rows(image_rows, image_idx));
  sum = ops::add(sum, ops::gather_rows(w.segment, seg_idx));
  if (config.position_mode == PositionMode::kAbsolute) {
    Tensor table = sinusoidal_positions(max_len, D);
    std::vector<std::int64_t> pos(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      pos[r] = static_cast<std::int64_t>(r % max_len);
    }
    sum = ops::add(sum, ops::gather_rows(table, pos));
  }
  batch.embeddings =
      ops::layer_norm(sum, w.norm_gamma, w.norm_beta, config.layer_norm_eps);
  return batch;
}

}  // namespace

SequenceBatch build_batch(std::span<const PairInput> pairs,
                          const LabelTokens& labels, const Vocabulary& vocab,
                          const EmbeddingWeights& weights,
                          const ModelConfig& config) {
  std::vector<std::vector<float>> unions(pairs.size());
  if (config.visual_input) {
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      if (!pairs[b].subject || !pairs[b].object) {
        throw ContractError("build_batch: pair without detections");
      }
      for (const auto* d : {pairs[b].subject, pairs[b].object}) {
        if (d->feature.size() != config.feature_dim) {
          throw ConfigError("region feature has length " +
                            std::to_string(d->feature.size()) +
                            ", model expects " +
                            std::to_string(config.feature_dim));
        }
      }
      unions[b] = union_feature(*pairs[b].subject, *pairs[b].object);
    }
  }
  return build_core(pairs, unions, labels, vocab, weights, config);
}

SequenceInput build_sequence(const Detection& subject, const Detection& object,
                             std::span<const float> union_feature, double width,
                             double height, const LabelTokens& labels,
                             const Vocabulary& vocab,
                             const EmbeddingWeights& weights,
                             const ModelConfig& config) {
  const PairInput pair{&subject, &object, width, height};
  std::vector<std::vector<float>> unions = {
      std::vector<float>(union_feature.begin(), union_feature.end())};
  SequenceBatch batch =
      build_core(std::span(&pair, 1), unions, labels, vocab, weights, config);
  SequenceInput seq;
  seq.token_embeddings = batch.embeddings;
  seq.segment_ids = batch.segment_ids;
  seq.mask_position = batch.mask_rows[0];
  seq.length = batch.lengths[0];
  return seq;
}

SequenceBatch as_batch(const SequenceInput& seq) {
  SequenceBatch batch;
  batch.embeddings = seq.token_embeddings;
  batch.batch_size = 1;
  batch.max_length = seq.length;
  batch.lengths = {seq.length};
  if (!seq.mask_position || *seq.mask_position >= seq.length) {
    throw ContractError("sequence has no [MASK] position");
  }
  batch.mask_rows = {*seq.mask_position};
  batch.segment_ids = seq.segment_ids;
  return batch;
}

}  // namespace vrebert
