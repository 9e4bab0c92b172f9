#pragma once

#include <span>

#include "vrebert/embedding/positional.hpp"
#include "vrebert/numerics/rng.hpp"
#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

// Relative-position attention logits for one head of one sequence:
//
//   Attn_ij = [ q_i . k_j + q_i . a_ij + k_j . a_ij ] / sqrt(d_z)
//
// with q = X W^Q, k = X W^K restricted to the head's d_z columns and a_ij
// from relative_position_lookup. A null table gives plain scaled
// dot-product logits. Returns [L x L] before softmax; differentiable.
Tensor rel_attention_scores(const Tensor& x, const Tensor& w_query,
                            const Tensor& w_key,
                            const RelativePositionTable* table,
                            std::size_t head, std::size_t num_heads);

struct AttentionShape {
  std::size_t batch_size = 0;
  std::size_t max_length = 0;
  std::span<const std::size_t> lengths;  // keys at j >= length are masked
  std::size_t num_heads = 1;
};

// Fused multi-head attention over a padded batch. q, k, v are
// [B * max_length x D]; the relative term uses the same logits as
// rel_attention_scores. Masked keys receive -inf before the softmax and
// dropout is applied to the attention weights. Returns the concatenated
// per-head context, [B * max_length x D].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const RelativePositionTable* table,
                            const AttentionShape& shape, double dropout,
                            Rng* rng, bool train);

}  // namespace vrebert
