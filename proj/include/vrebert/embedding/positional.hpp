#pragma once

#include <array>

#include "vrebert/data/records.hpp"
#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

// (x_min/W, y_min/H, x_max/W, y_max/H, area/(W*H)). Throws ContractError
// for non-positive W or H or a box outside the image.
std::array<double, 5> normalized_box_geometry(const BoundingBox& box,
                                              double width, double height);

// Projects the normalized geometry through the fully connected layer
// (weight [5 x D], bias [D]); returns [1 x D].
Tensor image_position_embedding(const BoundingBox& box, double width,
                                double height, const Tensor& weight,
                                const Tensor& bias);

// Trainable offset vectors w_d for d in [-clip, clip]. With per-head
// sharing the rows of head h occupy [h*(2k+1), (h+1)*(2k+1)).
struct RelativePositionTable {
  Tensor weights;  // [(2k+1) * heads_in_table x d_z]
  std::size_t clip = 8;

  std::size_t span() const { return 2 * clip + 1; }
  // Row of w_{clamp(j - i)} for `head` (0 unless the table is per-head).
  std::size_t row(std::size_t i, std::size_t j, std::size_t head = 0) const;
};

// a_ij = w_{clamp(j - i, -k, k)} as a [1 x d_z] tensor.
Tensor relative_position_lookup(std::size_t i, std::size_t j,
                                const RelativePositionTable& table,
                                std::size_t head = 0);

// Standard sin/cos absolute encoding, [max_len x dim], constant.
Tensor sinusoidal_positions(std::size_t max_len, std::size_t dim);

}  // namespace vrebert
