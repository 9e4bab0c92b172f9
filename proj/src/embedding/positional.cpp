#include "vrebert/embedding/positional.hpp"

#include <algorithm>
#include <cmath>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/ops.hpp"

namespace vrebert {

std::array<double, 5> normalized_box_geometry(const BoundingBox& box,
                                              double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw ContractError("image size must be positive, got " +
                        std::to_string(width) + "x" + std::to_string(height));
  }
  if (!(box.x_min >= 0.0 && box.y_min >= 0.0 && box.x_min <= box.x_max &&
        box.y_min <= box.y_max && box.x_max <= width && box.y_max <= height)) {
    throw ContractError("bounding box lies outside the image");
  }
  return {box.x_min / width, box.y_min / height, box.x_max / width,
          box.y_max / height,
          ((box.x_max - box.x_min) * (box.y_max - box.y_min)) /
              (width * height)};
}

Tensor image_position_embedding(const BoundingBox& box, double width,
                                double height, const Tensor& weight,
                                const Tensor& bias) {
  const auto g = normalized_box_geometry(box, width, height);
  Tensor geometry = Tensor::from({1, 5}, {g.begin(), g.end()});
  return ops::linear(geometry, weight, bias);
}

std::size_t RelativePositionTable::row(std::size_t i, std::size_t j,
                                       std::size_t head) const {
  const auto k = static_cast<long>(clip);
  const long offset =
      std::clamp(static_cast<long>(j) - static_cast<long>(i), -k, k);
  return head * span() + static_cast<std::size_t>(offset + k);
}

Tensor relative_position_lookup(std::size_t i, std::size_t j,
                                const RelativePositionTable& table,
                                std::size_t head) {
  const std::int64_t r = static_cast<std::int64_t>(table.row(i, j, head));
  return ops::gather_rows(table.weights, std::span(&r, 1));
}

Tensor sinusoidal_positions(std::size_t max_len, std::size_t dim) {
  std::vector<double> values(max_len * dim);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, static_cast<double>(2 * (i / 2)) /
                                static_cast<double>(dim));
      const double angle = static_cast<double>(pos) / rate;
      values[pos * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({max_len, dim}, std::move(values));
}

}  // namespace vrebert
