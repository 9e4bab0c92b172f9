#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

struct GradCheckOptions {
  double h = 1e-5;
  // Coordinates sampled across all parameters; 0 checks every coordinate.
  std::size_t max_samples = 200;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares backward() gradients of the scalar `loss` against central
// differences. The error per coordinate is |analytic - numeric| /
// max(1, |numeric|). `loss` must be deterministic; it is evaluated with
// graph recording both on (once) and off (per perturbation).
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss,
                                  std::span<Tensor> params,
                                  const GradCheckOptions& options = {});

}  // namespace vrebert
