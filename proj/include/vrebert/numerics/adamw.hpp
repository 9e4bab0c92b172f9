#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct AdamWState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  AdamWOptions options;

  AdamWState() = default;
  AdamWState(std::span<const Tensor> params, AdamWOptions opts);
};

// One AdamW update of every parameter from its accumulated grad (a missing
// grad counts as zero). Weight decay is applied to the parameter directly,
// separately from the moment estimates.
void adamw_step(std::span<Tensor> params, AdamWState& state);

// Rescales all grads so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

void zero_grads(std::span<Tensor> params);

}  // namespace vrebert
