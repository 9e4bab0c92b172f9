#include "vrebert/numerics/adamw.hpp"

#include <cmath>

#include "vrebert/errors.hpp"

namespace vrebert {

void AdamWOptions::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in (0, 1)");
  }
  if (!(lr >= 0.0) || !(eps >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("AdamW lr, eps and weight_decay must be >= 0");
  }
}

AdamWState::AdamWState(std::span<const Tensor> params, AdamWOptions opts)
    : options(opts) {
  options.validate();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.numel(), 0.0);
    v.emplace_back(p.numel(), 0.0);
  }
}

void adamw_step(std::span<Tensor> params, AdamWState& state) {
  if (state.m.size() != params.size()) {
    throw ContractError("adamw_step: state tracks " +
                        std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  const auto& o = state.options;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    auto p = params[k].mutable_data();
    if (m.size() != p.size()) {
      throw DimensionError("adamw_step: moment size mismatch for parameter " +
                           std::to_string(k));
    }
    const auto g = params[k].grad();
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      p[i] -= o.lr * o.weight_decay * p[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.grad_accumulator()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace vrebert
