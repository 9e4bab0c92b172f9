#include "vrebert/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/rng.hpp"

namespace vrebert {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const double value = loss().item();
  if (!std::isfinite(value)) {
    throw ContractError("finite_diff_check: loss is not finite");
  }
  return value;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss,
                                  std::span<Tensor> params,
                                  const GradCheckOptions& options) {
  if (!(options.h > 0.0)) {
    throw ContractError("finite_diff_check: h must be positive");
  }
  for (auto& p : params) p.zero_grad();
  Tensor value = loss();
  if (!std::isfinite(value.item())) {
    throw ContractError("finite_diff_check: loss is not finite");
  }
  value.backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].numel(); ++i) coords.emplace_back(k, i);
  }
  if (options.max_samples != 0 && coords.size() > options.max_samples) {
    Rng rng(options.seed);
    rng.shuffle(coords);
    coords.resize(options.max_samples);
  }

  GradCheckResult result;
  for (auto [k, i] : coords) {
    auto data = params[k].mutable_data();
    const double original = data[i];
    data[i] = original + options.h;
    const double plus = evaluate(loss);
    data[i] = original - options.h;
    const double minus = evaluate(loss);
    data[i] = original;
    const double numeric = (plus - minus) / (2.0 * options.h);
    const auto grad = params[k].grad();
    const double analytic = grad.empty() ? 0.0 : grad[i];
    const double err =
        std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace vrebert
