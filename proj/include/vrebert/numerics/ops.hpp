#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vrebert/numerics/rng.hpp"
#include "vrebert/numerics/tensor.hpp"

// Differentiable tensor operations. All 2-D operations use row-major
// [rows x cols] layout.
namespace vrebert::ops {

// a[m x k] * b[k x n]. Throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x * w + bias for x[m x in], w[in x out], bias[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis; gamma and beta have the last-axis extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// x * Phi(x) with the exact normal CDF.
Tensor gelu(const Tensor& x);
// Inverted dropout. Identity when !train or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);

// out[r] = src[index[r]] for src[n x d]; index -1 yields a zero row.
Tensor gather_rows(const Tensor& src, std::span<const std::int64_t> index);
// Stacks 2-D tensors with equal column counts.
Tensor concat_rows(std::span<const Tensor> parts);
// Columns [begin, begin + count) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
// out.flat[i] = src.flat[index[i]], reshaped to `shape`.
Tensor gather_elements(const Tensor& src, std::span<const std::size_t> index,
                       Shape shape);

// -log(max(x, floor)) elementwise; zero gradient where clamped.
Tensor neg_log_clamped(const Tensor& x, double floor = 1e-12);

}  // namespace vrebert::ops
