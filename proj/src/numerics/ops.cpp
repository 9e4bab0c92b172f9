#include "vrebert/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "vrebert/errors.hpp"

namespace vrebert::ops {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " +
                         shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
}

// Parent handle for grad accumulation inside a backward closure.
Tensor parent(const Tensor& out, std::size_t i) { return out.parents()[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " +
                         shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b}, [m, k, n](const Tensor& result) {
        ConstMap g(result.grad().data(), m, n);
        Tensor pa = parent(result, 0), pb = parent(result, 1);
        if (pa.requires_grad()) {
          MutMap(pa.grad_accumulator().data(), m, k).noalias() +=
              g * ConstMap(pb.data().data(), k, n).transpose();
        }
        if (pb.requires_grad()) {
          MutMap(pb.grad_accumulator().data(), k, n).noalias() +=
              ConstMap(pa.data().data(), m, k).transpose() * g;
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
  return Tensor::make_result({n, m}, std::move(out), {a},
                             [m, n](const Tensor& result) {
                               Tensor pa = parent(result, 0);
                               MutMap(pa.grad_accumulator().data(), m, n) +=
                                   ConstMap(result.grad().data(), n, m)
                                       .transpose();
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [](const Tensor& result) {
                               const auto g = result.grad();
                               for (std::size_t p = 0; p < 2; ++p) {
                                 Tensor t = parent(result, p);
                                 if (!t.requires_grad()) continue;
                                 auto acc = t.grad_accumulator();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   acc[i] += g[i];
                                 }
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return add(a, scale(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b}, [](const Tensor& result) {
        const auto g = result.grad();
        Tensor pa = parent(result, 0), pb = parent(result, 1);
        const auto x = pa.data(), y = pb.data();
        if (pa.requires_grad()) {
          auto acc = pa.grad_accumulator();
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * y[i];
        }
        if (pb.requires_grad()) {
          auto acc = pb.grad_accumulator();
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * x[i];
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [factor](const Tensor& result) {
                               Tensor pa = parent(result, 0);
                               auto acc = pa.grad_accumulator();
                               const auto g = result.grad();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 acc[i] += factor * g[i];
                               }
                             });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const auto m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match " + shape_to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  }
  return Tensor::make_result(
      {m, n}, std::move(out), {x, bias}, [m, n](const Tensor& result) {
        const auto g = result.grad();
        Tensor px = parent(result, 0), pb = parent(result, 1);
        if (px.requires_grad()) {
          auto acc = px.grad_accumulator();
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        }
        if (pb.requires_grad()) {
          auto acc = pb.grad_accumulator();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) acc[c] += g[r * n + c];
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return add_bias(matmul(x, w), bias);
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({1}, {total}, {a}, [](const Tensor& result) {
    Tensor pa = parent(result, 0);
    const double g = result.grad()[0];
    for (auto& v : pa.grad_accumulator()) v += g;
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " invalid for " + shape_to_string(shape));
  }
  // View as [outer, extent, inner].
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const auto extent = shape[axis];

  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * extent * inner + j;
      double mx = -INFINITY;
      for (std::size_t e = 0; e < extent; ++e) {
        mx = std::max(mx, in[base + e * inner]);
      }
      double total = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const double v = in[base + e * inner] == -INFINITY
                             ? 0.0
                             : std::exp(in[base + e * inner] - mx);
        out[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
    }
  }
  return Tensor::make_result(
      shape, std::move(out), {x},
      [outer, inner, extent](const Tensor& result) {
        Tensor px = parent(result, 0);
        auto acc = px.grad_accumulator();
        const auto y = result.data();
        const auto g = result.grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < inner; ++j) {
            const std::size_t base = o * extent * inner + j;
            double dot = 0.0;
            for (std::size_t e = 0; e < extent; ++e) {
              dot += y[base + e * inner] * g[base + e * inner];
            }
            for (std::size_t e = 0; e < extent; ++e) {
              const auto idx = base + e * inner;
              acc[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const auto n = x.shape().back();
  if (n < 2) {
    throw ContractError("layer_norm: last axis must have extent >= 2, got " +
                         shape_to_string(x.shape()));
  }
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: gamma/beta " +
                         shape_to_string(gamma.shape()) + " do not match " +
                         shape_to_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const auto rows = x.numel() / n;
  const auto in = x.data(), gm = gamma.data(), bt = beta.data();
  std::vector<double> out(in.size());
  // Saved for backward: normalized values and per-row inverse std.
  std::vector<double> xhat(in.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mu) * is;
      xhat[r * n + c] = h;
      out[r * n + c] = h * gm[c] + bt[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor& result) {
        const auto g = result.grad();
        Tensor px = parent(result, 0), pg = parent(result, 1),
               pb = parent(result, 2);
        const auto gm = pg.data();
        if (pg.requires_grad() || pb.requires_grad()) {
          auto gg = pg.requires_grad() ? pg.grad_accumulator()
                                       : std::span<double>{};
          auto gb = pb.requires_grad() ? pb.grad_accumulator()
                                       : std::span<double>{};
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
              const auto i = r * n + c;
              if (!gg.empty()) gg[c] += g[i] * xhat[i];
              if (!gb.empty()) gb[c] += g[i];
            }
          }
        }
        if (px.requires_grad()) {
          auto acc = px.grad_accumulator();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const auto i = r * n + c;
              const double dh = g[i] * gm[c];
              sum_dh += dh;
              sum_dh_h += dh * xhat[i];
            }
            for (std::size_t c = 0; c < n; ++c) {
              const auto i = r * n + c;
              const double dh = g[i] * gm[c];
              acc[i] += inv_std[r] *
                        (dh - inv_n * sum_dh - xhat[i] * inv_n * sum_dh_h);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = in[i] * 0.5 * std::erfc(-in[i] * std::numbers::sqrt2 / 2.0);
  }
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [](const Tensor& result) {
                               Tensor px = parent(result, 0);
                               auto acc = px.grad_accumulator();
                               const auto in = px.data();
                               const auto g = result.grad();
                               const double inv_sqrt_2pi =
                                   0.5 * std::numbers::inv_sqrtpi *
                                   std::numbers::sqrt2;
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 const double v = in[i];
                                 const double cdf =
                                     0.5 * std::erfc(-v * std::numbers::sqrt2 /
                                                     2.0);
                                 const double pdf =
                                     inv_sqrt_2pi * std::exp(-0.5 * v * v);
                                 acc[i] += g[i] * (cdf + v * pdf);
                               }
                             });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
  if (!train || p == 0.0) return x;
  if (p < 0.0 || p >= 1.0) {
    throw ContractError("dropout: p must lie in [0, 1)");
  }
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [mask = std::move(mask)](const Tensor& result) {
                               Tensor px = parent(result, 0);
                               auto acc = px.grad_accumulator();
                               const auto g = result.grad();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 acc[i] += g[i] * mask[i];
                               }
                             });
}

Tensor gather_rows(const Tensor& src, std::span<const std::int64_t> index) {
  require_rank2(src, "gather_rows");
  const auto n = src.dim(0), d = src.dim(1);
  std::vector<std::int64_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d, 0.0);
  const auto in = src.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    if (static_cast<std::size_t>(idx[r]) >= n) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) +
                           " out of range for " +
                           shape_to_string(src.shape()));
    }
    std::copy_n(in.begin() + idx[r] * d, d, out.begin() + r * d);
  }
  if (idx.empty()) {
    throw DimensionError("gather_rows: empty index");
  }
  Shape shape = {idx.size(), d};
  return Tensor::make_result(std::move(shape), std::move(out), {src},
                             [d, idx = std::move(idx)](const Tensor& result) {
                               Tensor ps = parent(result, 0);
                               auto acc = ps.grad_accumulator();
                               const auto g = result.grad();
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 if (idx[r] < 0) continue;
                                 double* dst = acc.data() + idx[r] * d;
                                 const double* from = g.data() + r * d;
                                 for (std::size_t c = 0; c < d; ++c) {
                                   dst[c] += from[c];
                                 }
                               }
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto d = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != d) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result({rows, d}, std::move(out), std::move(parents),
                             [](const Tensor& result) {
                               const auto g = result.grad();
                               std::size_t offset = 0;
                               for (Tensor p : result.parents()) {
                                 const auto n = p.numel();
                                 if (p.requires_grad()) {
                                   auto acc = p.grad_accumulator();
                                   for (std::size_t i = 0; i < n; ++i) {
                                     acc[i] += g[offset + i];
                                   }
                                 }
                                 offset += n;
                               }
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const auto m = x.dim(0), n = x.dim(1);
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto in = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(in.begin() + r * n + begin, count, out.begin() + r * count);
  }
  return Tensor::make_result(
      {m, count}, std::move(out), {x},
      [m, n, begin, count](const Tensor& result) {
        Tensor px = parent(result, 0);
        auto acc = px.grad_accumulator();
        const auto g = result.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < count; ++c) {
            acc[r * n + begin + c] += g[r * count + c];
          }
        }
      });
}

Tensor gather_elements(const Tensor& src, std::span<const std::size_t> index,
                       Shape shape) {
  if (shape_numel(shape) != index.size()) {
    throw DimensionError("gather_elements: " + std::to_string(index.size()) +
                         " indices cannot fill " + shape_to_string(shape));
  }
  const auto in = src.data();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= in.size()) {
      throw DimensionError("gather_elements: index out of range for " +
                           shape_to_string(src.shape()));
    }
    out[i] = in[idx[i]];
  }
  return Tensor::make_result(std::move(shape), std::move(out), {src},
                             [idx = std::move(idx)](const Tensor& result) {
                               Tensor ps = parent(result, 0);
                               auto acc = ps.grad_accumulator();
                               const auto g = result.grad();
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 acc[idx[i]] += g[i];
                               }
                             });
}

Tensor neg_log_clamped(const Tensor& x, double floor) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = -std::log(std::max(in[i], floor));
  }
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [floor](const Tensor& result) {
                               Tensor px = parent(result, 0);
                               auto acc = px.grad_accumulator();
                               const auto in = px.data();
                               const auto g = result.grad();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (in[i] > floor) acc[i] -= g[i] / in[i];
                               }
                             });
}

}  // namespace vrebert::ops
