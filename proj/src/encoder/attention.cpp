#include "vrebert/encoder/attention.hpp"

#include <cmath>
#include <vector>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/ops.hpp"

namespace vrebert {

namespace {

// Head index inside the table: per-head tables stack one block per head.
std::size_t table_head(const RelativePositionTable& table, std::size_t head,
                       std::size_t num_heads) {
  const auto rows = table.weights.dim(0);
  if (rows == table.span()) return 0;
  if (rows == table.span() * num_heads) return head;
  throw DimensionError("relative table " +
                       shape_to_string(table.weights.shape()) +
                       " fits neither one head block nor " +
                       std::to_string(num_heads));
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Tensor rel_attention_scores(const Tensor& x, const Tensor& w_query,
                            const Tensor& w_key,
                            const RelativePositionTable* table,
                            std::size_t head, std::size_t num_heads) {
  if (x.rank() != 2 || w_query.rank() != 2 || w_key.rank() != 2 ||
      w_query.dim(0) != x.dim(1) || w_key.shape() != w_query.shape()) {
    throw DimensionError("rel_attention_scores: X " +
                         shape_to_string(x.shape()) + ", W^Q " +
                         shape_to_string(w_query.shape()) + ", W^K " +
                         shape_to_string(w_key.shape()));
  }
  const auto D = w_query.dim(1);
  if (num_heads == 0 || D % num_heads != 0 || head >= num_heads) {
    throw DimensionError("rel_attention_scores: head " + std::to_string(head) +
                         " of " + std::to_string(num_heads) +
                         " does not split width " + std::to_string(D));
  }
  const auto dz = D / num_heads;
  const auto L = x.dim(0);
  Tensor q = ops::slice_cols(ops::matmul(x, w_query), head * dz, dz);
  Tensor k = ops::slice_cols(ops::matmul(x, w_key), head * dz, dz);
  Tensor scores = ops::matmul(q, ops::transpose(k));
  if (table) {
    if (table->weights.dim(1) != dz) {
      throw DimensionError("relative table width " +
                           std::to_string(table->weights.dim(1)) +
                           " does not match head dim " + std::to_string(dz));
    }
    const auto th = table_head(*table, head, num_heads);
    const auto span = table->span();
    std::vector<std::int64_t> rows(span);
    for (std::size_t r = 0; r < span; ++r) {
      rows[r] = static_cast<std::int64_t>(th * span + r);
    }
    Tensor w_t = ops::transpose(ops::gather_rows(table->weights, rows));
    // [L x span] projections of queries and keys onto every offset vector.
    Tensor q_rel = ops::matmul(q, w_t);
    Tensor k_rel = ops::matmul(k, w_t);
    std::vector<std::size_t> q_idx(L * L), k_idx(L * L);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        const auto off = table->row(i, j, 0);
        q_idx[i * L + j] = i * span + off;
        k_idx[i * L + j] = j * span + off;
      }
    }
    scores = ops::add(scores, ops::gather_elements(q_rel, q_idx, {L, L}));
    scores = ops::add(scores, ops::gather_elements(k_rel, k_idx, {L, L}));
  }
  return ops::scale(scores, 1.0 / std::sqrt(static_cast<double>(dz)));
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const RelativePositionTable* table,
                            const AttentionShape& shape, double dropout,
                            Rng* rng, bool train) {
  const auto B = shape.batch_size, L = shape.max_length, H = shape.num_heads;
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() ||
      q.dim(0) != B * L || shape.lengths.size() != B || H == 0 ||
      q.dim(1) % H != 0) {
    throw DimensionError("multi_head_attention: q " +
                         shape_to_string(q.shape()) + ", k " +
                         shape_to_string(k.shape()) + ", v " +
                         shape_to_string(v.shape()) + " for batch " +
                         std::to_string(B) + " x " + std::to_string(L));
  }
  const auto D = q.dim(1);
  const auto dz = D / H;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dz));
  const bool use_dropout = train && dropout > 0.0;
  if (use_dropout && !rng) {
    throw ContractError("multi_head_attention: dropout needs an rng");
  }
  std::vector<std::size_t> lengths(shape.lengths.begin(), shape.lengths.end());
  for (auto len : lengths) {
    if (len == 0 || len > L) {
      throw DimensionError("multi_head_attention: sequence length out of range");
    }
  }

  std::vector<std::size_t> head_base(H, 0);
  if (table) {
    if (table->weights.dim(1) != dz) {
      throw DimensionError("relative table width does not match head dim");
    }
    for (std::size_t h = 0; h < H; ++h) {
      head_base[h] = table_head(*table, h, H) * table->span();
    }
  }
  const std::size_t clip = table ? table->clip : 0;
  auto rel_row = [clip](std::size_t i, std::size_t j) {
    const long kk = static_cast<long>(clip);
    long off = static_cast<long>(j) - static_cast<long>(i);
    off = off < -kk ? -kk : (off > kk ? kk : off);
    return static_cast<std::size_t>(off + kk);
  };

  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  const double* W = table ? table->weights.data().data() : nullptr;

  std::vector<double> probs(B * H * L * L, 0.0);
  std::vector<double> mask;
  if (use_dropout) mask.assign(probs.size(), 0.0);
  const double keep = use_dropout ? 1.0 / (1.0 - dropout) : 1.0;
  std::vector<double> out(B * L * D, 0.0);
  std::vector<double> row(L);

  for (std::size_t b = 0; b < B; ++b) {
    const auto len = lengths[b];
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        const double* qi = Q + (b * L + i) * D + h * dz;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = K + (b * L + j) * D + h * dz;
          double s = dot(qi, kj, dz);
          if (W) {
            const double* w = W + (head_base[h] + rel_row(i, j)) * dz;
            s += dot(qi, w, dz) + dot(kj, w, dz);
          }
          row[j] = s * inv;
          mx = std::max(mx, row[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        double* p = probs.data() + ((b * H + h) * L + i) * L;
        double* m = use_dropout ? mask.data() + ((b * H + h) * L + i) * L : nullptr;
        double* oi = out.data() + (b * L + i) * D + h * dz;
        for (std::size_t j = 0; j < len; ++j) {
          p[j] = row[j] / total;
          double a = p[j];
          if (m) {
            m[j] = rng->uniform() < dropout ? 0.0 : keep;
            a *= m[j];
          }
          const double* vj = V + (b * L + j) * D + h * dz;
          for (std::size_t c = 0; c < dz; ++c) oi[c] += a * vj[c];
        }
      }
    }
  }

  std::vector<Tensor> parents = {q, k, v};
  if (table) parents.push_back(table->weights);
  return Tensor::make_result(
      {B * L, D}, std::move(out), std::move(parents),
      [=, lengths = std::move(lengths), probs = std::move(probs),
       mask = std::move(mask), head_base = std::move(head_base)](
          const Tensor& result) {
        Tensor pq = result.parents()[0], pk = result.parents()[1],
               pv = result.parents()[2];
        Tensor pw = W ? result.parents()[3] : Tensor{};
        const double* G = result.grad().data();
        const double* Q = pq.data().data();
        const double* K = pk.data().data();
        const double* V = pv.data().data();
        const double* Wt = W ? pw.data().data() : nullptr;
        double* dQ = pq.requires_grad() ? pq.grad_accumulator().data() : nullptr;
        double* dK = pk.requires_grad() ? pk.grad_accumulator().data() : nullptr;
        double* dV = pv.requires_grad() ? pv.grad_accumulator().data() : nullptr;
        double* dW = (Wt && pw.requires_grad()) ? pw.grad_accumulator().data()
                                                : nullptr;
        std::vector<double> dp(L);
        for (std::size_t b = 0; b < B; ++b) {
          const auto len = lengths[b];
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < L; ++i) {
              const double* gi = G + (b * L + i) * D + h * dz;
              const double* p = probs.data() + ((b * H + h) * L + i) * L;
              const double* m =
                  mask.empty() ? nullptr : mask.data() + ((b * H + h) * L + i) * L;
              double weighted = 0.0;
              for (std::size_t j = 0; j < len; ++j) {
                const double* vj = V + (b * L + j) * D + h * dz;
                const double mj = m ? m[j] : 1.0;
                if (dV) {
                  double* dvj = dV + (b * L + j) * D + h * dz;
                  const double a = p[j] * mj;
                  for (std::size_t c = 0; c < dz; ++c) dvj[c] += a * gi[c];
                }
                dp[j] = dot(gi, vj, dz) * mj;
                weighted += p[j] * dp[j];
              }
              const double* qi = Q + (b * L + i) * D + h * dz;
              double* dqi = dQ ? dQ + (b * L + i) * D + h * dz : nullptr;
              for (std::size_t j = 0; j < len; ++j) {
                const double ds = p[j] * (dp[j] - weighted) * inv;
                if (ds == 0.0) continue;
                const double* kj = K + (b * L + j) * D + h * dz;
                const double* w =
                    Wt ? Wt + (head_base[h] + rel_row(i, j)) * dz : nullptr;
                if (dqi) {
                  for (std::size_t c = 0; c < dz; ++c) {
                    dqi[c] += ds * (kj[c] + (w ? w[c] : 0.0));
                  }
                }
                if (dK) {
                  double* dkj = dK + (b * L + j) * D + h * dz;
                  for (std::size_t c = 0; c < dz; ++c) {
                    dkj[c] += ds * (qi[c] + (w ? w[c] : 0.0));
                  }
                }
                if (dW) {
                  double* dw = dW + (head_base[h] + rel_row(i, j)) * dz;
                  for (std::size_t c = 0; c < dz; ++c) {
                    dw[c] += ds * (qi[c] + kj[c]);
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace vrebert
