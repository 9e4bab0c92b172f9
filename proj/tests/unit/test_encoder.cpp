#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "vrebert/encoder/attention.hpp"
#include "vrebert/encoder/model.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/gradcheck.hpp"
#include "vrebert/numerics/ops.hpp"

using namespace vrebert;

namespace {

Tensor random(Rng& rng, Shape s, double scale = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(s), std::move(v));
}

// Literal three-term evaluation, one logit at a time.
std::vector<double> oracle_scores(const Tensor& x, const Tensor& wq, const Tensor& wk,
                                  const RelativePositionTable* table, std::size_t head,
                                  std::size_t heads) {
  const std::size_t L = x.dim(0), Din = x.dim(1), D = wq.dim(1), dz = D / heads;
  auto proj = [&](const Tensor& w, std::size_t i, std::size_t c) {
    double s = 0.0;
    for (std::size_t r = 0; r < Din; ++r) s += x.at(i, r) * w.at(r, head * dz + c);
    return s;
  };
  std::vector<double> out(L * L);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      double qk = 0.0, qa = 0.0, ka = 0.0;
      for (std::size_t c = 0; c < dz; ++c) {
        const double qi = proj(wq, i, c), kj = proj(wk, j, c);
        qk += qi * kj;
        if (table) {
          long off = static_cast<long>(j) - static_cast<long>(i);
          const long k = static_cast<long>(table->clip);
          off = std::max(-k, std::min(k, off));
          const std::size_t base = table->weights.dim(0) == table->span() ? 0 : head * table->span();
          const double a = table->weights.at(base + static_cast<std::size_t>(off + k), c);
          qa += qi * a;
          ka += kj * a;
        }
      }
      out[i * L + j] = (qk + qa + ka) / std::sqrt(static_cast<double>(dz));
    }
  }
  return out;
}

CategoryVocab small_categories() {
  return {{"person", "hat", "traffic light", "table"}, {"above", "below", "wears", "next to"}};
}

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.hidden_dim = 16;
  c.num_heads = 2;
  c.num_layers = 2;
  c.ff_dim = 24;
  c.feature_dim = 4;
  c.relative_clip = 3;
  return c;
}

struct Fixture {
  CategoryVocab categories = small_categories();
  Vocabulary vocab = Vocabulary::for_categories(categories);
  std::vector<Detection> dets = {
      {{10, 10, 40, 60}, 0, 0.9, {0.1f, 0.2f, 0.3f, -0.4f}},
      {{30, 5, 80, 20}, 1, 0.8, {0.5f, -0.1f, 0.0f, 0.7f}},
      {{0, 0, 25, 15}, 2, 0.7, {0.0f, 0.9f, 1.0f, 0.2f}},
  };
  std::vector<PairInput> pairs() const {
    return {{&dets[0], &dets[1], 100, 100}, {&dets[2], &dets[0], 100, 100},
            {&dets[1], &dets[2], 100, 100}};
  }
};

}  // namespace

TEST(Config, PresetsAndValidation) {
  const auto d = ModelConfig::desk();
  EXPECT_EQ(d.hidden_dim, 64u);
  EXPECT_EQ(d.num_heads, 4u);
  EXPECT_EQ(d.num_layers, 2u);
  EXPECT_EQ(d.ff_dim, 128u);
  EXPECT_EQ(d.relative_clip, 8u);
  EXPECT_DOUBLE_EQ(d.dropout, 0.1);
  const auto p = ModelConfig::paper();
  EXPECT_EQ(p.hidden_dim, 768u);
  EXPECT_EQ(p.num_heads, 12u);
  EXPECT_EQ(p.num_layers, 12u);
  EXPECT_EQ(p.head_dim(), 64u);

  auto bad = d;
  bad.num_heads = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.num_predicates = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndFingerprint) {
  auto c = tiny_config();
  c.position_mode = PositionMode::kAbsolute;
  c.relative_sharing = RelativeSharing::kPerHead;
  c.freeze_feature_projection = true;
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_EQ(c.fingerprint().size(), 16u);
  auto other = c;
  other.dropout = 0.2;
  EXPECT_NE(other.fingerprint(), c.fingerprint());
}

TEST(Attention, MatchesStraightLineOracle) {
  Rng rng(11);
  for (std::size_t heads : {1u, 2u}) {
    for (std::size_t L : {1u, 3u, 6u}) {
      Tensor x = random(rng, {L, 8});
      Tensor wq = random(rng, {8, 8}, 0.3), wk = random(rng, {8, 8}, 0.3);
      RelativePositionTable shared{random(rng, {5, 8 / heads}), 2};
      RelativePositionTable per_head{random(rng, {5 * heads, 8 / heads}), 2};
      for (const RelativePositionTable* t : {static_cast<RelativePositionTable*>(nullptr), &shared, &per_head}) {
        for (std::size_t h = 0; h < heads; ++h) {
          const auto got = rel_attention_scores(x, wq, wk, t, h, heads);
          const auto want = oracle_scores(x, wq, wk, t, h, heads);
          ASSERT_EQ(got.shape(), (Shape{L, L}));
          for (std::size_t e = 0; e < L * L; ++e) {
            EXPECT_NEAR(got.data()[e], want[e], 1e-12 * (1.0 + std::abs(want[e])));
          }
        }
      }
    }
  }
}

TEST(Attention, ZeroTableEqualsDotProduct) {
  Rng rng(12);
  Tensor x = random(rng, {5, 8}), wq = random(rng, {8, 8}), wk = random(rng, {8, 8});
  RelativePositionTable zero{Tensor::zeros({17, 4}), 8};
  for (std::size_t h = 0; h < 2; ++h) {
    const auto a = rel_attention_scores(x, wq, wk, &zero, h, 2);
    const auto b = rel_attention_scores(x, wq, wk, nullptr, h, 2);
    for (std::size_t e = 0; e < 25; ++e) EXPECT_EQ(a.data()[e], b.data()[e]);
  }
}

TEST(Attention, SingleTokenWeightIsOne) {
  Rng rng(13);
  Tensor x = random(rng, {1, 4}), wq = random(rng, {4, 4}), wk = random(rng, {4, 4});
  RelativePositionTable t{random(rng, {17, 4}), 8};
  const auto p = ops::softmax(rel_attention_scores(x, wq, wk, &t, 0, 1), 1);
  EXPECT_EQ(p.item(), 1.0);
}

TEST(Attention, ShapeErrors) {
  Rng rng(14);
  Tensor x = random(rng, {3, 4});
  EXPECT_THROW(rel_attention_scores(x, random(rng, {5, 4}), random(rng, {5, 4}), nullptr, 0, 1),
               DimensionError);
  EXPECT_THROW(rel_attention_scores(x, random(rng, {4, 4}), random(rng, {4, 6}), nullptr, 0, 1),
               DimensionError);
  EXPECT_THROW(rel_attention_scores(x, random(rng, {4, 4}), random(rng, {4, 4}), nullptr, 0, 3),
               DimensionError);
  RelativePositionTable t{random(rng, {17, 3}), 8};
  EXPECT_THROW(rel_attention_scores(x, random(rng, {4, 4}), random(rng, {4, 4}), &t, 0, 2),
               DimensionError);
}

TEST(Attention, RowsSumToOneAndPermuteWithKeys) {
  Rng rng(15);
  Tensor x = random(rng, {4, 6}), wq = random(rng, {6, 6}), wk = random(rng, {6, 6});
  const auto p = ops::softmax(rel_attention_scores(x, wq, wk, nullptr, 0, 1), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += p.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  const std::vector<std::int64_t> perm = {2, 0, 3, 1};
  const auto ps = ops::softmax(rel_attention_scores(ops::gather_rows(x, perm), wq, wk, nullptr, 0, 1), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(ps.at(i, j), p.at(perm[i], perm[j]), 1e-14);
    }
  }
}

TEST(Attention, FusedMatchesComposedHeads) {
  Rng rng(16);
  const std::size_t L = 5, D = 8, H = 2, dz = D / H;
  Tensor x = random(rng, {L, D}), wq = random(rng, {D, D}, 0.4), wk = random(rng, {D, D}, 0.4),
         wv = random(rng, {D, D}, 0.4);
  RelativePositionTable t{random(rng, {7 * H, dz}), 3};
  const std::vector<std::size_t> lengths = {L};
  AttentionShape shape{1, L, lengths, H};
  const auto fused = multi_head_attention(ops::matmul(x, wq), ops::matmul(x, wk), ops::matmul(x, wv),
                                          &t, shape, 0.0, nullptr, false);
  for (std::size_t h = 0; h < H; ++h) {
    const auto p = ops::softmax(rel_attention_scores(x, wq, wk, &t, h, H), 1);
    const auto ctx = ops::matmul(p, ops::slice_cols(ops::matmul(x, wv), h * dz, dz));
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t c = 0; c < dz; ++c) {
        EXPECT_NEAR(fused.at(i, h * dz + c), ctx.at(i, c), 1e-12);
      }
    }
  }
}

TEST(Attention, FusedBackwardMatchesFiniteDifferences) {
  Rng rng(17);
  const std::size_t B = 2, L = 4, D = 6, H = 2;
  Tensor q = random(rng, {B * L, D}), k = random(rng, {B * L, D}), v = random(rng, {B * L, D});
  RelativePositionTable t{random(rng, {5 * H, D / H}), 2};
  for (auto* p : {&q, &k, &v, &t.weights}) p->set_requires_grad(true);
  const std::vector<std::size_t> lengths = {4, 3};
  Tensor proj = random(rng, {D, 1});
  auto loss = [&] {
    AttentionShape shape{B, L, lengths, H};
    return ops::sum(ops::matmul(multi_head_attention(q, k, v, &t, shape, 0.0, nullptr, false), proj));
  };
  std::vector<Tensor> params = {q, k, v, t.weights};
  const auto r = finite_diff_check(loss, params, {1e-5, 0, 3});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Attention, PaddedKeysAreIgnored) {
  Rng rng(18);
  const std::size_t L = 5, D = 4;
  Tensor q = random(rng, {L, D}), k = random(rng, {L, D}), v = random(rng, {L, D});
  const std::vector<std::size_t> lengths = {3};
  AttentionShape shape{1, L, lengths, 1};
  const auto a = multi_head_attention(q, k, v, nullptr, shape, 0.0, nullptr, false);
  auto k2 = k.clone(), v2 = v.clone();
  for (std::size_t e = 3 * D; e < L * D; ++e) {
    k2.mutable_data()[e] = 100.0;
    v2.mutable_data()[e] = -7.0;
  }
  const auto b = multi_head_attention(q, k2, v2, nullptr, shape, 0.0, nullptr, false);
  for (std::size_t e = 0; e < 3 * D; ++e) EXPECT_EQ(a.data()[e], b.data()[e]);
}

TEST(Encoder, ZeroLayersReturnEmbeddings) {
  Fixture f;
  auto c = tiny_config();
  c.num_layers = 0;
  Model m(c, f.vocab, f.categories, 1);
  const auto pairs = f.pairs();
  const auto batch = m.embed(pairs);
  const auto h = encoder_forward(batch, m.weights(), m.config(), false, nullptr);
  ASSERT_EQ(h.shape(), batch.embeddings.shape());
  for (std::size_t e = 0; e < h.numel(); ++e) EXPECT_EQ(h.data()[e], batch.embeddings.data()[e]);
}

TEST(Encoder, InferenceIsDeterministicAndTrainingIsNot) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 2);
  const auto pairs = f.pairs();
  const auto batch = m.embed(pairs);
  const auto a = encoder_forward(batch, m.weights(), m.config(), false, nullptr);
  const auto b = encoder_forward(batch, m.weights(), m.config(), false, nullptr);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  Rng rng(5);
  const auto t = encoder_forward(batch, m.weights(), m.config(), true, &rng);
  EXPECT_FALSE(std::equal(a.data().begin(), a.data().end(), t.data().begin()));
  EXPECT_THROW(encoder_forward(batch, m.weights(), m.config(), true, nullptr), ContractError);
}

TEST(Encoder, OverlongSequenceIsRejected) {
  Fixture f;
  auto c = tiny_config();
  c.max_length = 9;  // the traffic light pair needs 10
  Model m(c, f.vocab, f.categories, 2);
  const auto pairs = f.pairs();
  EXPECT_THROW(m.predict(pairs), ContractError);
}

TEST(Encoder, GradientOfHiddenStatesWrtQuery) {
  Fixture f;
  auto c = tiny_config();
  c.dropout = 0.0;
  Model m(c, f.vocab, f.categories, 3);
  const auto pairs = f.pairs();
  Rng rng(4);
  Tensor proj = random(rng, {c.hidden_dim, 1});
  auto loss = [&] {
    return ops::sum(ops::matmul(encoder_forward(m.embed(pairs), m.weights(), m.config(), false, nullptr), proj));
  };
  std::vector<Tensor> params = {m.weights().layers[0].query, m.weights().layers[1].query};
  const auto r = finite_diff_check(loss, params, {1e-5, 0, 1});
  EXPECT_EQ(r.coordinates_checked, 2 * 16u * 16u);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Encoder, FullModelCrossEntropyGradient) {
  Fixture f;
  for (auto mode : {PositionMode::kRelative, PositionMode::kAbsolute}) {
    auto c = tiny_config();
    c.dropout = 0.0;
    c.position_mode = mode;
    Model m(c, f.vocab, f.categories, 4);
    const auto pairs = f.pairs();
    const std::vector<std::size_t> targets = {0, 2, 3};
    auto loss = [&] {
      Tensor p = m.probabilities(pairs, false, nullptr);
      return ops::mean(ops::neg_log_clamped(ops::gather_elements(
          p, std::vector<std::size_t>{targets[0], 4 + targets[1], 8 + targets[2]}, {3})));
    };
    auto params = m.trainable_parameters();
    const auto r = finite_diff_check(loss, params, {1e-5, 400, 9});
    EXPECT_GE(r.coordinates_checked, 200u);
    EXPECT_LT(r.max_relative_error, 1e-4) << to_string(mode);
  }
}

TEST(Encoder, PadContentsDoNotLeak) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 5);
  // traffic light has two word pieces, so the other two sequences are padded.
  const auto pairs = f.pairs();
  auto batch = m.embed(pairs);
  ASSERT_LT(batch.lengths[0], batch.max_length);
  const auto ref = predicate_probabilities(batch, m.weights(), m.config(), false, nullptr);
  auto emb = batch.embeddings.clone();
  const auto D = m.config().hidden_dim;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    for (std::size_t r = batch.lengths[b]; r < batch.max_length; ++r) {
      for (std::size_t d = 0; d < D; ++d) emb.mutable_data()[(b * batch.max_length + r) * D + d] = 3.0 + d;
    }
  }
  batch.embeddings = emb;
  const auto got = predicate_probabilities(batch, m.weights(), m.config(), false, nullptr);
  for (std::size_t e = 0; e < ref.numel(); ++e) EXPECT_EQ(got.data()[e], ref.data()[e]);
}

TEST(Encoder, BatchedMatchesSingleSequence) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 6);
  const auto pairs = f.pairs();
  const auto all = m.predict(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto one = m.predict(std::span<const PairInput>(&pairs[i], 1));
    for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(all[i][p], one[0][p], 1e-13);
  }
}

TEST(MaskedPredict, DistributionProperties) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 7);
  const auto& d = f.dets;
  const auto seq = build_sequence(d[0], d[1], union_feature(d[0], d[1]), 100, 100, m.labels(),
                                  m.vocab(), m.weights().embedding, m.config());
  const auto dist = masked_predict(seq, m.weights(), m.config());
  ASSERT_EQ(dist.size(), 4u);
  EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-12);
  const auto batched = m.predict(std::vector<PairInput>{{&d[0], &d[1], 100, 100}});
  for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(dist[p], batched[0][p], 1e-13);

  auto no_mask = seq;
  no_mask.mask_position.reset();
  EXPECT_THROW(masked_predict(no_mask, m.weights(), m.config()), ContractError);

  for (auto* t : {&m.weights().head, &m.weights().head_bias}) {
    for (auto& v : t->mutable_data()) v = 0.0;
  }
  for (double p : masked_predict(seq, m.weights(), m.config())) EXPECT_EQ(p, 0.25);
}

TEST(MaskedPredict, SeventyPredicates) {
  CategoryVocab cats{{"person", "hat"}, {}};
  for (int p = 0; p < 70; ++p) cats.predicates.push_back("pred" + std::to_string(p));
  const auto vocab = Vocabulary::for_categories(cats);
  auto c = tiny_config();
  Model m(c, vocab, cats, 1);
  EXPECT_EQ(m.config().num_predicates, 70u);
  Detection a{{0, 0, 10, 10}, 0, 1.0, {0, 0, 0, 0}}, b{{5, 5, 20, 20}, 1, 1.0, {1, 1, 1, 1}};
  const auto d = m.predict(std::vector<PairInput>{{&a, &b, 50, 50}});
  EXPECT_EQ(d[0].size(), 70u);
  EXPECT_NEAR(std::accumulate(d[0].begin(), d[0].end(), 0.0), 1.0, 1e-12);
}

TEST(ModelTest, InitializationIsSeeded) {
  Fixture f;
  Model a(tiny_config(), f.vocab, f.categories, 9), b(tiny_config(), f.vocab, f.categories, 9),
      c(tiny_config(), f.vocab, f.categories, 10);
  const auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                           pb[i].tensor.data().begin()));
    any_diff |= !std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                            pc[i].tensor.data().begin());
  }
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(a.weights().layers[0].attn_gamma.data()[0], 1.0);
  EXPECT_EQ(a.weights().head_bias.data()[0], 0.0);
}

TEST(ModelTest, RelativeTableSharing) {
  Fixture f;
  auto c = tiny_config();
  c.relative_sharing = RelativeSharing::kShared;
  Model shared(c, f.vocab, f.categories, 1);
  EXPECT_TRUE(shared.weights().layers[0].relative.weights.same_storage(
      shared.weights().layers[1].relative.weights));
  c.relative_sharing = RelativeSharing::kPerLayer;
  Model per_layer(c, f.vocab, f.categories, 1);
  EXPECT_FALSE(per_layer.weights().layers[0].relative.weights.same_storage(
      per_layer.weights().layers[1].relative.weights));
  EXPECT_EQ(per_layer.weights().layers[0].relative.weights.shape(), (Shape{7, 8}));
  c.relative_sharing = RelativeSharing::kPerHead;
  Model per_head(c, f.vocab, f.categories, 1);
  EXPECT_EQ(per_head.weights().layers[0].relative.weights.shape(), (Shape{14, 8}));
  c.position_mode = PositionMode::kAbsolute;
  Model absolute(c, f.vocab, f.categories, 1);
  EXPECT_FALSE(absolute.weights().layers[0].relative.weights.defined());
}

TEST(ModelTest, FrozenFeatureProjectionIsNotTrainable) {
  Fixture f;
  auto c = tiny_config();
  Model free(c, f.vocab, f.categories, 1);
  c.freeze_feature_projection = true;
  Model frozen(c, f.vocab, f.categories, 1);
  EXPECT_EQ(frozen.trainable_parameters().size() + 2, free.trainable_parameters().size());
  EXPECT_FALSE(frozen.weights().embedding.feature_weight.requires_grad());
}

TEST(ModelTest, SnapshotRoundTripIsBitIdentical) {
  Fixture f;
  auto c = tiny_config();
  c.relative_sharing = RelativeSharing::kPerHead;
  Model m(c, f.vocab, f.categories, 8);
  const auto path = std::filesystem::temp_directory_path() / "vrebert_model_test.snap";
  m.save(path);
  const auto back = Model::load(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.categories(), m.categories());
  EXPECT_EQ(back.serialize(), m.serialize());
  const auto pairs = f.pairs();
  const auto a = m.predict(pairs), b = back.predict(pairs), cl = m.clone().predict(pairs);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, cl);
  std::filesystem::remove(path);

  auto bytes = m.serialize();
  bytes[0] = 'X';
  EXPECT_THROW(Model::deserialize(bytes), FormatError);
}

TEST(ModelTest, CloneDoesNotAlias) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 8);
  auto copy = m.clone();
  copy.weights().head.mutable_data()[0] += 1.0;
  EXPECT_NE(copy.weights().head.data()[0], m.weights().head.data()[0]);
}

TEST(ModelTest, LoadParametersChecksShapesAndNames) {
  Fixture f;
  Model m(tiny_config(), f.vocab, f.categories, 1);
  auto params = m.named_parameters();
  params[0].tensor = Tensor::zeros({1, 1});
  EXPECT_THROW(m.load_parameters(params), ConfigError);
  auto partial = m.named_parameters();
  partial.pop_back();
  EXPECT_THROW(m.load_parameters(partial), ConfigError);
  EXPECT_NO_THROW(m.load_parameters(partial, false));

  auto c = tiny_config();
  c.hidden_dim = 32;
  c.ff_dim = 48;
  Model wide(c, f.vocab, f.categories, 1);
  EXPECT_THROW(m.load_parameters(wide.named_parameters()), ConfigError);
}
