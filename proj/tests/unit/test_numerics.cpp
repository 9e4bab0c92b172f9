#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/adamw.hpp"
#include "vrebert/numerics/gradcheck.hpp"
#include "vrebert/numerics/ops.hpp"
#include "vrebert/numerics/parallel.hpp"
#include "vrebert/numerics/rng.hpp"
#include "vrebert/numerics/snapshot.hpp"

using namespace vrebert;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum so every output coordinate gets a distinct upstream grad.
Tensor probe_loss(const Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * i);
  return ops::sum(ops::mul(y, Tensor::from(y.shape(), w)));
}

double check(const std::function<Tensor()>& f, std::vector<Tensor> params) {
  return finite_diff_check(f, params, {1e-5, 0, 3}).max_relative_error;
}

}  // namespace

TEST(Tensor, FromRejectsBadShapes) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::from({0, 3}, {}), DimensionError);
  EXPECT_EQ(Tensor::zeros({2, 3}).numel(), 6u);
}

TEST(Tensor, CopiesAliasCloneDoesNot) {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = a;
  Tensor c = a.clone();
  b.mutable_data()[0] = 5;
  EXPECT_EQ(a.data()[0], 5);
  EXPECT_EQ(c.data()[0], 1);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(Tensor, BackwardNeedsScalarWithHistory) {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(ops::scale(a, 2).backward(), ContractError);
  EXPECT_THROW(Tensor::scalar(1.0).backward(), ContractError);
}

TEST(Tensor, LeafGradsAccumulateAcrossBackward) {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  ops::sum(ops::scale(a, 3)).backward();
  ops::sum(ops::scale(a, 3)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 6);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[1], 0);
}

TEST(Tensor, SharedSubexpressionGetsBothPaths) {
  Tensor a = Tensor::from({1}, {3}, true);
  Tensor b = ops::mul(a, a);
  ops::sum(ops::add(b, b)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 12);  // d(2a^2)/da
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_mode_enabled());
    EXPECT_FALSE(ops::scale(a, 2).requires_grad());
  }
  EXPECT_TRUE(grad_mode_enabled());
  EXPECT_TRUE(ops::scale(a, 2).requires_grad());
}

TEST(Ops, MatmulMatchesNaive) {
  Rng rng(1);
  Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 5});
  Tensor c = ops::matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
  }
}

TEST(Ops, MatmulShapeErrorNamesShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Ops, SoftmaxRowsSumToOneAndShiftInvariant) {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 1000, 1001, 1002});
  Tensor y = ops::softmax(x, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_NEAR(y.at(r, 0) + y.at(r, 1) + y.at(r, 2), 1.0, 1e-15);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y.at(0, c), y.at(1, c), 1e-14);
  }
}

TEST(Ops, SoftmaxOverColumns) {
  Tensor y = ops::softmax(Tensor::from({2, 2}, {0, 1, 0, 1}), 0);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1, 1), 0.5);
}

TEST(Ops, SoftmaxTreatsMinusInfinityAsMasked) {
  Tensor y = ops::softmax(Tensor::from({1, 3}, {0, -INFINITY, 0}), 1);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.5);
}

TEST(Ops, LayerNormNormalizesRows) {
  Rng rng(2);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor y = ops::layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y.at(r, c) / 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m) / 6;
    EXPECT_NEAR(m, 0, 1e-12);
    EXPECT_NEAR(v, 1, 1e-4);
  }
  EXPECT_THROW(ops::layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}), 0.0),
               ContractError);
}

TEST(Ops, GeluKnownValues) {
  Tensor y = ops::gelu(Tensor::from({3}, {0.0, 1.0, -1.0}));
  EXPECT_DOUBLE_EQ(y.data()[0], 0.0);
  EXPECT_NEAR(y.data()[1], 0.8413447460685429, 1e-14);
  EXPECT_NEAR(y.data()[2], -0.15865525393145707, 1e-14);
}

TEST(Ops, DropoutIdentityInEvalAndUnbiasedInTrain) {
  Rng rng(3);
  Tensor x = Tensor::full({100, 100}, 1.0);
  Tensor e = ops::dropout(x, 0.3, rng, false);
  EXPECT_TRUE(std::equal(e.data().begin(), e.data().end(), x.data().begin()));
  Tensor t = ops::dropout(x, 0.3, rng, true);
  double s = 0;
  std::size_t zeros = 0;
  for (double v : t.data()) {
    s += v;
    zeros += v == 0.0;
  }
  EXPECT_NEAR(s / 10000, 1.0, 0.05);
  EXPECT_NEAR(zeros / 10000.0, 0.3, 0.03);
}

TEST(Ops, GatherRowsNegativeIndexGivesZeroRow) {
  Tensor src = Tensor::from({2, 2}, {1, 2, 3, 4});
  std::vector<std::int64_t> idx = {1, -1, 0};
  Tensor y = ops::gather_rows(src, idx);
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  EXPECT_EQ(y.at(0, 1), 4);
  EXPECT_EQ(y.at(1, 0), 0);
  EXPECT_EQ(y.at(2, 0), 1);
  std::vector<std::int64_t> bad = {2};
  EXPECT_THROW(ops::gather_rows(src, bad), DimensionError);
}

TEST(Ops, NegLogClampIsFinite) {
  Tensor y = ops::neg_log_clamped(Tensor::from({2}, {0.0, 1.0}));
  EXPECT_NEAR(y.data()[0], -std::log(1e-12), 1e-9);
  EXPECT_EQ(y.data()[1], 0.0);
}

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2});
  Tensor c = random_tensor(rng, {3, 4}), bias = random_tensor(rng, {4});
  Tensor gamma = random_tensor(rng, {4}), beta = random_tensor(rng, {4});
  std::vector<std::int64_t> rows = {2, -1, 0, 2};
  std::vector<std::size_t> elems = {0, 5, 5, 11};
  std::vector<Tensor> parts_a = {a, c};

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor> params;
  };
  const std::vector<Case> cases = {
      {"matmul", [&] { return probe_loss(ops::matmul(a, b)); }, {a, b}},
      {"transpose", [&] { return probe_loss(ops::transpose(a)); }, {a}},
      {"add", [&] { return probe_loss(ops::add(a, c)); }, {a, c}},
      {"sub", [&] { return probe_loss(ops::sub(a, c)); }, {a, c}},
      {"mul", [&] { return probe_loss(ops::mul(a, c)); }, {a, c}},
      {"scale", [&] { return probe_loss(ops::scale(a, -1.5)); }, {a}},
      {"add_bias", [&] { return probe_loss(ops::add_bias(a, bias)); }, {a, bias}},
      {"linear", [&] { return probe_loss(ops::linear(c, ops::transpose(a), Tensor::from({3}, {1, 2, 3}, false))); }, {a, c}},
      {"mean", [&] { return ops::mean(ops::mul(a, a)); }, {a}},
      {"softmax1", [&] { return probe_loss(ops::softmax(a, 1)); }, {a}},
      {"softmax0", [&] { return probe_loss(ops::softmax(a, 0)); }, {a}},
      {"layer_norm", [&] { return probe_loss(ops::layer_norm(a, gamma, beta)); }, {a, gamma, beta}},
      {"gelu", [&] { return probe_loss(ops::gelu(a)); }, {a}},
      {"gather_rows", [&] { return probe_loss(ops::gather_rows(a, rows)); }, {a}},
      {"concat_rows", [&] { return probe_loss(ops::concat_rows(parts_a)); }, {a, c}},
      {"slice_cols", [&] { return probe_loss(ops::slice_cols(a, 1, 2)); }, {a}},
      {"gather_elements", [&] { return probe_loss(ops::gather_elements(a, elems, {2, 2})); }, {a}},
      {"neg_log", [&] { return probe_loss(ops::neg_log_clamped(ops::softmax(a, 1))); }, {a}},
  };
  for (const auto& c : cases) {
    EXPECT_LT(check(c.f, c.params), 1e-7) << c.name;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  auto wrong = [&] {
    std::vector<double> v(a.data().begin(), a.data().end());
    for (auto& x : v) x = x * x;
    return ops::sum(Tensor::make_result({2}, v, {a}, [](const Tensor& out) {
      auto p = out.parents()[0];
      for (auto& g : p.grad_accumulator()) g += 1.0;  // should be 2x
    }));
  };
  std::vector<Tensor> params = {a};
  EXPECT_GT(finite_diff_check(wrong, params, {1e-5, 0, 0}).max_relative_error, 0.5);
}

TEST(GradCheck, RejectsBadStep) {
  Tensor a = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> params = {a};
  EXPECT_THROW(finite_diff_check([&] { return ops::sum(a); }, params, {0.0, 0, 0}),
               ContractError);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  Rng a = Rng::stream(7, "init"), b = Rng::stream(7, "init"), c = Rng::stream(7, "data");
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng r(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(12);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 1.0, 0.02);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 4.0, 0.05);
}

TEST(Rng, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

// Straight-line AdamW with decoupled decay for one scalar.
TEST(AdamW, MatchesReferenceRecurrence) {
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.05;
  Tensor p = Tensor::from({1}, {2.0}, true);
  std::vector<Tensor> params = {p};
  AdamWState state(params, o);
  double x = 2.0, m = 0, v = 0;
  const double grads[] = {0.5, -1.0, 0.25, 3.0};
  for (int t = 1; t <= 4; ++t) {
    p.zero_grad();
    p.grad_accumulator()[0] = grads[t - 1];
    adamw_step(params, state);
    x -= o.lr * o.weight_decay * x;
    m = o.beta1 * m + (1 - o.beta1) * grads[t - 1];
    v = o.beta2 * v + (1 - o.beta2) * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(o.beta1, t));
    const double vh = v / (1 - std::pow(o.beta2, t));
    x -= o.lr * mh / (std::sqrt(vh) + o.eps);
    EXPECT_NEAR(p.data()[0], x, 1e-14) << "step " << t;
  }
  EXPECT_EQ(state.step_count, 4u);
}

TEST(AdamW, ValidatesOptions) {
  AdamWOptions o;
  o.lr = -1;
  EXPECT_THROW(o.validate(), ConfigError);
  o = {};
  o.beta2 = 1.0;
  EXPECT_THROW(o.validate(), ConfigError);
}

TEST(AdamW, ClipGradNormScalesJointly) {
  Tensor a = Tensor::from({1}, {0.0}, true), b = Tensor::from({1}, {0.0}, true);
  a.grad_accumulator()[0] = 3;
  b.grad_accumulator()[0] = 4;
  std::vector<Tensor> params = {a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(params, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
}

TEST(Snapshot, RoundTripIsBitExact) {
  Rng rng(5);
  std::vector<NamedTensor> params = {{"a", random_tensor(rng, {3, 2})},
                                     {"b.c", random_tensor(rng, {4})},
                                     {"tiny", Tensor::from({1}, {5e-324})}};
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_parameters(buf, params);
  const std::string bytes = buf.str();
  auto back = read_parameters(buf);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, params[i].name);
    EXPECT_EQ(back[i].tensor.shape(), params[i].tensor.shape());
    EXPECT_EQ(0, std::memcmp(back[i].tensor.data().data(), params[i].tensor.data().data(),
                             params[i].tensor.numel() * sizeof(double)));
  }
  std::stringstream again(std::ios::in | std::ios::out | std::ios::binary);
  write_parameters(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Snapshot, TruncationAndBadMagicAreFormatErrors) {
  std::vector<NamedTensor> params = {{"a", Tensor::from({2}, {1, 2})}};
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_parameters(buf, params);
  std::string bytes = buf.str();
  std::istringstream cut(bytes.substr(0, bytes.size() - 3), std::ios::binary);
  EXPECT_THROW(read_parameters(cut), FormatError);
  bytes[0] = 'X';
  std::istringstream bad(bytes, std::ios::binary);
  EXPECT_THROW(read_parameters(bad), FormatError);
}

TEST(Parallel, RunsEveryIndexAndRethrows) {
  std::vector<int> hit(50, 0);
  parallel_for(50, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
  EXPECT_THROW(parallel_for(5, [](std::size_t i) {
                 if (i == 3) throw ContractError("x");
               }),
               ContractError);
  EXPECT_GE(worker_count(), 1u);
}

TEST(Ops, MatmulExamples) {
  Tensor a = Tensor::from({2, 2}, {0.3, -1.2, 2.5, 7.0});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor ia = ops::matmul(eye, a);
  EXPECT_TRUE(std::equal(ia.data().begin(), ia.data().end(), a.data().begin()));
  Tensor c = ops::matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {0, 1}));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.data()[0], 2);
  EXPECT_EQ(c.data()[1], 4);
}

TEST(Ops, MatmulGradientIsOnesTimesBTransposed) {
  Rng rng(6);
  Tensor a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {3, 4});
  ops::sum(ops::matmul(a, b)).backward();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double row_sum = 0;
      for (std::size_t j = 0; j < 4; ++j) row_sum += b.at(k, j);
      EXPECT_NEAR(a.grad()[i * 3 + k], row_sum, 1e-12);
    }
  }
}

TEST(Ops, SoftmaxExamples) {
  Tensor a = ops::softmax(Tensor::from({1, 2}, {0, 0}), 1);
  EXPECT_DOUBLE_EQ(a.data()[0], 0.5);
  Tensor b = ops::softmax(Tensor::from({1, 2}, {1000, 0}), 1);
  EXPECT_NEAR(b.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(b.data()[1], 0.0, 1e-12);
  Tensor c = ops::softmax(Tensor::from({1, 2}, {std::log(2.0), 0}), 1);
  EXPECT_NEAR(c.data()[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(c.data()[1], 1.0 / 3.0, 1e-12);
}

TEST(Ops, LayerNormExamples) {
  Tensor g = Tensor::full({3}, 1.0), z = Tensor::zeros({3});
  Tensor a = ops::layer_norm(Tensor::from({1, 3}, {4, 4, 4}), g, z);
  for (double v : a.data()) EXPECT_EQ(v, 0.0);
  Tensor b = ops::layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1.0),
                             Tensor::zeros({2}));
  EXPECT_NEAR(b.data()[0], 1.0, 1e-5);
  EXPECT_NEAR(b.data()[1], -1.0, 1e-5);
  Rng rng(8);
  Tensor r = ops::layer_norm(random_tensor(rng, {1, 64}), Tensor::full({64}, 1.0),
                             Tensor::zeros({64}));
  double m = 0, v = 0;
  for (double x : r.data()) m += x / 64;
  for (double x : r.data()) v += (x - m) * (x - m) / 64;
  EXPECT_LT(std::abs(m), 1e-10);
  EXPECT_NEAR(v, 1.0, 1e-4);
  EXPECT_THROW(ops::layer_norm(Tensor::from({1, 1}, {1}), Tensor::full({1}, 1.0),
                               Tensor::zeros({1})),
               ContractError);
}

TEST(Ops, GeluAsymptoteAndMonotoneGrid) {
  Tensor y = ops::gelu(Tensor::from({1}, {12.0}));
  EXPECT_NEAR(y.data()[0], 12.0, 1e-6);
  std::vector<double> grid;
  for (double x = -0.7; x <= 6.0; x += 0.01) grid.push_back(x);
  Tensor g = ops::gelu(Tensor::from({grid.size()}, grid));
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GE(g.data()[i], g.data()[i - 1]);
}

TEST(Tensor, BackwardExamples) {
  Tensor x = Tensor::from({3}, {1, -2, 0.5}, true);
  ops::sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  ops::sum(ops::mul(x, x)).backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x.data()[i]);
}

TEST(GradCheck, SquareAtThree) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  std::vector<Tensor> params = {x};
  const auto r = finite_diff_check([&] { return ops::sum(ops::mul(x, x)); }, params);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates_checked, 1u);
}

TEST(GradCheck, NonFiniteLossIsContractError) {
  Tensor x = Tensor::from({1}, {0.0}, true);
  std::vector<Tensor> params = {x};
  auto f = [&] { return ops::scale(ops::sum(x), INFINITY); };
  EXPECT_THROW(finite_diff_check(f, params), ContractError);
}

TEST(AdamW, ClosedFormCases) {
  AdamWOptions o;
  o.weight_decay = 0.0;
  Tensor p = Tensor::from({2}, {1.0, -2.0}, true);
  std::vector<Tensor> params = {p};
  AdamWState s(params, o);
  p.grad_accumulator();  // zero grads
  adamw_step(params, s);
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(p.data()[1], -2.0);

  Tensor q = Tensor::from({2}, {1.0, -2.0}, true);
  std::vector<Tensor> qp = {q};
  AdamWState sq(qp, o);
  q.grad_accumulator()[0] = 0.3;
  q.grad_accumulator()[1] = -4.0;
  adamw_step(qp, sq);
  EXPECT_NEAR(q.data()[0], 1.0 - o.lr * 0.3 / (0.3 + o.eps), 1e-15);
  EXPECT_NEAR(q.data()[1], -2.0 + o.lr * 4.0 / (4.0 + o.eps), 1e-15);

  AdamWOptions d;
  d.weight_decay = 0.1;
  Tensor r = Tensor::from({1}, {5.0}, true);
  std::vector<Tensor> rp = {r};
  AdamWState sr(rp, d);
  adamw_step(rp, sr);
  EXPECT_DOUBLE_EQ(r.data()[0], 5.0 * (1 - d.lr * d.weight_decay));

  AdamWOptions frozen;
  frozen.lr = 0.0;
  Tensor f = Tensor::from({1}, {5.0}, true);
  std::vector<Tensor> fp = {f};
  AdamWState sf(fp, frozen);
  f.grad_accumulator()[0] = 2.0;
  adamw_step(fp, sf);
  EXPECT_EQ(f.data()[0], 5.0);
}
