#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "egolstm/errors.hpp"
#include "egolstm/fpenv.hpp"
#include "egolstm/ops.hpp"
#include "egolstm/optim.hpp"
#include "egolstm/tape.hpp"
#include "egolstm/tnsr.hpp"
#include "oracles.hpp"

using namespace egolstm;

namespace {

Tensor iota(const Shape& s) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(s)));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return Tensor::from_values(s, v);
}

std::vector<double> grad_of(const Tensor& t) {
  auto g = t.grad<double>();
  return {g.begin(), g.end()};
}

}  // namespace

TEST(Tensor, ShapeAndBufferAgree) {
  const Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.size(-1), 4);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  Tensor a = Tensor::full({3}, 1.0);
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data<double>()[0] = 5;
  EXPECT_EQ(b.value(0), 5);
  EXPECT_EQ(c.value(0), 1);
}

TEST(Tensor, DtypeConversionRoundTrip) {
  const Tensor a = Tensor::from_values({2}, {0.25, -1.5});
  const Tensor f = a.to(DType::kFloat32);
  EXPECT_EQ(f.dtype(), DType::kFloat32);
  EXPECT_EQ(f.to(DType::kFloat64).to_vector(), a.to_vector());
}

TEST(Conv2d, OnesKernelSumsWindow) {
  const Tensor y = conv2d(Tensor::full({1, 3, 3}, 1), Tensor::full({1, 1, 3, 3}, 1), Tensor::zeros({1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.item(), 9);
}

TEST(Conv2d, CenterDeltaIsIdentity) {
  Rng rng(1);
  const Tensor x = oracle::random(rng, {1, 5, 6});
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  k.mutable_data<double>()[4] = 1;
  const Tensor y = conv2d(x, k, Tensor::zeros({1}), {1, 1});
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(2);
  const Tensor x = oracle::random(rng, {2, 3, 5, 5});
  const Tensor w = oracle::random(rng, {4, 3, 3, 3});
  const Tensor b = oracle::random(rng, {4});
  EXPECT_LE(oracle::max_abs_diff(conv2d(x, w, b, {1, 1}), oracle::conv2d(x, w, b, 1, 1)), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(conv2d(x, w, b, {2, 0}), oracle::conv2d(x, w, b, 2, 0)), 1e-12);
}

TEST(Conv2d, RejectsInexactExtentAndChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), {2, 0}), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 5, 5}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1})), ShapeError);
  EXPECT_NO_THROW(
      conv2d(Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), {2, 0, ExtentRule::kFloor}));
}

TEST(Conv3d, ZeroKernelGivesBias) {
  const Tensor y = conv3d(Tensor::full({2, 3, 4, 4}, 0.7), Tensor::zeros({3, 2, 2, 3, 3}),
                          Tensor::from_values({3}, {1, -2, 0.5}), 1);
  EXPECT_EQ(y.shape(), (Shape{3, 2, 4, 4}));
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.value(i), (std::array<double, 3>{1, -2, 0.5}[i / 32]));
}

TEST(Conv3d, AntisymmetricDepthCancels) {
  Rng rng(3);
  const Tensor slice = oracle::random(rng, {2, 1, 4, 4});
  const Tensor x = concat({slice, slice}, 1);
  Tensor k = oracle::random(rng, {3, 2, 2, 3, 3});
  auto kv = k.mutable_data<double>();
  for (std::int64_t o = 0; o < 3 * 2; ++o)
    for (int i = 0; i < 9; ++i) kv[o * 18 + 9 + i] = -kv[o * 18 + i];
  const Tensor y = conv3d(x, k, Tensor::zeros({3}), 1);
  for (double v : y.to_vector()) EXPECT_NEAR(v, 0, 1e-15);
}

TEST(Conv3d, MatchesNestedLoopOracle) {
  Rng rng(4);
  const Tensor x = oracle::random(rng, {1, 2, 4, 4});
  const Tensor w = oracle::random(rng, {3, 1, 2, 3, 3});
  const Tensor b = oracle::random(rng, {3});
  EXPECT_LE(oracle::max_abs_diff(conv3d(x, w, b, 1), oracle::conv3d(x, w, b, 1)), 1e-12);
}

TEST(MaxPool, ConstantStaysConstant) {
  const Tensor y = max_pool2d(Tensor::full({2, 5, 5}, 3.5), 3, 2);
  for (double v : y.to_vector()) EXPECT_EQ(v, 3.5);
}

TEST(MaxPool, IotaWindows) {
  EXPECT_EQ(max_pool2d(iota({1, 4, 4}), 2, 2).to_vector(), (std::vector<double>{5, 7, 13, 15}));
}

TEST(MaxPool, BackwardRoutesOnePerWindow) {
  Rng rng(5);
  Tensor x = oracle::random(rng, {2, 6, 6});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(max_pool2d(x, 2, 2)));
  }
  const auto g = grad_of(x);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t by = 0; by < 3; ++by)
      for (std::int64_t bx = 0; bx < 3; ++bx) {
        double s = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) s += g[static_cast<std::size_t>((c * 6 + by * 2 + dy) * 6 + bx * 2 + dx)];
        EXPECT_EQ(s, 1);
      }
}

TEST(MaxPool, TiesGoToFirstInWindow) {
  Tensor x = Tensor::full({1, 2, 2}, 1.0);
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(max_pool2d(x, 2, 2)));
  }
  EXPECT_EQ(grad_of(x), (std::vector<double>{1, 0, 0, 0}));
}

TEST(MaxPool, WindowLargerThanInputThrows) { EXPECT_THROW(max_pool2d(Tensor::zeros({1, 2, 2}), 3, 1), ShapeError); }

TEST(Lrn, ZeroInZeroOut) {
  for (double v : lrn(Tensor::zeros({4, 3, 3})).to_vector()) EXPECT_EQ(v, 0);
}

TEST(Lrn, SingleChannelDirectFormula) {
  const double x = 1.7;
  const Tensor y = lrn(Tensor::full({1, 2, 2}, x), {1, 2.0, 1e-4, 0.75});
  for (double v : y.to_vector()) EXPECT_DOUBLE_EQ(v, x / std::pow(2 + 1e-4 * x * x, 0.75));
}

TEST(Lrn, MatchesLoopOracle) {
  Rng rng(6);
  const Tensor x = oracle::random(rng, {8, 4, 4}, -3, 3);
  EXPECT_LE(oracle::max_abs_diff(lrn(x), oracle::lrn(x, 5, 2, 1e-4, 0.75)), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(lrn(x, {3, 1.0, 0.5, 0.6}), oracle::lrn(x, 3, 1.0, 0.5, 0.6)), 1e-12);
}

TEST(Lrn, RejectsNonPositiveK) { EXPECT_THROW(lrn(Tensor::zeros({1, 1, 1}), {5, 0.0, 1e-4, 0.75}), std::invalid_argument); }

TEST(Elementwise, Identities) {
  EXPECT_EQ(sigmoid(Tensor::zeros({1})).item(), 0.5);
  EXPECT_EQ(egolstm::tanh(Tensor::zeros({1})).item(), 0);
  Rng rng(7);
  const Tensor a = oracle::random(rng, {3, 2});
  EXPECT_EQ(hadamard(a, Tensor::full({3, 2}, 1)).to_vector(), a.to_vector());
  EXPECT_THROW(add(a, Tensor::zeros({2, 3})), ShapeError);
}

TEST(Concat, FusionLayoutShape) {
  const Tensor a = Tensor::zeros({256, 6, 6}), b = Tensor::zeros({256, 6, 6});
  EXPECT_EQ(stack({a, b}, 1).shape(), (Shape{256, 2, 6, 6}));
  EXPECT_EQ(concat({a, b}, 0).shape(), (Shape{512, 6, 6}));
  EXPECT_THROW(concat({a, Tensor::zeros({256, 5, 6})}, 0), ShapeError);
}

TEST(GlobalAvgPool, MeanOfPlane) {
  EXPECT_EQ(global_avg_pool(Tensor::from_values({1, 2, 2}, {1, 3, 5, 7})).item(), 4);
  EXPECT_EQ(global_avg_pool(Tensor::full({3, 4, 5}, 2.5)).to_vector(), (std::vector<double>{2.5, 2.5, 2.5}));
}

TEST(GlobalAvgPool, BackwardIsUniform) {
  Tensor x = Tensor::zeros({2, 3, 4});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(global_avg_pool(x)));
  }
  for (double g : grad_of(x)) EXPECT_DOUBLE_EQ(g, 1.0 / 12);
}

TEST(CrossEntropy, UniformLogits) {
  EXPECT_NEAR(softmax_cross_entropy(Tensor::zeros({7}), 3).item(), std::log(7.0), 1e-12);
  EXPECT_NEAR(std::log(7.0), 1.9459, 1e-4);
}

TEST(CrossEntropy, SaturatedTrueClass) {
  Tensor logits = Tensor::zeros({5});
  logits.mutable_data<double>()[2] = 1e4;
  EXPECT_LE(softmax_cross_entropy(logits, 2).item(), 1e-6);
  EXPECT_THROW(softmax_cross_entropy(logits, 5), std::out_of_range);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Tensor logits = Tensor::from_values({3}, {0.3, -1.2, 2.0});
  logits.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(softmax_cross_entropy(logits, 1));
  }
  const auto p = softmax(logits.detach()).to_vector();
  const auto g = grad_of(logits);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(g[k], p[k] - (k == 1), 1e-15);
}

TEST(Softmax, SumsToOneAndLossNonNegative) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Tensor l = oracle::random(rng, {6}, -20, 20);
    double s = 0;
    for (double p : softmax(l).to_vector()) s += p;
    EXPECT_NEAR(s, 1, 1e-12);
    EXPECT_GE(softmax_cross_entropy(l, t % 6).item(), 0);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from_values({4}, {1, -2, 3, 0.5});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  EXPECT_EQ(grad_of(x), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::from_values({3}, {1, -2, 0.25});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(hadamard(x, x)));
  }
  EXPECT_EQ(grad_of(x), (std::vector<double>{2, -4, 0.5}));
}

TEST(Backward, FanOutAccumulates) {
  Tensor x = Tensor::zeros({3});
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(add(sum(x), sum(x)));
  }
  EXPECT_EQ(grad_of(x), (std::vector<double>{2, 2, 2}));
}

TEST(Backward, RejectsNonScalar) {
  Tensor x = Tensor::zeros({3});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = sigmoid(x);
  EXPECT_THROW(tape.backward(y), std::exception);
}

TEST(Backward, NoGradScopeRecordsNothing) {
  Tensor x = Tensor::zeros({3});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope off;
    (void)sigmoid(x);
  }
  EXPECT_EQ(tape.size(), 0u);
  (void)sigmoid(x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Backward, RunToRunBitwise) {
  auto run = [] {
    Rng rng(11);
    Tensor x = oracle::random(rng, {2, 5, 5});
    Tensor w = oracle::random(rng, {3, 2, 3, 3});
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(global_avg_pool(sigmoid(conv2d(x, w, Tensor::zeros({3}), {1, 1})))));
    auto g = grad_of(w);
    auto h = grad_of(x);
    g.insert(g.end(), h.begin(), h.end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(Xavier, DeterministicAndBounded) {
  Rng a(3), b(3);
  const Tensor x = xavier_init({64, 32}, 32, 64, a), y = xavier_init({64, 32}, 32, 64, b);
  EXPECT_EQ(x.to_vector(), y.to_vector());
  const double bound = std::sqrt(6.0 / 96);
  EXPECT_DOUBLE_EQ(xavier_bound(32, 64), bound);
  for (double v : x.to_vector()) EXPECT_LE(std::abs(v), bound);
}

TEST(Xavier, Moments) {
  Rng rng(12);
  const auto v = xavier_init({100000}, 128, 128, rng).to_vector();
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  s /= static_cast<double>(v.size());
  EXPECT_LE(std::abs(m), 0.005);
  EXPECT_NEAR(s, 2.0 / 256, 0.1 * 2.0 / 256);
}

TEST(RmsProp, ZeroGradientLeavesParams) {
  Tensor p = Tensor::from_values({2}, {1, 2});
  Tensor v = Tensor::from_values({2}, {0.5, 4});
  const std::vector<double> g{0, 0};
  rmsprop_step(p, g, v, {1e-3, 0.99, 1e-8});
  EXPECT_EQ(p.to_vector(), (std::vector<double>{1, 2}));
  EXPECT_EQ(v.to_vector(), (std::vector<double>{0.99 * 0.5, 0.99 * 4}));
}

TEST(RmsProp, FirstStepDirectFormula) {
  const double lr = 1e-5, rho = 0.99, eps = 1e-8, g = 0.3;
  Tensor p = Tensor::from_values({1}, {0.7});
  Tensor v = Tensor::zeros({1});
  const std::vector<double> grad{g};
  rmsprop_step(p, grad, v, {lr, rho, eps});
  const double v1 = (1 - rho) * g * g;
  EXPECT_EQ(v.item(), v1);
  EXPECT_EQ(p.item(), 0.7 - lr * g / (std::sqrt(v1) + eps));
}

TEST(RmsProp, TwoStepUnroll) {
  const double lr = 1e-2, rho = 0.9, eps = 1e-8, g = -0.4;
  Tensor p = Tensor::from_values({1}, {0.1});
  Tensor v = Tensor::zeros({1});
  const std::vector<double> grad{g};
  rmsprop_step(p, grad, v, {lr, rho, eps});
  rmsprop_step(p, grad, v, {lr, rho, eps});
  double ev = 0, ep = 0.1;
  ev = rho * ev + (1 - rho) * g * g;
  ep = ep - lr * g / (std::sqrt(ev) + eps);
  ev = rho * ev + (1 - rho) * g * g;
  ep = ep - lr * g / (std::sqrt(ev) + eps);
  EXPECT_EQ(v.item(), ev);
  EXPECT_EQ(p.item(), ep);
}

TEST(RmsProp, StepTouchesEveryParameterOnce) {
  Tensor a = Tensor::zeros({2}), b = Tensor::zeros({3});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  RmsProp opt({{"a", a}, {"b", b}}, {});
  EXPECT_EQ(opt.step(), (std::vector<std::string>{"a", "b"}));
}

TEST(FloatEnv, FlushScopeZeroesSubnormalsAndRestores) {
  volatile float tiny = 1e-30f;
  volatile float scale = 1e-10f;
  const float before = tiny * scale;
  EXPECT_GT(before, 0.0f);
  {
    FlushDenormalsScope ftz;
    const float flushed = tiny * scale;
    EXPECT_EQ(flushed, 0.0f);
  }
  const float after = tiny * scale;
  EXPECT_EQ(after, before);
}

TEST(Rng, SplitIsStatelessAndStable) {
  Rng r(42);
  Rng s1 = r.split(3);
  (void)r.next_u64();
  Rng s2 = r.split(3);
  EXPECT_EQ(s1.next_u64(), s2.next_u64());
  EXPECT_NE(Rng(42).split(3).next_u64(), Rng(42).split(4).next_u64());
}

TEST(Rng, BelowIsInRange) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(Tnsr, HeaderLayout) {
  const auto bytes = tnsr::encode(tnsr::from_tensor(Tensor::from_values({2, 1}, {1.0, -2.0})));
  ASSERT_EQ(bytes.size(), 4u + 4 + 2 * 8 + 2 * 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TNSR");
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[5], 2);  // f64
  EXPECT_EQ(bytes[6], 2);  // ndim
  EXPECT_EQ(bytes[7], 0);  // pad
  EXPECT_EQ(bytes[8], 2);  // extent 0, little-endian
  EXPECT_EQ(bytes[16], 1);
}

TEST(Tnsr, RoundTripAllTypes) {
  const Tensor f64 = Tensor::from_values({3}, {0.1, -1e300, 5});
  EXPECT_EQ(tnsr::to_tensor(tnsr::decode(tnsr::encode(tnsr::from_tensor(f64)))).to_vector(), f64.to_vector());
  const Tensor f32 = f64.to(DType::kFloat32);
  const Tensor back = tnsr::to_tensor(tnsr::decode(tnsr::encode(tnsr::from_tensor(f32))));
  EXPECT_EQ(back.dtype(), DType::kFloat32);
  EXPECT_EQ(back.to_vector(), f32.to_vector());
}

TEST(Tnsr, RejectsCorruption) {
  auto bytes = tnsr::encode(tnsr::from_tensor(Tensor::zeros({2})));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(tnsr::decode(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(tnsr::decode(bad_version), FormatError);
  bytes.pop_back();
  EXPECT_THROW(tnsr::decode(bytes), FormatError);
}
