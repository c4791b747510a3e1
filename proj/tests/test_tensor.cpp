#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kgp/optim.hpp"
#include "kgp/rng.hpp"
#include "kgp/tensor.hpp"

using namespace kgp;
using M = Matrix<double>;
using V = Var<double>;
using ops::Segments;

namespace {

M random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  M m(r, c);
  for (auto& v : m.data) v = u(rng);
  return m;
}

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output entry contributes a distinct gradient.
V weighted_sum(Tape<double>& t, V y, std::uint64_t seed = 99) {
  return ops::sum(ops::mul(y, t.constant(random_matrix(y.rows(), y.cols(), seed))));
}

constexpr double kTol = 1e-3;

}  // namespace

TEST(GradCheck, QuadraticIsExact) {
  auto x = random_matrix(3, 4, 1);
  double err = grad_check([](Tape<double>&, V v) { return ops::sum(ops::mul(v, v)); }, x);
  EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, Matmul) {
  auto b = random_matrix(4, 3, 2);
  auto a = random_matrix(5, 4, 3);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::matmul(x, t.constant(b))); }, a), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::matmul(t.constant(a), x)); }, b), kTol);
}

TEST(GradCheck, AddBiasAddMulScale) {
  auto x0 = random_matrix(4, 3, 4);
  auto other = random_matrix(4, 3, 5);
  auto bias = random_matrix(1, 3, 6);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::add_bias(x, t.constant(bias))); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V b) { return weighted_sum(t, ops::add_bias(t.constant(x0), b)); }, bias), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::add(x, t.constant(other))); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::mul(x, t.constant(other))); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::mul(x, x)); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::scale(x, -2.5)); }, x0), kTol);
}

TEST(GradCheck, ConcatAndGather) {
  auto x0 = random_matrix(3, 2, 7);
  auto y0 = random_matrix(3, 4, 8);
  auto z0 = random_matrix(2, 2, 9);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::concat_cols<double>({x, t.constant(y0), x})); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::concat_rows<double>({t.constant(z0), x})); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::gather_rows(x, {2, 0, 2, 1, 2})); }, x0), kTol);
}

TEST(GradCheck, Activations) {
  // keep entries away from the kink at zero
  auto x0 = random_matrix(4, 5, 10, 0.05, 1.0);
  for (std::size_t i = 0; i < x0.size(); i += 2) x0.data[i] = -x0.data[i];
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::leaky_relu(x, 0.2)); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::relu(x)); }, x0), kTol);
}

TEST(GradCheck, BatchNormTrainAndEval) {
  auto x0 = random_matrix(6, 3, 11);
  Parameter<double> rm{"rm", M(1, 3, 0.0), {}, false}, rv{"rv", M(1, 3, 1.0), {}, false};
  Parameter<double> gamma{"g", random_matrix(1, 3, 12, 0.5, 1.5), {}, true};
  Parameter<double> beta{"b", random_matrix(1, 3, 13), {}, true};
  for (bool train : {true, false}) {
    auto f = [&](Tape<double>& t, V x) {
      return weighted_sum(t, ops::batch_norm(x, t.parameter(gamma), t.parameter(beta), rm, rv, train));
    };
    EXPECT_LT(grad_check(f, x0), kTol) << "train=" << train;
    EXPECT_LT(grad_check_params(
                  [&](Tape<double>& t) {
                    return weighted_sum(t, ops::batch_norm(t.constant(x0), t.parameter(gamma), t.parameter(beta), rm, rv, train));
                  },
                  {&gamma, &beta}),
              kTol);
  }
}

TEST(GradCheck, DropoutWithFixedMask) {
  auto x0 = random_matrix(5, 4, 14);
  auto f = [&](Tape<double>& t, V x) {
    Rng rng(5);
    return weighted_sum(t, ops::dropout(x, 0.3, &rng, true));
  };
  EXPECT_LT(grad_check(f, x0), kTol);
}

TEST(GradCheck, RowMeanAndMse) {
  auto x0 = random_matrix(4, 6, 15);
  auto target = random_matrix(4, 6, 16);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::row_mean(x)); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return ops::mse_loss(x, t.constant(target)); }, x0), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V y) { return ops::mse_loss(t.constant(x0), y); }, target), kTol);
}

TEST(GradCheck, MseOfLinearLayer) {
  auto x0 = random_matrix(8, 5, 17);
  auto y0 = random_matrix(8, 3, 18);
  Parameter<double> W{"W", random_matrix(5, 3, 19), {}, true};
  Parameter<double> b{"b", random_matrix(1, 3, 20), {}, true};
  double err = grad_check_params(
      [&](Tape<double>& t) {
        return ops::mse_loss(ops::add_bias(ops::matmul(t.constant(x0), t.parameter(W)), t.parameter(b)), t.constant(y0));
      },
      {&W, &b});
  EXPECT_LT(err, kTol);
}

TEST(GradCheck, SegmentSoftmaxOnFiveEdges) {
  // five edges into three destinations, two heads
  Segments seg({0, 1, 0, 2, 1}, 3);
  auto s0 = random_matrix(5, 2, 21, -2.0, 2.0);
  EXPECT_LT(grad_check([&](Tape<double>& t, V s) { return weighted_sum(t, ops::segment_softmax(s, seg)); }, s0), kTol);
}

TEST(GradCheck, SegmentWeightedSumAndHeadDot) {
  std::vector<std::uint32_t> target{0, 1, 0, 2, 1};
  auto values = random_matrix(5, 6, 22);
  auto alpha = random_matrix(5, 2, 23, 0.0, 1.0);
  auto a = random_matrix(2, 3, 24);
  EXPECT_LT(grad_check([&](Tape<double>& t, V v) { return weighted_sum(t, ops::segment_weighted_sum(v, t.constant(alpha), target, 4)); }, values), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V al) { return weighted_sum(t, ops::segment_weighted_sum(t.constant(values), al, target, 4)); }, alpha), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V x) { return weighted_sum(t, ops::head_dot(x, t.constant(a))); }, values), kTol);
  EXPECT_LT(grad_check([&](Tape<double>& t, V av) { return weighted_sum(t, ops::head_dot(t.constant(values), av)); }, a), kTol);
}

TEST(GradCheck, RandomizedShapes) {
  Rng rng(25);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = dim(rng), k = dim(rng), c = dim(rng);
    auto x0 = random_matrix(r, k, 100 + trial);
    auto w0 = random_matrix(k, c, 200 + trial);
    auto f = [&](Tape<double>& t, V x) {
      auto h = ops::matmul(x, t.constant(w0));
      return weighted_sum(t, ops::concat_rows<double>({h, ops::row_mean(h)}));
    };
    EXPECT_LT(grad_check(f, x0), kTol) << r << "x" << k << "x" << c;
  }
}

TEST(Tensor, MatmulMatchesNaiveProduct) {
  auto a = random_matrix(7, 5, 30);
  auto b = random_matrix(5, 4, 31);
  Tape<double> t;
  auto c = ops::matmul(t.constant(a), t.constant(b)).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), acc, 1e-12);
    }
}

TEST(Tensor, MatmulShapeMismatchThrows) {
  Tape<double> t;
  try {
    ops::matmul(t.constant(M(2, 3)), t.constant(M(2, 3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(MseLoss, Examples) {
  Tape<double> t;
  auto x = t.constant(M(1, 2, {1, 2}));
  EXPECT_DOUBLE_EQ(ops::mse_loss(x, x).value().data[0], 0.0);
  EXPECT_DOUBLE_EQ(ops::mse_loss(t.constant(M(1, 2, {1, 1})), t.constant(M(1, 2, {0, 0}))).value().data[0], 1.0);
  EXPECT_DOUBLE_EQ(ops::mse_loss(t.constant(M(1, 2, {1, 2})), t.constant(M(1, 2, {0, 4}))).value().data[0], 2.5);
  EXPECT_THROW(ops::mse_loss(t.constant(M(1, 2)), t.constant(M(2, 1))), Error);
}

TEST(SegmentSoftmax, Examples) {
  Tape<double> t;
  auto one = ops::segment_softmax(t.constant(M(1, 1, {3.7})), Segments({0}, 1)).value();
  EXPECT_DOUBLE_EQ(one.data[0], 1.0);
  auto eq = ops::segment_softmax(t.constant(M(2, 1, {0, 0})), Segments({0, 0}, 1)).value();
  EXPECT_DOUBLE_EQ(eq.data[0], 0.5);
  EXPECT_DOUBLE_EQ(eq.data[1], 0.5);
  auto q = ops::segment_softmax(t.constant(M(2, 1, {std::log(1.0), std::log(3.0)})), Segments({0, 0}, 1)).value();
  EXPECT_NEAR(q.data[0], 0.25, 1e-12);
  EXPECT_NEAR(q.data[1], 0.75, 1e-12);
}

TEST(SegmentSoftmax, SumsToOneAndIsStable) {
  Rng rng(40);
  std::uniform_int_distribution<std::uint32_t> pick(0, 9);
  std::vector<std::uint32_t> of_row(200);
  for (std::uint32_t i = 0; i < 200; ++i) of_row[i] = i < 10 ? i : pick(rng);
  Segments seg(of_row, 10);
  auto s = random_matrix(200, 4, 41, -500.0, 500.0);
  Tape<float> t;
  auto a = ops::segment_softmax(t.constant(s.cast<float>()), seg).value();
  for (std::size_t g = 0; g < 10; ++g)
    for (std::size_t h = 0; h < 4; ++h) {
      double acc = 0;
      for (auto r : seg.members(g)) {
        EXPECT_TRUE(std::isfinite(a(r, h)));
        EXPECT_GE(a(r, h), 0.0f);
        acc += a(r, h);
      }
      EXPECT_NEAR(acc, 1.0, 1e-6);
    }
}

TEST(SegmentSoftmax, EmptySegmentThrows) {
  try {
    Segments seg({0, 0, 2}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySegment);
  }
}

TEST(BatchNorm, TrainNormalizesEvalIsAffine) {
  auto x0 = random_matrix(32, 5, 50, -3.0, 7.0);
  Parameter<double> rm{"rm", M(1, 5, 0.0), {}, false}, rv{"rv", M(1, 5, 1.0), {}, false};
  Parameter<double> gamma{"g", M(1, 5, 1.0), {}, true}, beta{"b", M(1, 5, 0.0), {}, true};
  Tape<double> t;
  auto y = ops::batch_norm(t.constant(x0), t.parameter(gamma), t.parameter(beta), rm, rv, true).value();
  for (std::size_t j = 0; j < 5; ++j) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 32; ++i) mean += y(i, j);
    mean /= 32;
    for (std::size_t i = 0; i < 32; ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= 32;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
  // eval: y = gamma * (x - rm) / sqrt(rv + eps) + beta
  auto e = ops::batch_norm(t.constant(x0), t.parameter(gamma), t.parameter(beta), rm, rv, false).value();
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR(e(i, j), (x0(i, j) - rm.value(0, j)) / std::sqrt(rv.value(0, j) + 1e-5), 1e-10);
  auto e2 = ops::batch_norm(t.constant(x0), t.parameter(gamma), t.parameter(beta), rm, rv, false).value();
  EXPECT_EQ(e, e2);
}

TEST(Dropout, EvalIsIdentity) {
  auto x0 = random_matrix(4, 4, 60);
  Tape<double> t;
  Rng rng(1);
  auto x = t.constant(x0);
  EXPECT_EQ(ops::dropout(x, 0.5, &rng, false).value(), x0);
  auto y = ops::dropout(x, 0.5, &rng, true).value();
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_TRUE(y.data[i] == 0.0 || std::abs(y.data[i] - 2 * x0.data[i]) < 1e-12);
}

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  Parameter<double> w{"w", random_matrix(3, 3, 70), {}, true};
  auto before = w.value;
  AdamW<double> opt({&w}, {.lr = 1e-3, .weight_decay = 0.0});
  opt.zero_grad();
  opt.step();
  EXPECT_EQ(w.value, before);
}

TEST(AdamW, SingleStepClosedForm) {
  Parameter<double> w{"w", M(1, 1, 1.0), {}, true};
  AdamW<double> opt({&w}, {.lr = 1e-3, .weight_decay = 0.0});
  opt.zero_grad();
  w.grad.data[0] = 0.5;
  opt.step();
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
  EXPECT_NEAR(w.value.data[0], 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w.value.data[0], 0.999, 1e-7);
}

TEST(AdamW, PureDecay) {
  Parameter<double> w{"w", M(1, 2, std::vector<double>{2.0, -4.0}), {}, true};
  AdamW<double> opt({&w}, {.lr = 1e-3, .weight_decay = 0.01});
  opt.zero_grad();
  opt.step();
  EXPECT_NEAR(w.value.data[0], 2.0 * 0.99999, 1e-15);
  EXPECT_NEAR(w.value.data[1], -4.0 * 0.99999, 1e-15);
}

TEST(AdamW, ZeroLearningRateIsIdentity) {
  Parameter<double> w{"w", random_matrix(2, 5, 71), {}, true};
  auto before = w.value;
  AdamW<double> opt({&w}, {.lr = 0.0});
  for (int s = 0; s < 3; ++s) {
    w.grad = random_matrix(2, 5, 72 + s);
    opt.step();
  }
  EXPECT_EQ(w.value, before);
  EXPECT_EQ(opt.steps(), 3u);
}

TEST(AdamW, NonFiniteGradientThrows) {
  Parameter<double> w{"w", M(1, 1, 1.0), {}, true};
  AdamW<double> opt({&w});
  opt.zero_grad();
  w.grad.data[0] = std::nan("");
  try {
    opt.step();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteGradient);
  }
}

TEST(AdamW, SkipsNonTrainable) {
  Parameter<double> w{"w", M(1, 1, 1.0), {}, false};
  AdamW<double> opt({&w}, {.weight_decay = 0.5});
  w.zero_grad();
  w.grad.data[0] = 1.0;
  opt.step();
  EXPECT_EQ(w.value.data[0], 1.0);
}

TEST(Tape, BackwardNeedsScalar) {
  Parameter<double> w{"w", M(2, 2, 1.0), {}, true};
  Tape<double> t;
  EXPECT_THROW(t.backward(t.parameter(w)), Error);
}
