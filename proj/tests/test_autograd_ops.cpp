#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "neighcnn/autograd.hpp"
#include "neighcnn/error.hpp"
#include "neighcnn/gradcheck.hpp"
#include "neighcnn/gradcheck_suite.hpp"
#include "neighcnn/ops.hpp"
#include "oracles.hpp"

using namespace neighcnn;

TEST(Shape, NumelAndRank) {
  EXPECT_EQ(Shape({2, 3, 4, 5}).numel(), 120u);
  EXPECT_EQ(Shape().numel(), 1u);
  EXPECT_EQ(Shape({7}).rank(), 1u);
  EXPECT_THROW(Shape({1, 1, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Shape({2, 0}), ShapeError);
}

TEST(Tensor, ConstructionAndAccess) {
  Tensor t(Shape{1, 2, 2, 2}, 1.5);
  EXPECT_EQ(t.numel(), 8u);
  t.at(0, 1, 1, 0) = 4.0;
  EXPECT_EQ(t[6], 4.0);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Tensor, StackAndSlice) {
  Tensor a(Shape{1, 1, 2, 2}, 1.0), b(Shape{1, 1, 2, 2}, 2.0);
  const std::vector<Tensor> items{a, b};
  Tensor s = stack_batch(items);
  EXPECT_EQ(s.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(batch_item(s, 1), b);
}

TEST(Tensor, PairwiseSumMatchesExactSmallIntegers) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(pairwise_sum(v), 999.0 * 1000.0 / 2.0);
}

TEST(Autograd, AddMulChainRule) {
  Var x = variable(Tensor(Shape{2}, std::vector<double>{1.0, 2.0}));
  Var y = variable(Tensor(Shape{2}, std::vector<double>{3.0, -1.0}));
  backward(sum(mul(add(x, y), x)));  // d/dx = 2x + y, d/dy = x
  EXPECT_EQ(x.grad().values(), (std::vector<double>{5.0, 3.0}));
  EXPECT_EQ(y.grad().values(), (std::vector<double>{1.0, 2.0}));
}

TEST(Autograd, SecondBackwardThrows) {
  Var x = variable(Tensor(Shape{3}, 1.0));
  Var loss = sum(square(x));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
}

TEST(Autograd, NonScalarLossRejected) {
  Var x = variable(Tensor(Shape{3}, 1.0));
  EXPECT_THROW(backward(square(x)), GraphError);
}

TEST(Autograd, NoGradRecordsNothing) {
  Var x = variable(Tensor(Shape{3}, 1.0));
  NoGradGuard guard;
  EXPECT_FALSE(grad_enabled());
  Var y = sum(square(x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, ParameterGradientsOverwriteOrAccumulate) {
  Parameter p("w", Tensor(Shape{2}, std::vector<double>{1.0, 2.0}));
  backward(sum(square(parameter(p))));
  EXPECT_EQ(p.grad.values(), (std::vector<double>{2.0, 4.0}));
  backward(sum(square(parameter(p))));
  EXPECT_EQ(p.grad.values(), (std::vector<double>{2.0, 4.0}));
  backward(sum(square(parameter(p))), true);
  EXPECT_EQ(p.grad.values(), (std::vector<double>{4.0, 8.0}));
}

TEST(Autograd, FrozenParameterIsConstant) {
  Parameter p("w", Tensor(Shape{2}, 1.0), false);
  Var v = parameter(p);
  EXPECT_FALSE(v.requires_grad());
}

TEST(Ops, NonFiniteOutputRaises) {
  Var x = constant(Tensor(Shape{1}, 1e308));
  EXPECT_THROW(scale(x, 10.0), NumericError);
  EXPECT_THROW(sqrt(constant(Tensor(Shape{1}, -1.0))), InvalidArgument);
}

TEST(Ops, ReluGradientAtZeroIsZero) {
  Var x = variable(Tensor(Shape{3}, std::vector<double>{-1.0, 0.0, 2.0}));
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad().values(), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Ops, SumAxesRemovesReducedAxes) {
  Tensor t(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(constant(t), std::vector<std::size_t>{1}).value().values(),
            (std::vector<double>{6, 15}));
  EXPECT_EQ(mean(constant(t), std::vector<std::size_t>{0}).value().values(),
            (std::vector<double>{2.5, 3.5, 4.5}));
  EXPECT_DOUBLE_EQ(mean(constant(t)).value().item(), 3.5);
}

TEST(Ops, Conv2dMatchesLoopOracle) {
  std::mt19937_64 rng(11);
  for (auto [pad, stride, hw] : {std::tuple{1u, 1u, 8u}, std::tuple{0u, 1u, 7u},
                                 std::tuple{2u, 1u, 6u}, std::tuple{0u, 2u, 9u}}) {
    const Tensor x = oracle::random_normal(Shape{3, 2, hw, hw + (stride == 1 ? 3u : 2u)}, rng);
    const Tensor w = oracle::random_normal(Shape{5, 2, 3, 3}, rng);
    const Tensor b = oracle::random_normal(Shape{5}, rng);
    const Tensor got = conv2d(constant(x), constant(w), constant(b), pad, stride).value();
    const Tensor want = oracle::conv2d(x, w, b, pad, stride);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Ops, Conv2dFiveByFiveKernel) {
  std::mt19937_64 rng(12);
  const Tensor x = oracle::random_normal(Shape{1, 3, 9, 9}, rng);
  const Tensor w = oracle::random_normal(Shape{2, 3, 5, 5}, rng);
  const Tensor b = oracle::random_normal(Shape{2}, rng);
  const Tensor got = conv2d(constant(x), constant(w), constant(b), 2).value();
  const Tensor want = oracle::conv2d(x, w, b, 2);
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Ops, Conv2dShapeErrors) {
  const Var x = constant(Tensor(Shape{1, 2, 8, 8}));
  EXPECT_THROW(conv2d(x, constant(Tensor(Shape{1, 3, 3, 3})), constant(Tensor(Shape{1})), 1),
               ShapeError);
  EXPECT_THROW(conv2d(x, constant(Tensor(Shape{1, 2, 2, 2})), constant(Tensor(Shape{1})), 1),
               ShapeError);
  EXPECT_THROW(conv2d(x, constant(Tensor(Shape{1, 2, 3, 3})), constant(Tensor(Shape{2})), 1),
               ShapeError);
}

TEST(Ops, Conv2dIndependentOfThreadCount) {
  std::mt19937_64 rng(13);
  const Tensor x = oracle::random_normal(Shape{4, 8, 16, 16}, rng);
  const Tensor w = oracle::random_normal(Shape{8, 8, 3, 3}, rng);
  const Tensor b = oracle::random_normal(Shape{8}, rng);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    Var xv = variable(x), wv = variable(w);
    backward(sum(square(conv2d(xv, wv, constant(b), 1))));
    return std::tuple{xv.grad(), wv.grad()};
  };
  const int saved = omp_get_max_threads();
  const auto one = run(1);
  const auto three = run(3);
  omp_set_num_threads(saved);
  EXPECT_EQ(std::get<0>(one), std::get<0>(three));
  EXPECT_EQ(std::get<1>(one), std::get<1>(three));
}

TEST(Ops, CropAndPools) {
  Tensor t(Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(crop(constant(t), 1, 2, 2, 2).value().values(), (std::vector<double>{6, 7, 10, 11}));
  EXPECT_EQ(avg_pool2x2(constant(t)).value().values(),
            (std::vector<double>{2.5, 4.5, 10.5, 12.5}));
  EXPECT_EQ(max_pool2x2(constant(t)).value().values(), (std::vector<double>{5, 7, 13, 15}));
  EXPECT_THROW(crop(constant(t), 3, 0, 2, 1), ShapeError);
  EXPECT_THROW(avg_pool2x2(constant(Tensor(Shape{1, 1, 3, 4}))), ShapeError);
}

TEST(Ops, BatchNormTrainNormalizesAndUpdatesRunningStats) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_normal(Shape{4, 2, 3, 3}, rng, 2.0);
  Tensor rm(Shape{2}), rv(Shape{2}, 1.0);
  const Tensor gamma(Shape{2}, 1.0), beta(Shape{2}, 0.0);
  const Tensor y =
      batch_norm(constant(x), constant(gamma), constant(beta), rm, rv, Mode::train).value();
  const double n = 4 * 9;
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sq = 0, ym = 0, yv = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) mean += x.at(b, c, i / 3, i % 3);
    mean /= n;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        const double d = x.at(b, c, i / 3, i % 3) - mean;
        sq += d * d;
        ym += y.at(b, c, i / 3, i % 3);
      }
    ym /= n;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) yv += std::pow(y.at(b, c, i / 3, i % 3) - ym, 2);
    yv /= n;
    EXPECT_NEAR(ym, 0.0, 1e-12);
    EXPECT_NEAR(yv, (sq / n) / (sq / n + 1e-5), 1e-10);
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * sq / (n - 1), 1e-12);
  }
}

TEST(Ops, BatchNormInferUsesRunningStats) {
  Tensor rm(Shape{1}, std::vector<double>{0.5}), rv(Shape{1}, std::vector<double>{4.0});
  const Tensor x(Shape{1, 1, 1, 2}, std::vector<double>{0.5, 2.5});
  const Tensor y = batch_norm(constant(x), constant(Tensor(Shape{1}, 3.0)),
                              constant(Tensor(Shape{1}, 1.0)), rm, rv, Mode::infer)
                       .value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0 + 3.0 * 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(rm[0], 0.5);
}

TEST(GradCheck, RelativeErrorUsesFloor) {
  const Tensor a(Shape{2}, std::vector<double>{1.0, 0.0});
  const Tensor n(Shape{2}, std::vector<double>{1.0, 1e-9});
  EXPECT_NEAR(max_relative_error(a, n, 1e-6), 1e-3, 1e-15);
}

TEST(GradCheck, FullSuitePasses) {
  const auto results = run_gradcheck_suite({});
  EXPECT_GE(results.size(), 30u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.report.passed) << r.name << " rel err " << r.report.max_relative_error;
  }
}

TEST(GradCheck, CorruptedGradientIsCaught) {
  SuiteOptions o;
  o.corrupt_analytic = 1.01;
  for (const auto& r : run_gradcheck_suite(o, "conv2d.same")) {
    EXPECT_FALSE(r.report.passed) << r.name;
  }
}

TEST(GradCheck, EveryOperatorHasACheck) {
  const auto names = gradcheck_suite_names();
  for (const char* op : {"add", "sub", "mul", "square", "scale", "add_scalar", "sqrt", "relu",
                         "sum", "mean", "conv2d", "crop", "avg_pool2x2", "max_pool2x2",
                         "batch_norm", "loss.euclidean", "loss.neighbourhood", "loss.perceptual",
                         "loss.total", "network"}) {
    bool found = false;
    for (const auto& n : names) found = found || n.rfind(op, 0) == 0;
    EXPECT_TRUE(found) << op;
  }
}
