#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "uwbsense/nn/optim.hpp"

using namespace uwbsense;
using nn::Batch;

namespace {

void expect_clean(const gradcheck::Report& r) {
  EXPECT_EQ(r.probes, 50) << r.layer;
  EXPECT_EQ(r.failures, 0) << r.layer << " worst " << r.worst_rel << " at " << r.worst_where;
}

}  // namespace

TEST(GradCheck, Conv) { expect_clean(gradcheck::conv(50, 11)); }
TEST(GradCheck, BatchNormTrainMode) { expect_clean(gradcheck::batchnorm(50, 12)); }
TEST(GradCheck, MaxPool) { expect_clean(gradcheck::maxpool(50, 13)); }
TEST(GradCheck, Linear) { expect_clean(gradcheck::linear(50, 14)); }
TEST(GradCheck, Relu) { expect_clean(gradcheck::relu(50, 15)); }
TEST(GradCheck, L2Loss) { expect_clean(gradcheck::l2(50, 16)); }
TEST(GradCheck, CrossEntropy) { expect_clean(gradcheck::cross_entropy(50, 17)); }
TEST(GradCheck, WholeNetwork) { expect_clean(gradcheck::network(50, 18)); }

TEST(GradCheck, DetectsAWrongGradient) {
  // The checker itself must flag a corrupted analytic gradient.
  std::vector<double> v = {1.0, -2.0, 0.5};
  std::vector<gradcheck::Target> t = {{"v", v, {2.0, -4.0, 1.0 + 0.01}}};
  auto objective = [&] { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; };
  const auto r = gradcheck::probe("square", objective, t, 200, 3);
  EXPECT_GT(r.failures, 0);
  EXPECT_LT(r.failures, 200);
}

TEST(Conv1d, SamePaddingAgainstDirectSum) {
  std::mt19937_64 rng(1);
  nn::Conv1d<double> conv(2, 3, 5);
  conv.init(rng, 1.0);
  std::vector<nn::ParamView<double>> params;
  conv.collect("c", params);
  gradcheck::fill_normal(params[1].value, rng);
  Batch<double> x(2, 2, 9), y;
  gradcheck::fill_normal(x.data, rng);
  conv.forward(x, y, 1);
  ASSERT_EQ(y.n, 2);
  ASSERT_EQ(y.channels, 3);
  ASSERT_EQ(y.length, 9);
  const auto& w = params[0].value;
  for (int b = 0; b < 2; ++b)
    for (int o = 0; o < 3; ++o)
      for (int t = 0; t < 9; ++t) {
        double s = params[1].value[static_cast<std::size_t>(o)];
        for (int i = 0; i < 2; ++i)
          for (int k = 0; k < 5; ++k) {
            const int src = t + k - 2;
            if (src < 0 || src >= 9) continue;
            s += w[static_cast<std::size_t>((o * 2 + i) * 5 + k)] * x.row(b, i)[src];
          }
        EXPECT_NEAR(y.row(b, o)[t], s, 1e-12);
      }
}

TEST(Conv1d, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(2);
  nn::Conv1d<double> conv(4, 8, 7);
  conv.init(rng, 1.0);
  Batch<double> x(3, 4, 40), y1, y4;
  gradcheck::fill_normal(x.data, rng);
  conv.forward(x, y1, 1);
  conv.forward(x, y4, 4);
  EXPECT_EQ(y1.data, y4.data);
  Batch<double> dy = y1, dx1, dx4;
  gradcheck::fill_normal(dy.data, rng);
  conv.backward(x, dy, &dx1, 1);
  std::vector<nn::ParamView<double>> p;
  conv.collect("c", p);
  const std::vector<double> g1(p[0].grad.begin(), p[0].grad.end());
  conv.backward(x, dy, &dx4, 4);
  EXPECT_EQ(dx1.data, dx4.data);
  EXPECT_EQ(g1, std::vector<double>(p[0].grad.begin(), p[0].grad.end()));
}

TEST(BatchNorm1d, TrainModeNormalizesEachChannel) {
  std::mt19937_64 rng(3);
  nn::BatchNorm1d<double> bn(3);
  Batch<double> x(5, 3, 20), y;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int b = 0; b < 5; ++b)
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 20; ++t) x.row(b, c)[t] = 10.0 * c - 4.0 + (c + 1) * 3.0 * g(rng);
  bn.forward(x, y, nn::Mode::Train, 1);
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int b = 0; b < 5; ++b)
      for (int t = 0; t < 20; ++t) {
        s += y.row(b, c)[t];
        s2 += y.row(b, c)[t] * y.row(b, c)[t];
      }
    const double mean = s / 100.0;
    const double var = s2 / 100.0 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 1e-5) << c;
    // eps = 1e-5 shrinks the variance by var/(var+eps); channel variance >= ~9.
    EXPECT_NEAR(var, 1.0, 1e-5) << c;
  }
}

TEST(BatchNorm1d, RunningStatisticsAndEvalMode) {
  nn::BatchNorm1d<double> bn(1, 0.5);
  Batch<double> x(1, 1, 4), y;
  x.data = {1.0, 2.0, 3.0, 4.0};  // mean 2.5, unbiased variance 5/3
  bn.forward(x, y, nn::Mode::Train, 1);
  EXPECT_NEAR(bn.running_var()[0], 0.5 * 1.0 + 0.5 * (5.0 / 3.0), 1e-12);
  std::vector<std::pair<std::string, std::span<double>>> bufs;
  bn.collect_buffers("bn", bufs);
  ASSERT_EQ(bufs.size(), 2u);
  EXPECT_NEAR(bufs[0].second[0], 1.25, 1e-12);
  bn.forward(x, y, nn::Mode::Eval, 1);
  const double sd = std::sqrt(0.5 + 0.5 * 5.0 / 3.0 + 1e-5);
  EXPECT_NEAR(y.data[0], (1.0 - 1.25) / sd, 1e-12);
  // Eval mode leaves running statistics untouched.
  EXPECT_NEAR(bufs[0].second[0], 1.25, 1e-12);
}

TEST(MaxPool1d, DropsTrailingSamplesAndRoutesGradient) {
  nn::MaxPool1d<double> pool(4);
  Batch<double> x(1, 1, 10), y, dx;
  x.data = {1, 5, 2, 0, -1, -3, -2, -9, 100, 100};
  pool.forward(x, y);
  ASSERT_EQ(y.length, 2);
  EXPECT_EQ(y.data[0], 5.0);
  EXPECT_EQ(y.data[1], -1.0);
  Batch<double> dy = y;
  dy.data = {2.0, 3.0};
  pool.backward(dy, dx);
  const std::vector<double> expect = {0, 2, 0, 0, 3, 0, 0, 0, 0, 0};
  EXPECT_EQ(dx.data, expect);
}

TEST(Relu, ClampsAndMasks) {
  nn::Relu<double> relu;
  Batch<double> x(1, 1, 4), y, dx;
  x.data = {-1.0, 0.0, 2.0, -0.5};
  relu.forward(x, y);
  EXPECT_EQ(y.data, (std::vector<double>{0.0, 0.0, 2.0, 0.0}));
  Batch<double> dy = y;
  dy.data = {1.0, 1.0, 1.0, 1.0};
  relu.backward(y, dy, dx);
  EXPECT_EQ(dx.data, (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(Loss, L2IsEuclideanDistance) {
  std::vector<double> pred = {3.0, 4.0}, grad(2);
  const double target[2] = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(nn::l2_loss<double>(pred, target, grad), 5.0);
  EXPECT_NEAR(grad[0], 0.6, 1e-12);
  EXPECT_NEAR(grad[1], 0.8, 1e-12);
}

TEST(Loss, CrossEntropyMatchesLogSoftmax) {
  std::vector<double> logits = {1.0, 2.0, 3.0}, grad(3);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(nn::cross_entropy<double>(logits, 1, grad), -std::log(std::exp(2.0) / z), 1e-12);
  EXPECT_NEAR(grad[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(grad[1], std::exp(2.0) / z - 1.0, 1e-12);
  // Large logits stay finite.
  std::vector<double> big = {1000.0, -1000.0};
  std::vector<double> g2(2);
  EXPECT_NEAR(nn::cross_entropy<double>(big, 0, g2), 0.0, 1e-12);
  EXPECT_THROW(nn::cross_entropy<double>(big, 2, g2), ValidationError);
}

TEST(Optimizer, SgdMomentumSteps) {
  std::vector<double> value = {1.0}, grad = {0.5};
  std::vector<nn::ParamView<double>> p = {{"w", value, grad}};
  nn::Optimizer<double> opt(nn::OptimizerKind::Sgd, 0.1, 0.0);
  opt.step(p);
  EXPECT_NEAR(value[0], 1.0 - 0.1 * 0.5, 1e-15);
  opt.step(p);  // velocity 0.9 * 0.5 + 0.5
  EXPECT_NEAR(value[0], 0.95 - 0.1 * 0.95, 1e-15);
}

TEST(Optimizer, AdamFirstStepIsLearningRateSized) {
  std::vector<double> value = {1.0, -1.0}, grad = {0.001, -300.0};
  std::vector<nn::ParamView<double>> p = {{"w", value, grad}};
  nn::Optimizer<double> opt(nn::OptimizerKind::Adam, 0.01, 0.0);
  opt.step(p);
  EXPECT_NEAR(value[0], 1.0 - 0.01, 1e-7);
  EXPECT_NEAR(value[1], -1.0 + 0.01, 1e-7);
}

TEST(Optimizer, AdamMinimisesQuadratic) {
  std::vector<double> value = {5.0, -3.0}, grad(2);
  std::vector<nn::ParamView<double>> p = {{"w", value, grad}};
  nn::Optimizer<double> opt(nn::OptimizerKind::Adam, 0.05, 0.0);
  for (int i = 0; i < 2000; ++i) {
    grad[0] = 2.0 * (value[0] - 1.0);
    grad[1] = 2.0 * (value[1] + 2.0);
    opt.step(p);
  }
  EXPECT_NEAR(value[0], 1.0, 1e-3);
  EXPECT_NEAR(value[1], -2.0, 1e-3);
}

TEST(Optimizer, WeightDecayShrinksWithZeroGradient) {
  std::vector<double> value = {2.0}, grad = {0.0};
  std::vector<nn::ParamView<double>> p = {{"w", value, grad}};
  nn::Optimizer<double> opt(nn::OptimizerKind::Sgd, 0.1, 0.5);
  opt.step(p);
  EXPECT_NEAR(value[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}
