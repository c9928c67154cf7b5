#include <gtest/gtest.h>

#include <cmath>

#include "aggnet/errors.hpp"
#include "aggnet/losses.hpp"
#include "aggnet/rng.hpp"
#include "oracles.hpp"

using namespace aggnet;
using namespace aggnet::f64;

namespace {

Tensor random_tensor(Shape s, CounterRng& rng, double lo, double hi) {
  Tensor t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Huber, ClosedFormBranches) {
  Tensor gt = Tensor::scalar(0.0);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(0.5), gt, 1.0).item(), 0.125);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(3.0), gt, 1.0).item(), 2.5);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(-3.0), gt, 1.0).item(), 2.5);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(1.0), gt, 1.0).item(), 0.5);
}

TEST(Huber, ZeroOnIdenticalInputs) {
  CounterRng rng(41);
  Tensor p = random_tensor({2, 1, 5, 5}, rng, 0.0, 10.0);
  EXPECT_EQ(huber_loss(p, p, 1.0).item(), 0.0);
  EXPECT_EQ(edge_loss(p, p).item(), 0.0);
}

TEST(EdgeLoss, HandComputedExample) {
  Tensor pred({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  Tensor gt({1, 1, 2, 2}, 0.0);
  EXPECT_DOUBLE_EQ(edge_loss(pred, gt).item(), 2.0);
}

TEST(EdgeLoss, InvariantToConstantOffsets) {
  CounterRng rng(42);
  Tensor p = random_tensor({2, 1, 6, 6}, rng, 0.0, 4.0);
  Tensor g = random_tensor({2, 1, 6, 6}, rng, 0.0, 4.0);
  // On a 1/64 grid every sum and difference below is exact.
  for (double& v : p.data()) v = std::round(v * 64) / 64;
  for (double& v : g.data()) v = std::round(v * 64) / 64;
  Tensor shifted(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) shifted[i] = p[i] + 8.0;
  Tensor g_shifted(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g_shifted[i] = g[i] - 4.0;
  const double base = edge_loss(p, g).item();
  EXPECT_EQ(edge_loss(shifted, g).item(), base);
  EXPECT_EQ(edge_loss(p, g_shifted).item(), base);
}

TEST(TotalLoss, LinearInWeights) {
  CounterRng rng(43);
  Tensor p = random_tensor({2, 1, 8, 8}, rng, 0.0, 5.0);
  Tensor g = random_tensor({2, 1, 8, 8}, rng, 0.5, 5.0);
  const double pixels = 128.0;
  const double h = huber_loss(p, g, 1.0).item();
  const double e = edge_loss(p, g).item();
  const double total = total_loss(p, g, LossWeights{0.7, 0.3, 1.0}).item();
  EXPECT_NEAR(total, (0.7 * h + 0.3 * e) / pixels, 1e-12);
  const double only_h = total_loss(p, g, LossWeights{1.0, 0.0, 1.0}).item();
  const double only_e = total_loss(p, g, LossWeights{0.0, 1.0, 1.0}).item();
  EXPECT_NEAR(total, 0.7 * only_h + 0.3 * only_e, 1e-12);
}

TEST(TotalLoss, RejectsBadInputs) {
  Tensor a({1, 1, 2, 2}), b({1, 1, 2, 3});
  EXPECT_THROW(total_loss(a, b, LossWeights{}), ShapeError);
  EXPECT_THROW(total_loss(a, a, LossWeights{-1, 1, 1}), ConfigError);
  EXPECT_THROW(total_loss(a, a, LossWeights{0, 0, 1}), ConfigError);
  EXPECT_THROW(total_loss(a, a, LossWeights{1, 1, 0}), ConfigError);
}

TEST(Metrics, UniformScaleError) {
  Tensor gt({1, 1, 4, 4}, 2.0);
  Tensor pred({1, 1, 4, 4}, 2.4);
  const MetricReport r = evaluate(pred, gt);
  EXPECT_NEAR(r.rel, 0.2, 1e-12);
  EXPECT_NEAR(r.rmse, 0.4, 1e-12);
  EXPECT_EQ(r.delta[0], 0.0);
  EXPECT_EQ(r.delta[1], 100.0);
  EXPECT_EQ(r.pixels, 16u);
}

TEST(Metrics, MatchesLoopOracleWithMasking) {
  CounterRng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = random_tensor({1, 1, 8, 8}, rng, 0.1, 6.0);
    Tensor g = random_tensor({1, 1, 8, 8}, rng, 0.1, 6.0);
    Tensor mask({1, 1, 8, 8});
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (rng.bernoulli(0.2)) g[i] = 0.0;
      mask[i] = rng.bernoulli(0.8) ? 1.0 : 0.0;
    }
    for (bool use_mask : {false, true}) {
      const MetricReport r = use_mask ? evaluate(p, g, mask) : evaluate(p, g);
      const auto o = use_mask ? oracle::evaluate(values(p), values(g), values(mask))
                              : oracle::evaluate(values(p), values(g));
      ASSERT_EQ(r.pixels, o.pixels);
      EXPECT_LT(oracle::rel_diff(r.rmse, o.rmse), 1e-10);
      EXPECT_LT(oracle::rel_diff(r.rel, o.rel), 1e-10);
      for (int t = 0; t < 4; ++t) EXPECT_LT(oracle::rel_diff(r.delta[t], o.delta[t]), 1e-10);
    }
  }
}

TEST(Metrics, DeltaMonotoneInThreshold) {
  CounterRng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor p = random_tensor({1, 1, 6, 6}, rng, 0.0, 8.0);
    Tensor g = random_tensor({1, 1, 6, 6}, rng, 0.1, 8.0);
    const MetricReport r = evaluate(p, g);
    for (int t = 1; t < 4; ++t) ASSERT_LE(r.delta[t - 1], r.delta[t]);
  }
}

TEST(Metrics, NoValidPixels) {
  Tensor z({1, 1, 2, 2}, 0.0);
  EXPECT_THROW(evaluate(z, z), NumericalError);
}

TEST(Metrics, AccumulatorPoolsPixels) {
  Tensor p1({1, 1, 1, 2}, std::vector<double>{1, 2});
  Tensor g1({1, 1, 1, 2}, std::vector<double>{1, 1});
  Tensor p2({1, 1, 1, 2}, std::vector<double>{3, 3});
  Tensor g2({1, 1, 1, 2}, std::vector<double>{3, 1});
  MetricAccumulator acc;
  acc.add(p1.data(), g1.data());
  acc.add(p2.data(), g2.data());
  const MetricReport r = acc.report();
  EXPECT_EQ(r.pixels, 4u);
  EXPECT_NEAR(r.rmse, std::sqrt((1.0 + 4.0) / 4.0), 1e-15);
  EXPECT_NEAR(r.rel, (1.0 + 2.0) / 4.0, 1e-15);
}

TEST(Metrics, LineRoundTrip) {
  MetricReport r;
  r.rmse = 0.125;
  r.rel = 0.5;
  r.delta = {10, 20, 30, 40};
  r.pixels = 99;
  const MetricReport back = MetricReport::from_line(r.to_line());
  EXPECT_EQ(back.rmse, r.rmse);
  EXPECT_EQ(back.delta, r.delta);
  EXPECT_EQ(back.pixels, 99u);
  EXPECT_THROW(MetricReport::from_line("rmse=1 rel=2"), ParseError);
  EXPECT_THROW(MetricReport::from_line("rmse=x rel=2 d110=1 d125=1 d156=1 d195=1"), ParseError);
}
