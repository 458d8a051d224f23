#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "otfit/costs.hpp"
#include "otfit/error.hpp"
#include "otfit/rng.hpp"
#include "test_util.hpp"

namespace otfit {
namespace {

using testing::points_1d;

const CostSpec kL1{Metric::L1, 1.0};
const CostSpec kL2sq{Metric::L2, 2.0};

TEST(Cost, Examples) {
  const Point o{0.0, 0.0}, y{3.0, 4.0};
  EXPECT_DOUBLE_EQ(cost(kL1, o, y), 7.0);
  EXPECT_DOUBLE_EQ(cost(kL2sq, o, y), 25.0);
  const Point x{0.2, -1.0};
  EXPECT_EQ(cost(kL1, x, x), 0.0);
  EXPECT_DOUBLE_EQ(cost(CostSpec(Metric::L2, 1.0), o, y), 5.0);
  EXPECT_DOUBLE_EQ(cost(CostSpec(Metric::L1, 3.0), o, y), 343.0);
}

TEST(Cost, Beta) {
  EXPECT_EQ(CostSpec(Metric::L2, 2.0).beta(), 0.5);
  EXPECT_EQ(CostSpec(Metric::L1, 1.0).beta(), 1.0);
  EXPECT_TRUE(kL1.kinked_at_zero());
  EXPECT_FALSE(kL2sq.kinked_at_zero());
}

TEST(Cost, RejectsBadInput) {
  EXPECT_THROW(CostSpec(Metric::L1, 0.5), InvalidInput);
  EXPECT_THROW(CostSpec(Metric::L1, INFINITY), InvalidInput);
  EXPECT_THROW(cost(kL1, Point{0.0}, Point{0.0, 1.0}), InvalidInput);
  EXPECT_THROW(cost(kL1, Point{NAN}, Point{0.0}), InvalidInput);
  EXPECT_THROW(cost(kL1, Point{0.0}, Point{INFINITY}), InvalidInput);
  EXPECT_THROW(parse_metric("l3"), InvalidInput);
  EXPECT_EQ(parse_metric("L2"), Metric::L2);
}

TEST(Cost, NonNegativeSymmetric) {
  Rng rng = make_rng(11);
  std::normal_distribution<double> n01;
  for (const CostSpec& spec : {kL1, kL2sq, CostSpec(Metric::L2, 1.0), CostSpec(Metric::L1, 2.5)}) {
    for (int t = 0; t < 200; ++t) {
      Point x(3), y(3);
      for (auto& v : x) v = n01(rng);
      for (auto& v : y) v = n01(rng);
      const double cxy = cost(spec, x, y);
      EXPECT_GT(cxy, 0.0);
      EXPECT_EQ(cxy, cost(spec, y, x));
      EXPECT_EQ(cost(spec, x, x), 0.0);
    }
  }
}

TEST(CostGradient, Examples) {
  EXPECT_EQ(cost_gradient_x(kL2sq, Point{1.0, 0.0}, Point{0.0, 0.0}), (Point{2.0, 0.0}));
  EXPECT_EQ(cost_gradient_x(kL1, Point{1.0, -2.0}, Point{0.0, 0.0}), (Point{1.0, -1.0}));
  EXPECT_EQ(cost_gradient_x(kL1, Point{0.0, 3.0}, Point{0.0, 0.0}), (Point{0.0, 1.0}));
  EXPECT_EQ(cost_gradient_x(CostSpec(Metric::L2, 1.0), Point{1.0}, Point{1.0}), (Point{0.0}));
  EXPECT_THROW(cost_gradient_x(kL1, Point{0.0}, Point{0.0, 0.0}), InvalidInput);
}

// Central differences with step 1e-5 at points whose coordinates differ by
// at least 1e-3 (so no kink lies within the stencil).
TEST(CostGradient, MatchesFiniteDifferences) {
  Rng rng = make_rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-5;
  int checked = 0;
  for (const CostSpec& spec : {kL1, kL2sq, CostSpec(Metric::L2, 1.0), CostSpec(Metric::L1, 1.5),
                               CostSpec(Metric::L2, 3.0)}) {
    for (int t = 0; t < 25; ++t) {
      Point x(4), y(4);
      for (std::size_t k = 0; k < 4; ++k) {
        y[k] = u(rng);
        do x[k] = u(rng);
        while (std::abs(x[k] - y[k]) < 1e-3);
      }
      const Point g = cost_gradient_x(spec, x, y);
      for (std::size_t k = 0; k < 4; ++k) {
        Point xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd = (cost(spec, xp, y) - cost(spec, xm, y)) / (2.0 * h);
        const double rel = std::abs(fd - g[k]) / std::max(std::abs(fd), std::abs(g[k]));
        EXPECT_LE(rel, 1e-4) << to_string(spec.metric()) << " p=" << spec.exponent() << " k=" << k;
      }
      ++checked;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(CTransform, Examples) {
  const Dataset ys = points_1d({0.0, 1.0});
  const Point x{0.3};
  auto r = c_transform(kL1, x, ys, std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(r.value, 0.3, 1e-15);
  EXPECT_EQ(r.index, 0u);
  EXPECT_NEAR(r.runner_up, 0.7, 1e-15);

  r = c_transform(kL1, x, ys, std::vector<double>{0.0, 0.5});
  EXPECT_NEAR(r.value, 0.2, 1e-15);
  EXPECT_EQ(r.index, 1u);

  for (double delta : {-3.0, 0.25, 17.0}) {
    const auto s = c_transform(kL1, x, ys, std::vector<double>{delta, 0.5 + delta});
    EXPECT_NEAR(s.value, 0.2 - delta, 1e-12);
    EXPECT_EQ(s.index, 1u);
  }
}

TEST(CTransform, TiesGoToSmallestIndex) {
  const Dataset ys = points_1d({-1.0, 1.0, 1.0});
  EXPECT_EQ(c_transform(kL1, Point{0.0}, ys, std::vector<double>(3, 0.0)).index, 0u);
  EXPECT_EQ(c_transform(kL1, Point{2.0}, ys, std::vector<double>(3, 0.0)).index, 1u);
}

TEST(CTransform, RejectsBadInput) {
  const Dataset ys = points_1d({0.0, 1.0});
  EXPECT_THROW(c_transform(kL1, Point{0.0}, ys, std::vector<double>{0.0}), InvalidInput);
  EXPECT_THROW(c_transform(kL1, Point{0.0, 1.0}, ys, std::vector<double>{0.0, 0.0}), InvalidInput);
  EXPECT_THROW(c_transform(kL1, Point{NAN}, ys, std::vector<double>{0.0, 0.0}), InvalidInput);
  EXPECT_THROW(c_transform(kL1, Point{0.0}, Dataset{}, std::vector<double>{}), InvalidInput);
}

class CTransformProperties : public ::testing::TestWithParam<CostSpec> {};

TEST_P(CTransformProperties, MinShiftAndBatchAgree) {
  const CostSpec spec = GetParam();
  Rng rng = make_rng(13);
  std::normal_distribution<double> n01;
  PointSet ypts(40, 3);
  for (auto& v : ypts.data()) v = n01(rng);
  const Dataset ys(ypts, "random");
  std::vector<double> psi(40);
  for (auto& v : psi) v = n01(rng);
  PointSet xs(200, 3);
  for (auto& v : xs.data()) v = n01(rng);

  const auto batch = c_transform_batch(spec, xs, ys, psi);
  std::vector<std::size_t> active = {1, 4, 5, 9, 22, 39};
  const auto sub = c_transform_batch(spec, xs, ys, psi, active);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto r = c_transform(spec, xs[j], ys, psi);
    // min property, with equality at the argmin
    for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_LE(r.value, cost(spec, xs[j], ys[i]) - psi[i]);
    EXPECT_EQ(r.value, cost(spec, xs[j], ys[r.index]) - psi[r.index]);
    EXPECT_GE(r.runner_up, r.value);
    // batch path is bit-identical to the single-point path
    EXPECT_EQ(batch[j].value, r.value);
    EXPECT_EQ(batch[j].index, r.index);
    EXPECT_EQ(batch[j].runner_up, r.runner_up);
    const auto rs = c_transform_over(spec, xs[j], ys, psi, active);
    EXPECT_EQ(sub[j].value, rs.value);
    EXPECT_EQ(sub[j].index, rs.index);
    // uniform shift
    for (double delta : {-0.75, 2.5}) {
      std::vector<double> shifted = psi;
      for (auto& v : shifted) v += delta;
      const auto s = c_transform(spec, xs[j], ys, shifted);
      EXPECT_EQ(s.index, r.index);
      EXPECT_NEAR(s.value, r.value - delta, 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Metrics, CTransformProperties,
                         ::testing::Values(CostSpec(Metric::L1, 1.0), CostSpec(Metric::L2, 2.0),
                                           CostSpec(Metric::L2, 1.0), CostSpec(Metric::L1, 1.5)));

TEST(CTransform, BatchHandlesWideTargets) {
  // More targets than one cache block at D = 784.
  Rng rng = make_rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointSet ypts(300, 784);
  for (auto& v : ypts.data()) v = u(rng);
  const Dataset ys(ypts, "wide");
  std::vector<double> psi(300);
  for (auto& v : psi) v = 5.0 * u(rng);
  PointSet xs(7, 784);
  for (auto& v : xs.data()) v = u(rng);
  const auto batch = c_transform_batch(kL1, xs, ys, psi);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto r = c_transform(kL1, xs[j], ys, psi);
    EXPECT_EQ(batch[j].value, r.value);
    EXPECT_EQ(batch[j].index, r.index);
  }
}

}  // namespace
}  // namespace otfit
