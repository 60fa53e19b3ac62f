#include <gtest/gtest.h>

#include "nnn/metrics.hpp"

using namespace nnn;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Mape, HandExample) {
  // |100-110|/100 = 0.1, |200-180|/200 = 0.1
  EXPECT_DOUBLE_EQ(mape(vec({110, 180}), vec({100, 200})), 10.0);
  EXPECT_DOUBLE_EQ(mape(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
}

TEST(Mape, ZeroActualsExcluded) {
  int excluded = -1;
  EXPECT_DOUBLE_EQ(mape(vec({5, 110}), vec({0, 100}), &excluded), 10.0);
  EXPECT_EQ(excluded, 1);
}

TEST(RSquared, HandExample) {
  // SSE = 100 + 400, SST = 2 * 50^2
  EXPECT_DOUBLE_EQ(r_squared(vec({110, 180}), vec({100, 200})), 0.9);
  EXPECT_DOUBLE_EQ(r_squared(vec({4, 5, 6}), vec({4, 5, 6})), 1.0);
  EXPECT_DOUBLE_EQ(r_squared(vec({5, 5, 5}), vec({4, 5, 6})), 0.0);
  EXPECT_LE(r_squared(vec({9, 1, 0}), vec({4, 5, 6})), 1.0);
}

TEST(Rollup, SingleGeoIsIdentity) {
  Eigen::MatrixXd p(1, 3), a(1, 3);
  p << 1, 2, 3;
  a << 4, 5, 6;
  const Rollup r = national_rollup(p, a, {{0, 0}, {0, 1}, {0, 2}});
  EXPECT_EQ(r.weeks, (std::vector<int>{0, 1, 2}));
  EXPECT_TRUE(r.pred.isApprox(p.row(0).transpose()));
  EXPECT_TRUE(r.actual.isApprox(a.row(0).transpose()));
}

TEST(Rollup, TwoGeos) {
  Eigen::MatrixXd p(2, 2);
  p << 1, 2, 3, 4;
  const Rollup r = national_rollup(p, p, {{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  EXPECT_TRUE(r.pred.isApprox(vec({4, 6})));
}

TEST(Rollup, RestrictedToSplitWeeks) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 5);
  const Rollup r = national_rollup(p, p, {{0, 3}, {1, 3}, {1, 4}});
  EXPECT_EQ(r.weeks, (std::vector<int>{3, 4}));
  EXPECT_TRUE(r.pred.isApprox(vec({2, 1})));
}

TEST(Rollup, DecompositionIsAdditive) {
  Eigen::MatrixXd a(2, 3), b(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  b << 0.5, 0, 1, 2, 2, 2;
  const std::vector<Cell> cells{{0, 0}, {1, 0}, {0, 2}, {1, 2}};
  const Rollup ra = national_rollup(a, a, cells);
  const Rollup rb = national_rollup(b, b, cells);
  const Rollup rt = national_rollup(a + b, a + b, cells);
  EXPECT_TRUE(rt.pred.isApprox(ra.pred + rb.pred));
}

TEST(EvaluateCells, CountsAndPerfectFit) {
  Eigen::MatrixXd p(2, 4);
  p << 1, 2, 3, 4, 5, 6, 7, 9;
  const SplitMetrics m = evaluate_cells(p, p, {{0, 1}, {1, 1}, {0, 3}});
  EXPECT_EQ(m.cells, 3);
  EXPECT_EQ(m.weeks, 2);
  EXPECT_DOUBLE_EQ(m.mape, 0.0);
  EXPECT_DOUBLE_EQ(m.r2, 1.0);
  EXPECT_DOUBLE_EQ(m.cell_r2, 1.0);
}
