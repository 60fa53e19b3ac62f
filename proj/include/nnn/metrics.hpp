#pragma once

#include <vector>

#include <Eigen/Core>

#include "nnn/media_tensor.hpp"

namespace nnn {

/// 100 * mean(|a - p| / |a|) over entries with a != 0. `excluded` receives the
/// number of zero actuals skipped.
double mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual, int* excluded = nullptr);

/// 1 - SSE / SST, SST about the mean of `actual`.
double r_squared(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual);

struct Rollup {
  std::vector<int> weeks;  // ascending
  Eigen::VectorXd pred;
  Eigen::VectorXd actual;
};

/// Sums (G, T) grids over the geos of `cells`, one entry per week present in `cells`.
Rollup national_rollup(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual, const std::vector<Cell>& cells);

struct SplitMetrics {
  double mape = 0.0;  // national roll-up
  double r2 = 0.0;
  double cell_mape = 0.0;
  double cell_r2 = 0.0;
  int weeks = 0;
  int cells = 0;
};

SplitMetrics evaluate_cells(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual, const std::vector<Cell>& cells);

}  // namespace nnn
