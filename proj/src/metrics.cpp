#include "nnn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "nnn/errors.hpp"

namespace nnn {

double mape(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual, int* excluded) {
  if (pred.size() != actual.size()) fail(ErrorCategory::shape_mismatch, "mape: size mismatch");
  double sum = 0.0;
  int used = 0;
  int skipped = 0;
  for (Eigen::Index i = 0; i < actual.size(); ++i) {
    if (actual(i) == 0.0) {
      ++skipped;
      continue;
    }
    sum += std::abs(actual(i) - pred(i)) / std::abs(actual(i));
    ++used;
  }
  if (skipped > 0 && !excluded) std::fprintf(stderr, "warning: mape skipped %d zero actuals\n", skipped);
  if (excluded) *excluded = skipped;
  return used > 0 ? 100.0 * sum / used : 0.0;
}

double r_squared(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
  if (pred.size() != actual.size() || actual.size() == 0) fail(ErrorCategory::shape_mismatch, "r_squared: bad sizes");
  const double sse = (actual - pred).squaredNorm();
  const double sst = (actual.array() - actual.mean()).matrix().squaredNorm();
  if (sst == 0.0) return sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - sse / sst;
}

Rollup national_rollup(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual, const std::vector<Cell>& cells) {
  std::map<int, std::pair<double, double>> weeks;
  for (const Cell& c : cells) {
    auto& w = weeks[c.t];
    w.first += pred(c.g, c.t);
    w.second += actual(c.g, c.t);
  }
  Rollup r;
  r.pred.resize(static_cast<Eigen::Index>(weeks.size()));
  r.actual.resize(r.pred.size());
  Eigen::Index i = 0;
  for (const auto& [t, v] : weeks) {
    r.weeks.push_back(t);
    r.pred(i) = v.first;
    r.actual(i) = v.second;
    ++i;
  }
  return r;
}

SplitMetrics evaluate_cells(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& actual,
                            const std::vector<Cell>& cells) {
  SplitMetrics m;
  m.cells = static_cast<int>(cells.size());
  if (cells.empty()) return m;
  const Rollup r = national_rollup(pred, actual, cells);
  m.weeks = static_cast<int>(r.weeks.size());
  int skipped = 0;
  m.mape = mape(r.pred, r.actual, &skipped);
  m.r2 = r_squared(r.pred, r.actual);
  Eigen::VectorXd p(m.cells);
  Eigen::VectorXd a(m.cells);
  for (int i = 0; i < m.cells; ++i) {
    p(i) = pred(cells[i].g, cells[i].t);
    a(i) = actual(cells[i].g, cells[i].t);
  }
  m.cell_mape = mape(p, a, &skipped);
  m.cell_r2 = r_squared(p, a);
  return m;
}

}  // namespace nnn
