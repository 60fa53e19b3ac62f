#include <gtest/gtest.h>

#include "nnn/model.hpp"
#include "toy.hpp"

using namespace nnn;

namespace {

struct ToyModel {
  MediaTensor x;
  ParamStore<double> store;
  NnnModel<double> model;
  ToyModel(int G, int T, int D, const ModelConfig& cfg) : x(test::toy_tensor(G, T, D)) {
    model = NnnModel<double>(cfg, x.channels(), G, D, store);
    std::vector<Cell> cells;
    for (int g = 0; g < G; ++g) {
      for (int t = 0; t < T; ++t) cells.push_back({g, t});
    }
    model.set_normalization(store, fit_normalization(x, cells));
  }
};

GradCheckReport check_full_loss(bool mixing, double balancing) {
  const int G = 3, T = 10, D = 8;
  ToyModel m(G, T, D, test::toy_model_config(mixing));
  const auto x = m.model.encode(m.store, m.x);
  const auto ys = m.model.sales_targets(m.store, m.x);
  const auto yq = m.model.search_targets(m.store, m.x);
  const LossCells cells = test::all_cells(G, T);
  const double l1 = m.model.config().l1;
  GradCheckOptions opt;
  opt.exhaustive_limit = 20000;
  // Small steps keep the differences from straddling ReLU kinks.
  opt.step = 1e-6;
  opt.floor = 1e-4;
  return grad_check(
      [&](const ParamStore<double>& s) {
        auto& store = const_cast<ParamStore<double>&>(s);
        return m.model.loss(store, x, T, ys, yq, cells, balancing, l1, false).total;
      },
      [&](ParamStore<double>& s) { m.model.loss(s, x, T, ys, yq, cells, balancing, l1, true); }, m.store, opt);
}

}  // namespace

TEST(NnnModel, FullLossGradientCheck) {
  for (bool mixing : {false, true}) {
    const auto report = check_full_loss(mixing, 0.5);
    EXPECT_LT(report.max_rel_error, 1e-4) << "mixing=" << mixing << " worst " << report.worst_param;
    EXPECT_GT(report.checked, 1000u);
  }
}

TEST(NnnModel, SalesOnlyLeavesSearchHeadWithoutGradient) {
  ToyModel m(2, 6, 4, test::toy_model_config());
  const auto x = m.model.encode(m.store, m.x);
  m.model.loss(m.store, x, 6, m.model.sales_targets(m.store, m.x), m.model.search_targets(m.store, m.x),
               test::all_cells(2, 6), 1.0, 0.0, true);
  bool any_sales = false;
  for (const auto& e : m.store.entries()) {
    if (e.name.rfind("search_head", 0) == 0) {
      EXPECT_EQ(e.grad.cwiseAbs().maxCoeff(), 0.0) << e.name;
    } else if (e.name.rfind("sales_head", 0) == 0) {
      any_sales = any_sales || e.grad.cwiseAbs().maxCoeff() > 0.0;
    }
  }
  EXPECT_TRUE(any_sales);
}

TEST(NnnModel, PureSalesMse) {
  const int G = 2, T = 5;
  ToyModel m(G, T, 4, test::toy_model_config());
  const auto x = m.model.encode(m.store, m.x);
  const auto ys = m.model.sales_targets(m.store, m.x);
  const auto cells = test::all_cells(G, T);
  const auto out = m.model.forward(m.store, x, T, false);
  const double mse = (out.sales - ys).squaredNorm() / (G * T);
  const LossValue v = m.model.loss(m.store, x, T, ys, m.model.search_targets(m.store, m.x), cells, 1.0, 0.0, false);
  EXPECT_NEAR(v.total, mse, 1e-12);
  EXPECT_EQ(v.penalty, 0.0);

  // Feeding the model's own outputs as targets gives zero data loss.
  const LossValue perfect = m.model.loss(m.store, x, T, out.sales, m.model.search_targets(m.store, m.x), cells, 1.0,
                                         0.0, false);
  EXPECT_EQ(perfect.total, 0.0);
}

TEST(NnnModel, PenaltyIsLinearInLambda) {
  const int G = 2, T = 5;
  ToyModel m(G, T, 4, test::toy_model_config());
  const auto x = m.model.encode(m.store, m.x);
  const auto ys = m.model.sales_targets(m.store, m.x);
  const auto yq = m.model.search_targets(m.store, m.x);
  const auto cells = test::all_cells(G, T);
  const double base = m.model.loss(m.store, x, T, ys, yq, cells, 0.5, 0.0, false).total;
  const double one = m.model.loss(m.store, x, T, ys, yq, cells, 0.5, 0.01, false).total;
  const double two = m.model.loss(m.store, x, T, ys, yq, cells, 0.5, 0.02, false).total;
  EXPECT_NEAR(two - base, 2.0 * (one - base), 1e-12);
  EXPECT_NEAR(one - base, 0.01 * m.store.l1_norm(), 1e-12);

  for (auto& e : m.store.entries()) {
    if (e.trainable) e.value.setZero();
  }
  const LossValue zero = m.model.loss(m.store, x, T, ys, yq, cells, 0.5, 5.0, false);
  EXPECT_EQ(zero.penalty, 0.0);
  EXPECT_GE(zero.total, 0.0);
}

TEST(NnnModel, PredictionsIgnoreStoredSales) {
  ToyModel m(2, 8, 4, test::toy_model_config(true));
  const auto a = m.model.predict(m.store, m.x);
  MediaTensor y = m.x;
  for (int g = 0; g < 2; ++g) {
    for (int t = 0; t < 8; ++t) y.set_scalar(g, t, 0, 1e4f * (g + t + 1));
  }
  const auto b = m.model.predict(m.store, y);
  EXPECT_EQ(a.sales, b.sales);
}

TEST(NnnModel, CausalThroughFullStack) {
  ToyModel m(2, 9, 4, test::toy_model_config(true));
  const auto a = m.model.predict(m.store, m.x);
  MediaTensor y = m.x;
  for (int g = 0; g < 2; ++g) {
    for (int c = 1; c < 4; ++c) {
      for (int d = 0; d < 4; ++d) y.at(g, 6, c, d) += 3.0f;
    }
  }
  const auto b = m.model.predict(m.store, y);
  EXPECT_TRUE(a.sales.leftCols(6) == b.sales.leftCols(6));
  EXPECT_FALSE(a.sales.col(6).isApprox(b.sales.col(6)));
}

TEST(NnnModel, NoLayersSingleChannelIsHead) {
  ModelConfig cfg = test::toy_model_config();
  cfg.n_layers = 0;
  cfg.sales_channels = {"search"};
  ToyModel m(2, 4, 4, cfg);
  const auto x = m.model.encode(m.store, m.x);
  const auto out = m.model.forward(m.store, x, 4, false);
  CounterRng rng(0);
  ParamStore<double> fresh;
  SalesHead<double> head(fresh, "sales_head/channel1", 4, 2, true, cfg.head, rng);
  for (auto& e : fresh.entries()) e.value = m.store.value(*m.store.find(e.name));
  EXPECT_TRUE(out.sales.isApprox(head.forward(fresh, x[1], 4), 1e-14));
}

TEST(NnnModel, ContributionsSumToPrediction) {
  ToyModel m(2, 6, 4, test::toy_model_config());
  const auto p = m.model.predict(m.store, m.x);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 6);
  for (const auto& c : p.contributions) sum += c;
  EXPECT_TRUE(sum.isApprox(p.sales, 1e-12));
  EXPECT_EQ(p.contributions.size(), 3u);
  EXPECT_EQ(p.search.size(), 2u);
  EXPECT_EQ(p.search[0].cols(), 4);
}

TEST(NnnModel, ParameterCountAtTypicalSize) {
  MediaTensor x = test::toy_tensor(1, 1, 256);
  ParamStore<float> store;
  NnnModel<float> model(ModelConfig{}, x.channels(), 100, 256, store);
  EXPECT_GT(store.parameter_count(), 1000000u);
}

TEST(NnnModel, EmptyCellsRejected) {
  ToyModel m(1, 4, 4, test::toy_model_config());
  const auto x = m.model.encode(m.store, m.x);
  EXPECT_ANY_THROW(m.model.loss(m.store, x, 4, m.model.sales_targets(m.store, m.x),
                                m.model.search_targets(m.store, m.x), LossCells{}, 0.5, 0.0, false));
}

TEST(NnnModel, ShapeMismatchRejected) {
  ToyModel m(2, 4, 4, test::toy_model_config());
  EXPECT_ANY_THROW(m.model.encode(m.store, test::toy_tensor(3, 4, 4)));
}

TEST(Normalization, MeanVolumeAndSales) {
  MediaTensor x(1, 2, {{"sales", ChannelKind::target, 1}, {"search", ChannelKind::organic, 2}, {"tv", ChannelKind::media, 2}},
                2);
  x.set_scalar(0, 0, 0, 4.0f);
  x.set_scalar(0, 1, 0, -8.0f);
  x.at(0, 0, 1, 0) = 3.0f;
  x.at(0, 0, 1, 1) = 4.0f;
  x.at(0, 1, 1, 0) = 1.0f;
  const Normalization n = fit_normalization(x, {{0, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(n.channel_scale[1], 3.0);
  EXPECT_DOUBLE_EQ(n.channel_scale[2], 1.0);  // all zero
  EXPECT_DOUBLE_EQ(n.sales_scale, 6.0);
}

TEST(LossCells, SearchCellsStopBeforeTrainEnd) {
  SplitSets sets;
  sets.train = {{0, 0}, {1, 3}};
  const LossCells c = loss_cells(sets, 2, 4);
  EXPECT_EQ(c.sales, sets.train);
  EXPECT_EQ(c.search.size(), 8u);
  for (const Cell& cell : c.search) EXPECT_LT(cell.t, 4);
}

TEST(NnnModel, LogScaleGradientCheck) {
  const int G = 2, T = 5, D = 4;
  ModelConfig cfg = test::toy_model_config();
  cfg.head.log_scale = true;
  cfg.n_layers = 1;
  ToyModel m(G, T, D, cfg);
  const auto x = m.model.encode(m.store, m.x);
  const auto ys = m.model.sales_targets(m.store, m.x);
  const auto yq = m.model.search_targets(m.store, m.x);
  const LossCells cells = test::all_cells(G, T);
  const auto report = grad_check(
      [&](const ParamStore<double>& s) {
        return m.model.loss(const_cast<ParamStore<double>&>(s), x, T, ys, yq, cells, 0.7, 0.0, false).total;
      },
      [&](ParamStore<double>& s) { m.model.loss(s, x, T, ys, yq, cells, 0.7, 0.0, true); }, m.store);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param;
}
