#include <gtest/gtest.h>

#include "nnn/probe.hpp"
#include "toy.hpp"

using namespace nnn;

namespace {

MediaTensor constant_tensor(int G, int T, int D, float v) {
  MediaTensor x = test::toy_tensor(G, T, D);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) x.at(g, t, 1, d) = v + static_cast<float>(d);
    }
  }
  return x;
}

struct Model {
  MediaTensor x = test::toy_tensor(3, 10, 4, 9);
  ParamStore<float> store;
  NnnModel<float> model;
  Model() {
    model = NnnModel<float>(test::toy_model_config(), x.channels(), 3, 4, store);
    model.set_normalization(store, fit_normalization(x, all()));
  }
  std::vector<Cell> all() const {
    std::vector<Cell> cells;
    for (int g = 0; g < 3; ++g) {
      for (int t = 0; t < 10; ++t) cells.push_back({g, t});
    }
    return cells;
  }
};

}  // namespace

TEST(Anchor, ConstantSingleAndSymmetric) {
  const MediaTensor c = constant_tensor(2, 3, 3, 2.0f);
  const Eigen::VectorXd a = anchor(c, 1);
  EXPECT_NEAR(a(0), 2.0, 1e-6);
  EXPECT_NEAR(a(2), 4.0, 1e-6);

  const MediaTensor one = test::toy_tensor(1, 1, 3);
  const Eigen::VectorXd s = anchor(one, 2);
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(s(d), one.at(0, 0, 2, d), 1e-6);

  MediaTensor pm = test::toy_tensor(1, 2, 3);
  for (int d = 0; d < 3; ++d) pm.at(0, 1, 3, d) = -pm.at(0, 0, 3, d);
  EXPECT_NEAR(anchor(pm, 3).norm(), 0.0, 1e-7);
}

TEST(GeoContext, Means) {
  const MediaTensor c = constant_tensor(2, 4, 3, 1.0f);
  const Eigen::MatrixXd mu = geo_context(c, 1);
  EXPECT_NEAR(mu(1, 2), 3.0, 1e-6);
  const MediaTensor x = test::toy_tensor(2, 2, 3);
  const Eigen::MatrixXd m2 = geo_context(x, 2);
  EXPECT_NEAR(m2(1, 0), 0.5 * (x.at(1, 0, 2, 0) + x.at(1, 1, 2, 0)), 1e-6);
  const MediaTensor single = x.time_slice(0, 1);
  EXPECT_NEAR(geo_context(single, 2)(0, 1), x.at(0, 0, 2, 1), 1e-6);
}

TEST(Prober, InputLayout) {
  Model m;
  ProbeConfig cfg;
  cfg.scale = 2.0;
  const Prober p(m.x, cfg, m.all());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
  v(1) = 5.0;
  const MediaTensor in = p.input(v);
  EXPECT_EQ(in.times(), 1);
  const int s = m.x.channel_index("search");
  EXPECT_NEAR(in.at(2, 0, s, 1), 2.0 + p.anchor()(1), 1e-5);
  EXPECT_NEAR(in.at(2, 0, s, 0), p.anchor()(0), 1e-5);
  const Eigen::MatrixXd mu = geo_context(m.x, 3);
  EXPECT_NEAR(in.at(1, 0, 3, 2), mu(1, 2), 1e-5);
  EXPECT_EQ(in.at(0, 0, 0, 0), 0.0f);
  EXPECT_ANY_THROW(p.input(Eigen::VectorXd::Zero(5)));
}

TEST(Prober, ZeroScaleGivesAnchorScore) {
  Model m;
  ProbeConfig cfg;
  cfg.scale = 0.0;
  const Prober p(m.x, cfg, m.all());
  const ModelPredictor predict(m.model, m.store);
  const double a = p.score(predict, Eigen::VectorXd::Ones(4));
  const double b = p.score(predict, Eigen::VectorXd::LinSpaced(4, -3, 7));
  EXPECT_EQ(a, b);
}

TEST(Prober, DeterministicAndReadOnly) {
  Model m;
  const ParamStore<float> before = m.store;
  const MediaTensor x_before = m.x;
  const Prober p(m.x, ProbeConfig{}, m.all());
  EXPECT_GT(p.scale(), 0.0);
  const ModelPredictor predict(m.model, m.store);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(4, 1, 2);
  EXPECT_EQ(p.score(predict, v), p.score(predict, v));
  for (std::size_t k = 0; k < before.entries().size(); ++k) {
    EXPECT_EQ(before.entries()[k].value, m.store.entries()[k].value);
  }
  EXPECT_TRUE(x_before == m.x);
}

TEST(Prober, RejectsTargetChannel) {
  Model m;
  ProbeConfig cfg;
  cfg.channel = "sales";
  EXPECT_ANY_THROW(Prober(m.x, cfg, m.all()));
}

TEST(NormStd, SampleStandardDeviation) {
  MediaTensor x = test::toy_tensor(1, 3, 2);
  for (int t = 0; t < 3; ++t) {
    x.at(0, t, 1, 0) = static_cast<float>(t + 1);
    x.at(0, t, 1, 1) = 0.0f;
  }
  EXPECT_NEAR(norm_std(x, 1, {{0, 0}, {0, 1}, {0, 2}}), 1.0, 1e-9);
}

TEST(Landscape, CountsAndIdenticalSamples) {
  Model m;
  const Prober p(m.x, ProbeConfig{}, m.all());
  const ModelPredictor predict(m.model, m.store);
  ProbeConfig cfg;
  cfg.samples = 10;
  const Eigen::VectorXd best = Eigen::VectorXd::LinSpaced(4, 0, 1);
  const Eigen::VectorXd worst = -best;
  const auto points = landscape(predict, p, best, worst, cfg);
  EXPECT_EQ(points.size(), 10u);
  int near_worst = 0;
  for (const auto& pt : points) near_worst += pt.source;
  EXPECT_EQ(near_worst, 5);

  const auto same = landscape(predict, p, best, best, cfg);
  for (const auto& pt : same) EXPECT_EQ(pt.score, same.front().score);
}

TEST(Landscape, ScoresIndependentOfOrder) {
  Model m;
  const Prober p(m.x, ProbeConfig{}, m.all());
  const ModelPredictor predict(m.model, m.store);
  ProbeConfig cfg;
  cfg.samples = 6;
  const Eigen::MatrixXd samples = landscape_samples(Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(4), cfg);
  std::vector<double> forward, backward;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) forward.push_back(p.score(predict, samples.row(i).transpose()));
  for (Eigen::Index i = samples.rows() - 1; i >= 0; --i) {
    backward.push_back(p.score(predict, samples.row(i).transpose()));
  }
  std::reverse(backward.begin(), backward.end());
  EXPECT_EQ(forward, backward);
}

TEST(Pca2d, ShapeAndVariance) {
  Eigen::MatrixXd rows(4, 3);
  rows << 1, 0, 0, -1, 0, 0, 0, 0.5, 0, 0, -0.5, 0;
  const Eigen::MatrixXd xy = pca_2d(rows);
  EXPECT_EQ(xy.rows(), 4);
  EXPECT_EQ(xy.cols(), 2);
  EXPECT_NEAR(std::abs(xy(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(xy(2, 1)), 0.5, 1e-12);
  EXPECT_EQ(pca_2d(rows), xy);
}
