#include <gtest/gtest.h>

#include "nnn/attribution.hpp"
#include "toy.hpp"

using namespace nnn;

namespace {

/// Additive causal stand-in: sales(t) = |search_t| + 2 |youtube_t| + 0.5 |search_ads_t|,
/// search forecast(t) = `rate` * search_t (+ youtube_t when mediated).
struct Additive {
  double rate = 0.9;
  bool mediated = false;
  Forecast operator()(const MediaTensor& x, bool with_search) const {
    Forecast f;
    f.sales.resize(x.geos(), x.times());
    const int s = x.channel_index("search");
    const int sa = x.channel_index("search_ads");
    const int yt = x.channel_index("youtube");
    for (int g = 0; g < x.geos(); ++g) {
      for (int t = 0; t < x.times(); ++t) {
        f.sales(g, t) = channel_volume(x, g, t, s) + 2.0 * channel_volume(x, g, t, yt) +
                        0.5 * channel_volume(x, g, t, sa);
      }
      if (with_search) {
        Eigen::MatrixXd q(x.times(), x.dim());
        for (int t = 0; t < x.times(); ++t) {
          for (int d = 0; d < x.dim(); ++d) {
            q(t, d) = rate * x.at(g, t, s, d) + (mediated ? x.at(g, t, yt, d) : 0.0);
          }
        }
        f.search.push_back(q);
      }
    }
    return f;
  }
};

/// Emits the observed next-step search of a fixed reference tensor.
struct Oracle {
  const MediaTensor* truth;
  Forecast operator()(const MediaTensor& x, bool with_search) const {
    Forecast f = Additive{}(x, false);
    if (with_search) {
      const int s = truth->organic_channel();
      for (int g = 0; g < x.geos(); ++g) {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(x.times(), x.dim());
        for (int t = 0; t < x.times() && t + 1 < truth->times(); ++t) {
          for (int d = 0; d < x.dim(); ++d) q(t, d) = truth->at(g, t + 1, s, d);
        }
        f.search.push_back(q);
      }
    }
    return f;
  }
};

struct ToyTrained {
  MediaTensor x;
  ParamStore<float> store;
  NnnModel<float> model;
  explicit ToyTrained(ModelConfig cfg, int G = 2, int T = 14, int D = 4) : x(test::toy_tensor(G, T, D, 21)) {
    model = NnnModel<float>(cfg, x.channels(), G, D, store);
    std::vector<Cell> cells;
    for (int g = 0; g < G; ++g) {
      for (int t = 0; t < T; ++t) cells.push_back({g, t});
    }
    model.set_normalization(store, fit_normalization(x, cells));
  }
  ModelPredictor predictor() const { return ModelPredictor(model, store); }
};

}  // namespace

TEST(MixPercent, Normalizes) {
  const auto m = mix_percent({60, 10, 30});
  EXPECT_DOUBLE_EQ(m[0], 60.0);
  EXPECT_DOUBLE_EQ(m[1], 10.0);
  EXPECT_DOUBLE_EQ(m[2], 30.0);
  const auto scaled = mix_percent({6, 1, 3});
  EXPECT_DOUBLE_EQ(scaled[0], 60.0);
  EXPECT_EQ(mix_percent({0, 0}), (std::vector<double>{0, 0}));
}

TEST(WindowStarts, TilesWithHalfHorizonStride) {
  UnrollConfig c;
  c.prefix = 52;
  c.horizon = 30;
  EXPECT_EQ(window_starts(c, 130), (std::vector<int>{52, 67, 82, 97}));
  c.last_start = 75;
  EXPECT_EQ(window_starts(c, 130), (std::vector<int>{52, 67}));
  c.starts = {60};
  EXPECT_EQ(window_starts(c, 130), (std::vector<int>{60}));
  c.starts = {120};
  EXPECT_ANY_THROW(window_starts(c, 130));
}

TEST(ZeroOut, AlreadyZeroChannelGivesZero) {
  MediaTensor x = test::toy_tensor(2, 6, 3);
  const int sa = x.channel_index("search_ads");
  x.zero_channel(sa);
  EXPECT_EQ(zero_out_effect(Additive{}, x, sa, 0, 6), 0.0);
}

TEST(ZeroOut, AdditiveHeadMatchesContribution) {
  ModelConfig cfg = test::toy_model_config();
  cfg.n_layers = 0;
  ToyTrained m(cfg);
  const auto pred = m.model.predict(m.store, m.x, false);
  const auto& channels = m.model.sales_channels();
  const auto report = attribute_zero_out(m.predictor(), m.x, channels, 0, m.x.times());
  double total = 0.0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    EXPECT_NEAR(report.attributed[k], pred.contributions[k].sum(), 1e-4 * std::abs(pred.contributions[k].sum()));
    total += report.attributed[k];
  }
  // With every channel zeroed nothing remains, so the attributions decompose the prediction.
  EXPECT_NEAR(total, pred.sales.sum(), 1e-4 * pred.sales.sum());
}

TEST(ArUnroll, EmptyHorizon) {
  const MediaTensor x = test::toy_tensor(2, 6, 3);
  const auto traj = ar_unroll(Additive{}, x, 3, 0);
  EXPECT_EQ(traj.sales.cols(), 0);
  EXPECT_TRUE(traj.search.empty());
}

TEST(ArUnroll, ObservedSearchIsFixedPoint) {
  const MediaTensor x = test::toy_tensor(2, 10, 3);
  const Oracle oracle{&x};
  const auto traj = ar_unroll(oracle, x, 4, 6);
  const auto standard = oracle(x, false).sales;
  for (int k = 0; k < 6; ++k) {
    for (int g = 0; g < 2; ++g) EXPECT_NEAR(traj.sales(g, k), standard(g, 4 + k), 1e-5);
  }
}

TEST(ArUnroll, OneStepIsManualSplice) {
  ToyTrained m(test::toy_model_config(true));
  const auto predict = m.predictor();
  const int P = 6;
  const auto traj = ar_unroll(predict, m.x, P, 1);
  const Forecast prefix = predict(m.x.time_slice(0, P), true);
  MediaTensor spliced = m.x.time_slice(0, P + 1);
  const int s = m.x.organic_channel();
  for (int g = 0; g < m.x.geos(); ++g) {
    for (int d = 0; d < m.x.dim(); ++d) spliced.at(g, P, s, d) = static_cast<float>(prefix.search[g](P - 1, d));
  }
  const Forecast f = predict(spliced, false);
  for (int g = 0; g < m.x.geos(); ++g) EXPECT_DOUBLE_EQ(traj.sales(g, 0), f.sales(g, P));
}

TEST(ArUnroll, SalesAreNotFedBack) {
  ToyTrained m(test::toy_model_config());
  MediaTensor z = m.x;
  for (int g = 0; g < 2; ++g) {
    for (int t = 5; t < 9; ++t) z.set_scalar(g, t, 0, 1e6f);
  }
  EXPECT_EQ(ar_unroll(m.predictor(), m.x, 5, 4).sales, ar_unroll(m.predictor(), z, 5, 4).sales);
}

TEST(AttributeAr, NoMediationMatchesWindowedZeroOut) {
  const MediaTensor x = test::toy_tensor(2, 20, 3);
  UnrollConfig u;
  u.prefix = 5;
  u.horizon = 6;
  const std::vector<int> channels{x.channel_index("search_ads"), x.channel_index("youtube")};
  const auto ar = attribute_ar(Additive{}, x, channels, u);
  const auto zo = attribute_zero_out_windows(Additive{}, x, channels, u);
  ASSERT_EQ(ar.windows, zo.windows);
  for (std::size_t k = 0; k < channels.size(); ++k) EXPECT_NEAR(ar.attributed[k], zo.attributed[k], 1e-3);
}

TEST(AttributeAr, NoMediationRealModel) {
  ModelConfig cfg = test::toy_model_config();
  cfg.n_layers = 0;
  ToyTrained m(cfg);
  // search_inputs are (youtube, search): silence the youtube rows of the input layer.
  auto& kernel = m.store.value(*m.store.find("search_head/mlp/dense_in/kernel"));
  kernel.topRows(m.x.dim()).setZero();
  UnrollConfig u;
  u.prefix = 4;
  u.horizon = 4;
  const std::vector<int> yt{m.x.channel_index("youtube")};
  const auto ar = attribute_ar(m.predictor(), m.x, yt, u);
  const auto zo = attribute_zero_out_windows(m.predictor(), m.x, yt, u);
  EXPECT_NEAR(ar.attributed[0], zo.attributed[0], 1e-4 * std::abs(zo.attributed[0]));
}

TEST(AttributeAr, MediationRaisesMediaShare) {
  const MediaTensor x = test::toy_tensor(2, 20, 3);
  UnrollConfig u;
  u.prefix = 5;
  u.horizon = 6;
  const std::vector<int> channels{x.channel_index("search"), x.channel_index("youtube")};
  Additive mediated;
  mediated.mediated = true;
  const auto ar = attribute_ar(mediated, x, channels, u);
  const auto zo = attribute_zero_out_windows(mediated, x, channels, u);
  EXPECT_GT(ar.attributed[1], zo.attributed[1]);
}

TEST(AttributeAr, ZeroVolumeChannelAndOrderIndependence) {
  MediaTensor x = test::toy_tensor(2, 20, 3);
  x.zero_channel(x.channel_index("search_ads"));
  UnrollConfig u;
  u.prefix = 5;
  u.horizon = 4;
  u.starts = {5, 11};
  const std::vector<int> channels{x.channel_index("search_ads"), x.channel_index("youtube")};
  const auto a = attribute_ar(Additive{}, x, channels, u);
  EXPECT_EQ(a.attributed[0], 0.0);
  u.starts = {11, 5};
  const auto b = attribute_ar(Additive{}, x, channels, u);
  EXPECT_NEAR(a.attributed[1], b.attributed[1], 1e-9 * std::abs(a.attributed[1]));
}

TEST(Pause, EmptyWindowCoincides) {
  const MediaTensor x = test::toy_tensor(2, 10, 3);
  const PauseResult p = pause_simulation(Additive{}, x, x.channel_index("youtube"), 5, 0);
  EXPECT_EQ(p.standard_drop(), 0.0);
  EXPECT_EQ(p.ar_drop(), 0.0);
}

TEST(Pause, SeriesAndDrops) {
  const MediaTensor x = test::toy_tensor(2, 12, 3);
  Additive mediated;
  mediated.mediated = true;
  const PauseResult p = pause_simulation(mediated, x, x.channel_index("youtube"), 4, 6);
  EXPECT_EQ(p.baseline.size(), 6);
  EXPECT_GT(p.standard_drop(), 0.0);
  EXPECT_GE(p.ar_drop(), p.standard_drop());
  EXPECT_ANY_THROW(pause_simulation(mediated, x, 1, 8, 6));
}

TEST(ZeroChannelFrom, Window) {
  const MediaTensor x = test::toy_tensor(1, 6, 2);
  const MediaTensor z = zero_channel_from(x, 2, 2, 4);
  EXPECT_EQ(z.at(0, 1, 2, 0), x.at(0, 1, 2, 0));
  EXPECT_EQ(z.at(0, 2, 2, 1), 0.0f);
  EXPECT_EQ(z.at(0, 3, 2, 0), 0.0f);
  EXPECT_EQ(z.at(0, 4, 2, 0), x.at(0, 4, 2, 0));
  EXPECT_EQ(z.at(0, 3, 3, 0), x.at(0, 3, 3, 0));
}
