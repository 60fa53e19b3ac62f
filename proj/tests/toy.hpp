#pragma once

#include <Eigen/Core>

#include "nnn/media_tensor.hpp"
#include "nnn/rng.hpp"

namespace nnn::test {

/// sales, search, search_ads, youtube with random positive sales and
/// Gaussian embeddings for the other channels.
inline MediaTensor toy_tensor(int geos, int times, int dim, std::uint64_t seed = 3) {
  MediaTensor x(geos, times,
                {{"sales", ChannelKind::target, 1},
                 {"search", ChannelKind::organic, dim},
                 {"search_ads", ChannelKind::media, dim},
                 {"youtube", ChannelKind::media, dim}},
                dim);
  CounterRng rng(seed);
  for (int g = 0; g < geos; ++g) {
    for (int t = 0; t < times; ++t) {
      x.set_scalar(g, t, 0, static_cast<float>(rng.uniform(5.0, 15.0)));
      for (int c = 1; c < 4; ++c) {
        for (int d = 0; d < dim; ++d) x.at(g, t, c, d) = static_cast<float>(rng.normal());
      }
    }
  }
  return x;
}

}  // namespace nnn::test

#include "nnn/model.hpp"

namespace nnn::test {

/// Small widths so finite differences over every parameter stay cheap.
inline ModelConfig toy_model_config(bool mixing = false) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_ff = 12;
  cfg.head = {2, 8, false};
  cfg.attention.hidden = 6;
  cfg.attention.lookback_window = 4;
  cfg.attention.channel_mixing = mixing;
  cfg.l1 = 1e-3;
  return cfg;
}

/// Sales cells are every (g, t); search cells every (g, t < T - 1).
inline LossCells all_cells(int geos, int times) {
  LossCells cells;
  for (int g = 0; g < geos; ++g) {
    for (int t = 0; t < times; ++t) {
      cells.sales.push_back({g, t});
      if (t + 1 < times) cells.search.push_back({g, t});
    }
  }
  return cells;
}

}  // namespace nnn::test
