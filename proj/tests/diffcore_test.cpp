#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "nnn/diffcore.hpp"

using namespace nnn;
using Md = Matrix<double>;

namespace {

Md random_matrix(int r, int c, std::uint64_t seed) {
  CounterRng rng(seed);
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(Dense, IdentityAndAffine) {
  ParamStore<double> store;
  CounterRng rng(1);
  auto layer = Dense<double>::create(store, "d", 2, 2, rng);
  store.value(layer.weight) = Md::Identity(2, 2);
  store.value(layer.bias) = Md::Zero(1, 2);
  Md x(1, 2);
  x << 1, 2;
  EXPECT_TRUE(layer.forward(store, x).isApprox(x));
  store.value(layer.bias) << 3, 3;
  Md expect(1, 2);
  expect << 4, 5;
  EXPECT_TRUE(layer.forward(store, x).isApprox(expect));
}

TEST(Dense, WeightGradientIsOuterProduct) {
  ParamStore<double> store;
  CounterRng rng(2);
  auto layer = Dense<double>::create(store, "d", 3, 4, rng);
  const Md x = random_matrix(5, 3, 7);
  store.zero_grad();
  layer.backward(store, x, Md::Ones(5, 4));
  // d sum(xW + b) / dW = x^T 1
  const Md oracle = x.transpose() * Md::Ones(5, 4);
  EXPECT_TRUE(store.grad(layer.weight).isApprox(oracle, 1e-12));
  EXPECT_TRUE(store.grad(layer.bias).isApprox(Md::Constant(1, 4, 5.0)));

  const auto report = grad_check(
      [&](const ParamStore<double>& s) { return layer.forward(s, x).sum(); },
      [&](ParamStore<double>& s) { layer.backward(s, x, Md::Ones(5, 4)); }, store);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Activations, Values) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(50.0), 50.0, 1e-12);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  Md x(1, 3);
  x << -1, 0, 2;
  Md r = relu(x);
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_EQ(r(0, 2), 2.0);
}

TEST(Softmax, EqualScoresMaskedRowAndTemperature) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Md s(3, 4);
  s << 2, 2, 2, 2, -inf, -inf, -inf, -inf, 1, -inf, 1, -inf;
  const Md w = softmax_rows<double>(s, 1.0);
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(w(0, c), 0.25);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(w(1, c), 0.0);
  EXPECT_FALSE(w.hasNaN());
  EXPECT_DOUBLE_EQ(w(2, 0), 0.5);
  EXPECT_EQ(w(2, 1), 0.0);

  Md p(1, 2);
  p << 1, 0;
  const Md sharp = softmax_rows<double>(p, 0.01);
  EXPECT_GT(sharp(0, 0), 1.0 - 1e-12);
}

TEST(Softmax, BackwardMatchesDifferences) {
  ParamStore<double> store;
  const auto id = store.add("scores", random_matrix(3, 5, 4));
  const Md upstream = random_matrix(3, 5, 5);
  const double tau = 0.7;
  const auto report = grad_check(
      [&](const ParamStore<double>& s) {
        return (softmax_rows<double>(s.value(id), tau).array() * upstream.array()).sum();
      },
      [&](ParamStore<double>& s) {
        const Md w = softmax_rows<double>(s.value(id), tau);
        s.grad(id) += softmax_rows_backward<double>(w, upstream, tau);
      },
      store);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(MlpResnet, ZeroLayersIsTwoAffineMaps) {
  ParamStore<double> store;
  CounterRng rng(3);
  MlpResnet<double> mlp(store, "m", 3, {0, 5, true, std::nullopt}, rng);
  const Md x = random_matrix(4, 3, 9);
  const auto& in = store.value(*store.find("m/dense_in/kernel"));
  const auto& in_b = store.value(*store.find("m/dense_in/bias"));
  const auto& out = store.value(*store.find("m/dense_out/kernel"));
  const auto& out_b = store.value(*store.find("m/dense_out/bias"));
  const Md oracle = ((x * in).rowwise() + in_b.row(0)) * out + out_b.replicate(4, 1);
  EXPECT_TRUE(mlp.forward(store, x).isApprox(oracle, 1e-12));
  EXPECT_EQ(mlp.output_dim(), 3);
}

TEST(MlpResnet, ZeroBlocksLeaveInputProjection) {
  ParamStore<double> store;
  CounterRng rng(4);
  MlpResnet<double> mlp(store, "m", 3, {2, 6, false, std::nullopt}, rng);
  for (int i = 0; i < 2; ++i) {
    store.value(*store.find("m/block" + std::to_string(i) + "/kernel")).setZero();
    store.value(*store.find("m/block" + std::to_string(i) + "/bias")).setZero();
  }
  const Md x = random_matrix(4, 3, 10);
  const Md proj = (x * store.value(*store.find("m/dense_in/kernel"))).rowwise() +
                  store.value(*store.find("m/dense_in/bias")).row(0);
  EXPECT_TRUE(mlp.forward(store, x).isApprox(proj, 1e-12));
}

TEST(MlpResnet, GradientCheck) {
  ParamStore<double> store;
  CounterRng rng(5);
  MlpResnet<double> mlp(store, "m", 3, {2, 5, true, std::nullopt}, rng);
  const Md x = random_matrix(6, 3, 11);
  const Md w = random_matrix(6, 3, 12);
  GradCheckOptions opt;
  opt.step = 1e-3;
  const auto report = grad_check(
      [&](const ParamStore<double>& s) { return (mlp.forward(s, x).array() * w.array()).sum(); },
      [&](ParamStore<double>& s) {
        typename MlpResnet<double>::Cache cache;
        mlp.forward(s, x, &cache);
        mlp.backward(s, cache, w, false);
      },
      store, opt);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param;
}

TEST(MlpResnet, InputGradient) {
  ParamStore<double> store;
  CounterRng rng(6);
  MlpResnet<double> mlp(store, "m", 3, {1, 4, false, 2}, rng);
  const auto xid = store.add("x", random_matrix(5, 3, 13));
  const Md w = random_matrix(5, 2, 14);
  // Freeze the MLP so only the input coordinates are checked.
  for (auto& e : store.entries()) e.trainable = e.name == "x";
  const auto report = grad_check(
      [&](const ParamStore<double>& s) { return (mlp.forward(s, s.value(xid)).array() * w.array()).sum(); },
      [&](ParamStore<double>& s) {
        typename MlpResnet<double>::Cache cache;
        mlp.forward(s, s.value(xid), &cache);
        s.grad(xid) += mlp.backward(s, cache, w);
      },
      store);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore<double> store;
  store.add("theta", random_matrix(3, 4, 20));
  const auto report = grad_check(
      [](const ParamStore<double>& s) { return s.entries()[0].value.squaredNorm(); },
      [](ParamStore<double>& s) { s.entries()[0].grad += 2.0 * s.entries()[0].value; }, store);
  EXPECT_LT(report.max_rel_error, 1e-9);
  EXPECT_EQ(report.checked, 12u);
}

TEST(GradCheck, ConstantHasZeroGradient) {
  ParamStore<double> store;
  store.add("theta", random_matrix(2, 2, 21));
  const auto report = grad_check([](const ParamStore<double>&) { return 3.0; }, [](ParamStore<double>&) {}, store);
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.max_abs_error, 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  ParamStore<double> store;
  store.add("theta", random_matrix(2, 2, 22));
  const auto report = grad_check(
      [](const ParamStore<double>& s) { return s.entries()[0].value.squaredNorm(); },
      [](ParamStore<double>& s) { s.entries()[0].grad += 3.0 * s.entries()[0].value; }, store);
  EXPECT_FALSE(report.passed);
}

TEST(ParamStore, CountsPenaltyAndSparsity) {
  ParamStore<double> store;
  Md a(1, 4);
  a << 1, -2, 0, 1e-9;
  store.add("a", a);
  store.add("frozen", Md::Constant(2, 2, 5.0), false);
  EXPECT_EQ(store.parameter_count(), 4u);
  EXPECT_NEAR(store.l1_norm(), 3.0 + 1e-9, 1e-15);
  EXPECT_DOUBLE_EQ(store.sparsity(1e-6), 0.5);
  store.zero_grad();
  store.add_l1_grad(2.0);
  Md expect(1, 4);
  expect << 2, -2, 0, 2;
  EXPECT_TRUE(store.entries()[0].grad.isApprox(expect));
  EXPECT_EQ(store.entries()[1].grad.sum(), 0.0);
}

TEST(ParamStore, CastAndAssign) {
  ParamStore<double> d;
  d.add("w", random_matrix(2, 3, 30));
  ParamStore<float> f = d.cast<float>();
  EXPECT_NEAR(f.entries()[0].value(1, 2), d.entries()[0].value(1, 2), 1e-6);
  ParamStore<double> back;
  back.add("w", Md::Zero(2, 3));
  back.assign_from(f);
  EXPECT_NEAR(back.entries()[0].value(0, 0), d.entries()[0].value(0, 0), 1e-6);
  ParamStore<double> wrong;
  wrong.add("w", Md::Zero(3, 3));
  EXPECT_ANY_THROW(wrong.assign_from(f));
}

TEST(Checkpoint, RoundTrip) {
  ParamStore<float> store;
  store.add("a", random_matrix(3, 2, 40).cast<float>());
  store.add("scale", Matrix<float>::Constant(1, 4, 2.0f), false);
  const auto path = std::filesystem::temp_directory_path() / "nnn_ckpt.nnp";
  save_params(store, path);
  const ParamStore<float> loaded = load_params(path);
  ASSERT_EQ(loaded.entries().size(), 2u);
  EXPECT_EQ(loaded.entries()[0].value, store.entries()[0].value);
  EXPECT_FALSE(loaded.entries()[1].trainable);
  std::filesystem::remove(path);
}

TEST(Init, GlorotBounds) {
  CounterRng rng(50);
  const Md w = glorot_uniform<double>(30, 20, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.5 * limit);
}
