#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pfkit/baselines.hpp"

using namespace pfkit;

namespace {

// Hand-assembled dataset with a known affine ground truth, bypassing the
// solver entirely: y = x A^T + c.
Dataset affine_dataset(int rows, int n_load, std::uint64_t seed, const Matrix& a,
                       const Eigen::VectorXd& c, double label_noise = 0.0) {
  Dataset ds;
  ds.n_load = n_load;
  ds.x.resize(rows, 2 * n_load);
  Rng draw(seed);
  for (int r = 0; r < rows; ++r)
    for (int i = 0; i < 2 * n_load; ++i) ds.x(r, i) = draw.normal();
  ds.y = ds.x * a.transpose();
  ds.y.rowwise() += c.transpose();
  if (label_noise > 0.0)
    for (int r = 0; r < rows; ++r)
      for (int i = 0; i < 2 * n_load; ++i) ds.y(r, i) += label_noise * draw.normal();
  ds.split.assign(rows, Split::Train);
  for (int r = 0; r < rows; ++r) {
    if (r % 5 == 3) ds.split[r] = Split::Val;
    if (r % 5 == 4) ds.split[r] = Split::Test;
  }
  return ds;
}

Matrix gather(const Dataset& ds, const Matrix& m, Split s) {
  auto idx = ds.indices_of(s);
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

}  // namespace

TEST_CASE("least squares recovers a planted affine map") {
  int n_load = 2;
  Matrix a(4, 4);
  a << 0.5, -0.2, 0.1, 0.0, 0.3, 0.8, 0.0, -0.1, -0.4, 0.2, 0.6, 0.05, 0.0, 0.1, -0.3, 0.9;
  Eigen::VectorXd c(4);
  c << 1.0, -0.5, 0.25, 0.0;
  Dataset ds = affine_dataset(120, n_load, 33, a, c);

  AffineFit fit = least_squares_fit(ds.x, ds.y, ds.indices_of(Split::Train));
  CHECK((fit.w - a).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((fit.c - c).cwiseAbs().maxCoeff() <= 1e-8);

  Matrix xt = gather(ds, ds.x, Split::Test);
  Matrix yt = gather(ds, ds.y, Split::Test);
  CHECK(mse(fit.apply(xt), yt) <= 1e-16);
}

TEST_CASE("gradient-trained affine model reaches a realizable optimum") {
  int n_load = 2;
  Matrix a(4, 4);
  a << 0.5, -0.2, 0.1, 0.0, 0.3, 0.8, 0.0, -0.1, -0.4, 0.2, 0.6, 0.05, 0.0, 0.1, -0.3, 0.9;
  Eigen::VectorXd c(4);
  c << 0.2, -0.1, 0.05, 0.3;
  Dataset ds = affine_dataset(100, n_load, 7, a, c);

  LrConfig cfg;
  cfg.lr = 0.01;  // larger steps than the preset to reach the floor fast
  cfg.epochs = 3000;
  cfg.seed = 1;
  TrainResult res = train_lr(ds, cfg);
  REQUIRE_FALSE(res.diverged);

  Matrix xt = gather(ds, ds.x, Split::Test);
  Matrix yt = gather(ds, ds.y, Split::Test);
  Matrix pred = predict(res.best, res.norm, xt);
  CHECK(mse(pred, yt) <= 1e-10);
}

TEST_CASE("gradient training never beats the closed-form least squares") {
  // non-realizable labels: the affine map plus noise; the closed form is
  // the optimum by construction
  int n_load = 2;
  Matrix a = Matrix::Identity(4, 4);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
  Dataset ds = affine_dataset(90, n_load, 13, a, c, 0.3);

  auto train_rows = ds.indices_of(Split::Train);
  AffineFit fit = least_squares_fit(ds.x, ds.y, train_rows);
  Matrix xtr = gather(ds, ds.x, Split::Train);
  Matrix ytr = gather(ds, ds.y, Split::Train);
  double optimum = mse(fit.apply(xtr), ytr);

  LrConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 2500;
  cfg.seed = 3;
  TrainResult res = train_lr(ds, cfg);
  REQUIRE_FALSE(res.diverged);
  Matrix pred = predict(res.model, res.norm, xtr);
  double trained = mse(pred, ytr);

  CHECK(trained >= optimum - 1e-10);
  // and with this budget it should sit close to the optimum, not above
  // it by much
  CHECK(trained <= 1.05 * optimum + 1e-12);
}

TEST_CASE("mlp architecture has the documented shape") {
  MlpConfig cfg;
  Rng rng(1);
  Model m = make_mlp_model(14, cfg, rng);
  REQUIRE(m.trunk.layers.size() == 8);  // 7 hidden + linear output
  CHECK_FALSE(m.double_head());

  // first and last hidden layers are wide (2n), middle ones 4n/3
  CHECK(m.trunk.layers[0].fan_in() == 28);
  CHECK(m.trunk.layers[0].fan_out() == 28);
  for (int i = 1; i <= 5; ++i) CHECK(m.trunk.layers[i].fan_out() == 19);
  CHECK(m.trunk.layers[6].fan_out() == 28);
  CHECK(m.trunk.layers[7].fan_out() == 28);
  CHECK(m.trunk.layers[7].act == Activation::Linear);
  for (int i = 0; i <= 6; ++i) {
    CHECK(m.trunk.layers[i].act == Activation::Relu);
    CHECK(m.trunk.layers[i].dropout_rate == cfg.dropout);
  }
  CHECK(m.trunk.layers[7].dropout_rate == 0.0);
  CHECK(m.alphas().empty());
}

TEST_CASE("affine model is a single linear layer") {
  Rng rng(1);
  Model m = make_lr_model(5, rng);
  REQUIRE(m.trunk.layers.size() == 1);
  CHECK(m.trunk.layers[0].fan_in() == 10);
  CHECK(m.trunk.layers[0].fan_out() == 10);
  CHECK(m.trunk.layers[0].act == Activation::Linear);
  CHECK(m.trunk.layers[0].dropout_rate == 0.0);
}

TEST_CASE("double-head model has the documented shape") {
  Pinn4pfConfig cfg;
  Rng rng(1);
  Model m = make_pinn4pf_model(14, cfg, rng);
  CHECK(m.double_head());
  REQUIRE(m.trunk.layers.size() == 2);
  for (const auto& l : m.trunk.layers) {
    CHECK(l.fan_in() == 28);
    CHECK(l.fan_out() == 28);
    CHECK(l.act == Activation::Relu);
  }
  for (const Stack* head : {&m.head_mu, &m.head_omega}) {
    REQUIRE(head->layers.size() == 5);  // 4 adaptive + linear output
    CHECK(head->layers[0].fan_in() == 28);
    for (int i = 0; i < 4; ++i) {
      CHECK(head->layers[i].fan_out() == 14);
      CHECK(head->layers[i].act == Activation::AdaptiveRelu);
      CHECK(head->layers[i].alpha == 1.0);
    }
    CHECK(head->layers[4].act == Activation::Linear);
    CHECK(head->layers[4].fan_out() == 14);
  }
  // relu ablation swaps the head activation
  Pinn4pfConfig relu_cfg;
  relu_cfg.adaptive_heads = false;
  Rng rng2(1);
  Model mr = make_pinn4pf_model(14, relu_cfg, rng2);
  CHECK(mr.head_mu.layers[0].act == Activation::Relu);
  CHECK(mr.alphas().empty());
}

TEST_CASE("model output concatenates the two heads") {
  Pinn4pfConfig cfg;
  cfg.dropout = 0.0;
  Rng rng(5);
  Model m = make_pinn4pf_model(3, cfg, rng);

  Matrix x(4, 6);
  Rng draw(8);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) x(r, c) = draw.normal();

  Rng fwd(0);
  Matrix out = m.forward(x, false, fwd);
  REQUIRE(out.rows() == 4);
  REQUIRE(out.cols() == 6);

  // heads see the shared trunk output; recompute by hand
  Rng f2(0);
  Matrix h = m.trunk.forward(x, false, f2);
  Matrix mu = m.head_mu.forward(h, false, f2);
  Matrix om = m.head_omega.forward(h, false, f2);
  CHECK(out.leftCols(3) == mu);
  CHECK(out.rightCols(3) == om);
}
