#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <filesystem>

#include "pfkit/baselines.hpp"
#include "pfkit/pinn4pf.hpp"

using namespace pfkit;
using Cx = std::complex<double>;

namespace {

Network two_bus_reactive() {
  Network net;
  net.buses = {{1, BusKind::Reference, 12.47}, {2, BusKind::Load, 12.47}};
  net.lines = {{1, 2, 0.0, 0.1, 0.0}};
  return net;
}

Dataset dataset_on(const Network& net, const AdmittanceMatrix& y, int points, std::uint64_t seed,
                   double base_s = 0.1) {
  SamplingSpec spec;
  spec.base_s.assign(net.n_load(), base_s);
  spec.base_pf.assign(net.n_load(), 0.9);
  spec.pool_size = std::max(200, 4 * points);
  spec.seed = seed;
  auto pool = sample_scenarios(spec, net.n_load());
  return build_dataset(net, y, pool, points, seed);
}

// Neighbor sum computed from the full admittance matrix and the full
// network state (reference bus at 1+j0): sum_{i != k} Y_ki V_i.
Eigen::MatrixXcd full_matrix_psi(const Network& net, const AdmittanceMatrix& y, const Matrix& xm,
                                 const Matrix& ym) {
  auto li = net.load_indices();
  int n = static_cast<int>(li.size());
  Eigen::MatrixXcd out(xm.rows(), n);
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    std::vector<Cx> v(net.n_total(), Cx(1.0, 0.0));
    for (int k = 0; k < n; ++k) v[li[k]] = Cx(ym(r, k), ym(r, n + k));
    for (int k = 0; k < n; ++k) {
      Cx acc(0.0, 0.0);
      for (const auto& [j, yv] : y.row(li[k]))
        if (j != li[k]) acc += yv * v[j];
      out(r, k) = acc;
    }
  }
  return out;
}

bool model_near_kink(Model& m, const Matrix& x, double margin) {
  Rng rng(0);
  m.forward(x, false, rng);
  for (const Stack* s : {&m.trunk, &m.head_mu, &m.head_omega})
    for (const DenseLayer& l : s->layers)
      if (l.act != Activation::Linear &&
          (l.z_cache.array().abs() * std::abs(l.alpha) < margin).any())
        return true;
  return false;
}

double rel_err(double got, double want) {
  double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

bool models_identical(const Model& a, const Model& b) {
  auto stacks_equal = [](const Stack& s, const Stack& t) {
    if (s.layers.size() != t.layers.size()) return false;
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      const DenseLayer& x = s.layers[i];
      const DenseLayer& y = t.layers[i];
      if (x.w != y.w || x.b != y.b || x.alpha != y.alpha || x.act != y.act) return false;
    }
    return true;
  };
  return stacks_equal(a.trunk, b.trunk) && stacks_equal(a.head_mu, b.head_mu) &&
         stacks_equal(a.head_omega, b.head_omega);
}

}  // namespace

TEST_CASE("hidden function on a two-bus line: hand value and neighbor sum") {
  Network net = two_bus_reactive();
  AdmittanceMatrix y = build_admittance(net);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  REQUIRE(y_diag.size() == 1);
  CHECK(std::abs(y_diag(0) - Cx(0.0, -10.0)) <= 1e-12);

  SUBCASE("zero load, flat voltage") {
    // psi = S*/V* - Y_kk V = 0 - (-j10) = +j10, and the neighbor sum is
    // Y_21 * V_1 = +j10 * 1
    Matrix x(1, 2), ylab(1, 2);
    x << 0.0, 0.0;
    ylab << 1.0, 0.0;
    Eigen::MatrixXcd psi = compute_psi_from_labels(y_diag, x, ylab);
    CHECK(std::abs(psi(0, 0) - Cx(0.0, 10.0)) <= 1e-15);
  }

  SUBCASE("solved operating point") {
    LoadVector loads{{-0.1}, {-0.05}};
    PfSolution sol = solve_newton_raphson(net, y, loads, 1e-12, 50);
    REQUIRE(sol.converged());
    Matrix x(1, 2), ylab(1, 2);
    x << -0.1, -0.05;
    ylab << sol.state.mu[1], sol.state.omega[1];
    Eigen::MatrixXcd psi = compute_psi_from_labels(y_diag, x, ylab);
    // neighbor sum for bus 2 is Y_21 * V_1 = +j10 exactly
    CHECK(std::abs(psi(0, 0) - Cx(0.0, 10.0)) <= 1e-9);
  }
}

TEST_CASE("diagonal-only hidden function equals the full neighbor sum on datasets") {
  Network net = make_synthetic_feeder(15, 3);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 96, 5);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);

  Eigen::MatrixXcd psi = compute_psi_from_labels(y_diag, ds.x, ds.y);
  Eigen::MatrixXcd full = full_matrix_psi(net, y, ds.x, ds.y);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < psi.rows(); ++r)
    for (Eigen::Index k = 0; k < psi.cols(); ++k)
      worst = std::max(worst, std::abs(psi(r, k) - full(r, k)));
  CHECK(worst <= 1e-9);
}

TEST_CASE("physical reconstruction fixes the labels exactly") {
  Network net = make_synthetic_feeder(15, 3);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 64, 9);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  attach_psi(ds, y_diag);

  PhysicalEval ev = physical_model(y_diag, ds.x, ds.y, ds.psi);
  CHECK(ev.n_skipped == 0);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < ds.y.rows(); ++r)
    worst = std::max(worst, (ev.recon.row(r) - ds.y.row(r)).cwiseAbs().maxCoeff());
  CHECK(worst <= 1e-9);
}

TEST_CASE("hidden function anchors noisy training labels as their own fixed point") {
  Network net = make_synthetic_feeder(8, 5);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 60, 2);
  NoiseSpec ns;
  ns.level = 0.05;
  ns.seed = 3;
  ds = inject_noise(std::move(ds), ns);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  attach_psi(ds, y_diag);

  // the anchor is defined from the same corrupted view the trainer sees,
  // so the reconstruction returns those values even on noisy rows
  PhysicalEval ev = physical_model(y_diag, ds.x_view(), ds.y_view(), ds.psi);
  CHECK(ev.n_skipped == 0);
  for (Eigen::Index r = 0; r < ds.rows(); ++r)
    CHECK((ev.recon.row(r) - ds.y_view().row(r)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("reconstruction for one displaced bus equals the gauss-seidel update") {
  // With every other bus held at its label and psi taken as the exact
  // neighbor sum, f' for bus k is algebraically the same expression as
  // one gauss-seidel voltage update; the two must agree to rounding.
  Network net = make_synthetic_feeder(10, 17);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 12, 21);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  Eigen::MatrixXcd psi_full = full_matrix_psi(net, y, ds.x, ds.y);
  auto li = net.load_indices();
  int n = ds.n_load;

  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < n; ++k) {
      Matrix pred = ds.y.row(r);
      pred(0, k) += 0.07;  // displace one bus
      pred(0, n + k) -= 0.03;

      PhysicalEval ev =
          physical_model(y_diag, ds.x.row(r), pred, psi_full.row(r));
      REQUIRE(ev.n_skipped == 0);

      // gauss-seidel style update computed directly from the full matrix
      Cx vk(pred(0, k), pred(0, n + k));
      Cx s_conj(ds.x(r, k), -ds.x(r, n + k));
      Cx acc(0.0, 0.0);
      std::vector<Cx> v(net.n_total(), Cx(1.0, 0.0));
      for (int j = 0; j < n; ++j) v[li[j]] = Cx(ds.y(r, j), ds.y(r, n + j));
      v[li[k]] = vk;
      for (const auto& [j, yv] : y.row(li[k]))
        if (j != li[k]) acc += yv * v[j];
      Cx update = (s_conj / std::conj(vk) - acc) / y_diag(k);

      CHECK(std::abs(Cx(ev.recon(0, k), ev.recon(0, n + k)) - update) <= 1e-12);
    }
  }
}

TEST_CASE("composite loss matches a brute-force recomputation, skips included") {
  Network net = make_synthetic_feeder(6, 13);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 20, 4);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  attach_psi(ds, y_diag);
  int n = ds.n_load;

  // predictions: labels plus a deterministic perturbation, with one row
  // driven into the guard region so it must be skipped
  Matrix pred = ds.y;
  Rng draw(55);
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) pred(r, c) += 0.05 * draw.normal();
  pred.row(7).setZero();  // |V| = 0 < guard at every bus

  LossConfig lc;
  lc.beta0 = 0.29;
  lc.beta1 = 0.71;
  lc.y_diag = y_diag;
  LossResult res = composite_loss(pred, ds.y, ds.x, ds.psi, lc);
  CHECK(res.rows_skipped == 1);

  // brute-force supervised mse
  double sup = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      double d = pred(r, c) - ds.y(r, c);
      sup += d * d;
    }
  sup /= static_cast<double>(pred.size());

  // brute-force physical mse over non-skipped rows
  double phys = 0.0;
  int included = 0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (r == 7) continue;
    ++included;
    for (int k = 0; k < n; ++k) {
      Cx d(pred(r, k), -pred(r, n + k));
      Cx num(ds.x(r, k), -ds.x(r, n + k));
      Cx f = (num / d - ds.psi(r, k)) / y_diag(k);
      double du = f.real() - ds.y(r, k);
      double dw = f.imag() - ds.y(r, n + k);
      phys += du * du + dw * dw;
    }
  }
  phys /= static_cast<double>(included * 2 * n);

  CHECK(std::abs(res.supervised - sup) <= 1e-12);
  CHECK(std::abs(res.physical - phys) <= 1e-12);
  CHECK(std::abs(res.value - (0.29 * sup + 0.71 * phys)) <= 1e-12);

  // the skipped row receives only the supervised gradient
  Matrix sup_grad = mse_grad(pred, ds.y);
  for (Eigen::Index c = 0; c < pred.cols(); ++c)
    CHECK(res.grad(7, c) == 0.29 * sup_grad(7, c));
}

TEST_CASE("composite loss rejects invalid weight pairs") {
  Matrix m = Matrix::Ones(2, 2);
  Eigen::MatrixXcd psi(2, 1);
  psi.setZero();
  LossConfig lc;
  lc.beta0 = 0.5;
  lc.beta1 = 0.4;  // does not sum to one
  CHECK_THROWS_AS(composite_loss(m, m, m, psi, lc), ValidationError);
}

TEST_CASE("loss gradient with respect to predictions matches finite differences") {
  Network net = make_synthetic_feeder(5, 19);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 10, 6);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  attach_psi(ds, y_diag);

  Matrix pred = ds.y;
  Rng draw(77);
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) pred(r, c) += 0.03 * draw.normal();

  LossConfig lc;
  lc.beta0 = 0.4;
  lc.beta1 = 0.6;
  lc.y_diag = y_diag;
  LossResult res = composite_loss(pred, ds.y, ds.x, ds.psi, lc);
  REQUIRE(res.rows_skipped == 0);

  double h = 1e-6;
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      Matrix up = pred, down = pred;
      up(r, c) += h;
      down(r, c) -= h;
      double fd = (composite_loss(up, ds.y, ds.x, ds.psi, lc).value -
                   composite_loss(down, ds.y, ds.x, ds.psi, lc).value) /
                  (2.0 * h);
      INFO("entry (", r, ",", c, ")");
      CHECK(rel_err(res.grad(r, c), fd) <= 1e-4);
    }
}

TEST_CASE("full training gradient through the reconstruction branch passes fd") {
  // two-bus toy model: every parameter of the double-head network is
  // checked against a centered difference of the composite loss
  Network net = two_bus_reactive();
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 16, 3, 0.4);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  attach_psi(ds, y_diag);

  Pinn4pfConfig cfg;
  cfg.n_shared_layers = 1;
  cfg.n_head_layers = 1;
  cfg.dropout = 0.0;

  Normalization norm = fit_normalization(ds.x, ds.indices_of(Split::Train));
  Matrix xn = norm.apply(ds.x);

  // Deterministic scan for a well-conditioned fixture: pre-activations
  // clear of the relu kink (discontinuous gradient) and predicted
  // voltages well away from zero (the reciprocal in the reconstruction
  // makes the loss too curved there for a centered difference at h=1e-6).
  auto min_pred_voltage = [&](Model& m) {
    Rng r(0);
    Matrix pred = m.forward(xn, false, r);
    double mn = std::numeric_limits<double>::infinity();
    for (Eigen::Index row = 0; row < pred.rows(); ++row)
      mn = std::min(mn, std::hypot(pred(row, 0), pred(row, 1)));
    return mn;
  };
  Model model;
  bool found = false;
  for (std::uint64_t s = 13; s < 45 && !found; ++s) {
    Rng init(s);
    Model candidate = make_pinn4pf_model(1, cfg, init);
    candidate.head_mu.layers[0].alpha = 1.15;  // off the relu point
    candidate.head_omega.layers[0].alpha = 0.85;
    // park predictions near the flat-start voltage
    candidate.head_mu.layers[1].b[0] = 1.0;
    if (!model_near_kink(candidate, xn, 1e-4) && min_pred_voltage(candidate) >= 0.5) {
      model = std::move(candidate);
      found = true;
    }
  }
  REQUIRE(found);

  LossConfig lc;
  lc.beta0 = 0.29;
  lc.beta1 = 0.71;
  lc.y_diag = y_diag;

  auto loss = [&] {
    Rng r(0);
    Matrix pred = model.forward(xn, false, r);
    return composite_loss(pred, ds.y, ds.x, ds.psi, lc).value;
  };

  Rng r0(0);
  model.zero_grad();
  Matrix pred = model.forward(xn, false, r0);
  LossResult res = composite_loss(pred, ds.y, ds.x, ds.psi, lc);
  REQUIRE(res.rows_skipped == 0);
  model.backward(res.grad);

  int checked = 0;
  for (const auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.size; ++i) {
      double keep = p.value[i];
      double h = 1e-6;
      p.value[i] = keep + h;
      double up = loss();
      p.value[i] = keep - h;
      double down = loss();
      p.value[i] = keep;
      double fd = (up - down) / (2.0 * h);
      INFO(p.path, "[", i, "]");
      CHECK(rel_err(p.grad[i], fd) <= 1e-4);
      ++checked;
    }
  }
  // one shared trunk layer plus two heads of adaptive-relu + linear:
  // (4+2) + 2 * ((2+1+1) + (1+1)) parameters
  CHECK(checked == 18);
}

TEST_CASE("loss weighting schedule follows the documented ramp") {
  // before the ramp: supervised only
  auto [b0a, b1a] = beta_schedule(0, 0.71, 100, 1000);
  CHECK(b0a == 1.0);
  CHECK(b1a == 0.0);
  auto [b0b, b1b] = beta_schedule(99, 0.71, 100, 1000);
  CHECK(b1b == 0.0);

  // midpoint of the ramp: exactly half the cap
  auto [b0c, b1c] = beta_schedule(550, 0.71, 100, 1000);
  CHECK(std::abs(b1c - 0.355) <= 1e-15);
  CHECK(std::abs(b0c + b1c - 1.0) <= 1e-15);

  // at and beyond the end: pinned to the cap
  auto [b0d, b1d] = beta_schedule(1000, 0.71, 100, 1000);
  CHECK(b1d == 0.71);
  auto [b0e, b1e] = beta_schedule(5000, 0.71, 100, 1000);
  CHECK(b1e == 0.71);
  CHECK(std::abs(b0e - 0.29) <= 1e-15);

  CHECK_THROWS_AS(beta_schedule(5, 0.7, 100, 100), ValidationError);
  CHECK_THROWS_AS(beta_schedule(-1, 0.7, 0, 10), ValidationError);
}

TEST_CASE("supervised-only training is bitwise identical across entry points") {
  Network net = make_synthetic_feeder(8, 5);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 40, 11);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);

  MlpConfig mc;
  mc.epochs = 25;
  mc.seed = 4;
  TrainResult via_mlp = train_mlp(ds, mc);

  // same architecture pushed through the physics-capable loop with the
  // physical term disabled: every number must match exactly
  Rng init(splitmix64(mc.seed));
  Model m = make_mlp_model(ds.n_load, mc, init);
  TrainOptions opt;
  opt.lr = mc.lr;
  opt.weight_decay = mc.weight_decay;
  opt.batch_size = mc.batch_size;
  opt.epochs = mc.epochs;
  opt.seed = mc.seed;
  opt.beta1_max = 0.0;
  TrainResult via_shared = train_network(std::move(m), ds, y_diag, opt);

  CHECK(models_identical(via_mlp.model, via_shared.model));
  CHECK(models_identical(via_mlp.best, via_shared.best));
  REQUIRE(via_mlp.history.size() == via_shared.history.size());
  for (std::size_t e = 0; e < via_mlp.history.size(); ++e) {
    CHECK(via_mlp.history[e].train_loss == via_shared.history[e].train_loss);
    CHECK(via_mlp.history[e].val_loss == via_shared.history[e].val_loss);
  }
  CHECK(via_mlp.adam_m == via_shared.adam_m);
  CHECK(via_mlp.adam_v == via_shared.adam_v);

  // a ramp that never activates within the horizon is the same stream:
  // the physical branch must not perturb a single bit while beta1 == 0
  attach_psi(ds, y_diag);
  Rng init2(splitmix64(mc.seed));
  Model m2 = make_mlp_model(ds.n_load, mc, init2);
  TrainOptions opt2 = opt;
  opt2.beta1_max = 0.71;
  opt2.ramp_start_epoch = 1000;  // far beyond 25 epochs
  opt2.ramp_end_epoch = 2000;
  TrainResult ramped = train_network(std::move(m2), ds, y_diag, opt2);
  CHECK(models_identical(ramped.model, via_mlp.model));
  for (std::size_t e = 0; e < ramped.history.size(); ++e)
    CHECK(ramped.history[e].train_loss == via_mlp.history[e].train_loss);
}

TEST_CASE("double-head training moves the adaptive slopes and logs the ramp") {
  Network net = make_synthetic_feeder(8, 5);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 60, 11);

  Pinn4pfConfig cfg;
  cfg.epochs = 120;
  cfg.ramp_start_epoch = 20;
  cfg.ramp_end_epoch = 60;
  cfg.seed = 2;
  TrainResult res = train_pinn4pf(ds, net, y, cfg);

  REQUIRE_FALSE(res.diverged);
  REQUIRE(res.history.size() == 120);
  CHECK(res.best_epoch >= 0);
  CHECK(std::isfinite(res.best_val));

  // adaptive slopes exist in both heads and at least one moved
  auto alphas = res.model.alphas();
  REQUIRE(alphas.size() == 8);  // 4 adaptive layers per head
  bool moved = false;
  for (double a : alphas)
    if (a != 1.0) moved = true;
  CHECK(moved);

  // recorded weights follow the schedule
  CHECK(res.history[0].beta1 == 0.0);
  CHECK(res.history[19].beta1 == 0.0);
  auto [b0, b1] = beta_schedule(40, cfg.beta1_max, 20, 60);
  CHECK(res.history[40].beta1 == b1);
  CHECK(res.history[119].beta1 == cfg.beta1_max);

  // the best snapshot is frozen: retraining further must not mutate it
  double before = res.best.head_mu.layers[0].w(0, 0);
  res.model.head_mu.layers[0].w(0, 0) += 1.0;
  CHECK(res.best.head_mu.layers[0].w(0, 0) == before);
}

TEST_CASE("physics training requires the hidden function to be attached") {
  Network net = make_synthetic_feeder(6, 13);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 30, 8);
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);

  Pinn4pfConfig cfg;
  Rng init(1);
  Model m = make_pinn4pf_model(ds.n_load, cfg, init);
  TrainOptions opt;
  opt.epochs = 3;
  opt.beta1_max = 0.5;
  CHECK_THROWS_AS(train_network(std::move(m), ds, y_diag, opt), ValidationError);
}

TEST_CASE("the reserved learned hidden-function variant is rejected") {
  Network net = make_synthetic_feeder(6, 13);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 30, 8);
  Pinn4pfConfig cfg;
  cfg.learned_psi = true;
  CHECK_THROWS_AS(train_pinn4pf(ds, net, y, cfg), ValidationError);
}

TEST_CASE("divergence is caught, flagged, and leaves the history intact") {
  Network net = make_synthetic_feeder(8, 5);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 40, 11);

  MlpConfig mc;
  mc.lr = 1e60;  // guaranteed overflow through seven relu layers
  mc.epochs = 8;
  mc.seed = 1;
  TrainResult res = train_mlp(ds, mc);
  CHECK(res.diverged);
  CHECK_FALSE(res.divergence_reason.empty());
  CHECK(res.history.size() < 8);  // stopped early
  // the exploding epoch may faithfully record a non-finite validation
  // loss; every record must still carry its epoch number in order
  for (std::size_t e = 0; e < res.history.size(); ++e)
    CHECK(res.history[e].epoch == static_cast<int>(e));
}

TEST_CASE("checkpoints round trip bitwise and reproduce predictions") {
  Network net = make_synthetic_feeder(8, 5);
  AdmittanceMatrix y = build_admittance(net);
  Dataset ds = dataset_on(net, y, 48, 7);

  Pinn4pfConfig cfg;
  cfg.epochs = 40;
  cfg.ramp_start_epoch = 5;
  cfg.ramp_end_epoch = 20;
  cfg.seed = 9;
  TrainResult res = train_pinn4pf(ds, net, y, cfg);
  REQUIRE_FALSE(res.diverged);

  Checkpoint ck;
  ck.kind = "pinn4pf";
  ck.n_load = ds.n_load;
  ck.seed = res.seed;
  ck.model = res.best;
  ck.norm = res.norm;
  ck.best_epoch = res.best_epoch;
  ck.best_val = res.best_val;
  ck.adam_m = res.adam_m;
  ck.adam_v = res.adam_v;
  ck.adam_t = res.adam_t;

  std::string path = "test_pinn4pf_ck.json";
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(back.kind == "pinn4pf");
  CHECK(back.n_load == ck.n_load);
  CHECK(back.seed == ck.seed);
  CHECK(back.best_epoch == ck.best_epoch);
  CHECK(back.best_val == ck.best_val);
  CHECK(models_identical(back.model, ck.model));
  CHECK(back.norm.mean == ck.norm.mean);
  CHECK(back.norm.std == ck.norm.std);
  CHECK(back.adam_m == ck.adam_m);
  CHECK(back.adam_v == ck.adam_v);
  CHECK(back.adam_t == ck.adam_t);

  auto test_idx = ds.indices_of(Split::Test);
  Matrix x_test(test_idx.size(), ds.x.cols());
  for (std::size_t i = 0; i < test_idx.size(); ++i) x_test.row(i) = ds.x.row(test_idx[i]);
  Matrix before = predict(ck.model, ck.norm, x_test);
  Matrix after = predict(back.model, back.norm, x_test);
  CHECK(before == after);
}

TEST_CASE("history csv carries the schedule and slope columns") {
  std::vector<EpochRecord> hist(3);
  for (int e = 0; e < 3; ++e) {
    hist[e].epoch = e;
    hist[e].train_loss = 0.5 / (e + 1);
    hist[e].val_loss = 0.7 / (e + 1);
    hist[e].beta0 = 1.0;
    hist[e].beta1 = 0.0;
    hist[e].alphas = {1.0, 0.9};
  }
  std::string path = "test_pinn4pf_hist.csv";
  save_history(hist, path);
  std::string text = read_text_file(path);
  std::filesystem::remove(path);
  CHECK(text.find("epoch,train_loss,val_loss,beta0,beta1,phys_rows_skipped,alpha_0,alpha_1") !=
        std::string::npos);
  CHECK(text.find("\n2,") != std::string::npos);
}
