#pragma once

#include "pfkit/pinn4pf.hpp"

namespace pfkit {

// Black-box MLP baseline: n_hidden ReLU layers, first and last of width
// 2n, intermediate layers round(4n/3), linear output of width 2n.
struct MlpConfig {
  int n_hidden = 7;
  double lr = 2.3e-4;
  double weight_decay = 1.8e-5;
  double dropout = 0.002;
  int batch_size = 16;
  int epochs = 5000;
  std::uint64_t seed = 0;
};

// Single affine map 2n -> 2n trained by the shared loop. The learning
// rate and epoch budget follow the MLP preset; no regularization.
struct LrConfig {
  double lr = 2.3e-4;
  int batch_size = 16;
  int epochs = 5000;
  std::uint64_t seed = 0;
};

Model make_mlp_model(int n_load, const MlpConfig& cfg, Rng& rng);
Model make_lr_model(int n_load, Rng& rng);

TrainResult train_mlp(const Dataset& ds, const MlpConfig& cfg);
TrainResult train_lr(const Dataset& ds, const LrConfig& cfg);

// Closed-form least squares y ~ x*W^T + c over the given rows
// (minimum-norm solution). Used as the optimum reference that the
// gradient-trained LR is measured against.
struct AffineFit {
  Matrix w;  // out x in
  Eigen::VectorXd c;
  Matrix apply(const Matrix& x) const;
};
AffineFit least_squares_fit(const Matrix& x, const Matrix& y, const std::vector<int>& rows);

}  // namespace pfkit
