#include "pfkit/baselines.hpp"

#include <cmath>

namespace pfkit {

Model make_mlp_model(int n_load, const MlpConfig& cfg, Rng& rng) {
  if (n_load <= 0) throw ValidationError("n_load", "must be positive");
  if (cfg.n_hidden < 2)
    throw ValidationError("n_hidden", "needs at least the first/last wide layers");
  int n = n_load;
  Eigen::Index wide = 2 * n;
  Eigen::Index mid = std::lround(4.0 * n / 3.0);
  std::vector<Eigen::Index> widths(cfg.n_hidden, mid);
  widths.front() = wide;
  widths.back() = wide;

  Model m;
  Eigen::Index prev = 2 * n;
  for (Eigen::Index w : widths) {
    m.trunk.layers.push_back(make_dense(prev, w, Activation::Relu, cfg.dropout, rng));
    prev = w;
  }
  m.trunk.layers.push_back(make_dense(prev, 2 * n, Activation::Linear, 0.0, rng));
  return m;
}

Model make_lr_model(int n_load, Rng& rng) {
  if (n_load <= 0) throw ValidationError("n_load", "must be positive");
  Model m;
  m.trunk.layers.push_back(make_dense(2 * n_load, 2 * n_load, Activation::Linear, 0.0, rng));
  return m;
}

TrainResult train_mlp(const Dataset& ds, const MlpConfig& cfg) {
  Rng init_rng(splitmix64(cfg.seed));
  Model m = make_mlp_model(ds.n_load, cfg, init_rng);
  TrainOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.batch_size = cfg.batch_size;
  opt.epochs = cfg.epochs;
  opt.seed = cfg.seed;
  opt.beta1_max = 0.0;
  return train_network(std::move(m), ds, Eigen::VectorXcd(), opt);
}

TrainResult train_lr(const Dataset& ds, const LrConfig& cfg) {
  Rng init_rng(splitmix64(cfg.seed));
  Model m = make_lr_model(ds.n_load, init_rng);
  TrainOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = 0.0;
  opt.batch_size = cfg.batch_size;
  opt.epochs = cfg.epochs;
  opt.seed = cfg.seed;
  opt.beta1_max = 0.0;
  return train_network(std::move(m), ds, Eigen::VectorXcd(), opt);
}

Matrix AffineFit::apply(const Matrix& x) const {
  Matrix out = x * w.transpose();
  out.rowwise() += c.transpose();
  return out;
}

AffineFit least_squares_fit(const Matrix& x, const Matrix& y, const std::vector<int>& rows) {
  if (rows.empty()) throw ValidationError("least_squares_fit", "no rows given");
  Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Matrix a(m, x.cols() + 1);
  Matrix b(m, y.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    a.row(i).head(x.cols()) = x.row(rows[i]);
    a(i, x.cols()) = 1.0;
    b.row(i) = y.row(rows[i]);
  }
  Matrix sol = a.colPivHouseholderQr().solve(b);  // (in+1) x out
  AffineFit fit;
  fit.w = sol.topRows(x.cols()).transpose();
  fit.c = sol.row(x.cols()).transpose();
  return fit;
}

}  // namespace pfkit
