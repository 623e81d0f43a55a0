#include "pfkit/nn.hpp"

#include <cmath>

namespace pfkit {

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 0.02)
    throw ValidationError("dropout", "rate must be in [0, 0.02], got " + std::to_string(rate));
  Matrix mask(rows, cols);
  double scale = 1.0 / (1.0 - rate);
  double* p = mask.data();
  for (Eigen::Index i = 0; i < mask.size(); ++i) p[i] = (rng.uniform01() < rate) ? 0.0 : scale;
  return mask;
}

Matrix dropout(const Matrix& batch, double rate, bool training, Rng& rng) {
  if (!training || rate == 0.0) {
    if (rate < 0.0 || rate > 0.02)
      throw ValidationError("dropout", "rate must be in [0, 0.02], got " + std::to_string(rate));
    return batch;
  }
  return batch.cwiseProduct(dropout_mask(batch.rows(), batch.cols(), rate, rng));
}

Matrix DenseLayer::forward(const Matrix& x, bool training, Rng& rng) {
  if (x.cols() != w.cols())
    throw ValidationError("dense_forward", "input width " + std::to_string(x.cols()) +
                                               " != layer fan-in " + std::to_string(w.cols()));
  in_cache = x;
  z_cache = x * w.transpose();
  z_cache.rowwise() += b.transpose();

  Matrix a;
  switch (act) {
    case Activation::Linear:
      a = z_cache;
      break;
    case Activation::Relu:
      a = (z_cache.array() > 0.0).select(z_cache, 0.0);
      break;
    case Activation::AdaptiveRelu: {
      Matrix az = alpha * z_cache;
      a = (az.array() > 0.0).select(az, 0.0);
      break;
    }
  }

  if (training && dropout_rate > 0.0) {
    mask_cache = dropout_mask(a.rows(), a.cols(), dropout_rate, rng);
    a = a.cwiseProduct(mask_cache);
  } else {
    mask_cache.resize(0, 0);
  }
  return a;
}

Matrix DenseLayer::backward(const Matrix& g_out) {
  if (g_out.rows() != z_cache.rows() || g_out.cols() != z_cache.cols())
    throw ValidationError("dense_backward", "gradient shape mismatch");
  Matrix g = g_out;
  if (mask_cache.size()) g = g.cwiseProduct(mask_cache);

  Matrix gz;
  switch (act) {
    case Activation::Linear:
      gz = g;
      break;
    case Activation::Relu:
      gz = (z_cache.array() > 0.0).select(g, 0.0);
      break;
    case Activation::AdaptiveRelu: {
      // d/dz max(0, alpha z) = alpha on the active side; d/dalpha = z there.
      Matrix active = ((alpha * z_cache).array() > 0.0).select(g, 0.0);
      galpha += active.cwiseProduct(z_cache).sum();
      gz = alpha * active;
      break;
    }
  }

  gw += gz.transpose() * in_cache;
  gb += gz.colwise().sum().transpose();
  return gz * w;
}

void DenseLayer::zero_grad() {
  gw.setZero();
  gb.setZero();
  galpha = 0.0;
}

DenseLayer make_dense(Eigen::Index in, Eigen::Index out, Activation act, double dropout_rate,
                      Rng& rng) {
  if (in <= 0 || out <= 0)
    throw ValidationError("make_dense", "layer dimensions must be positive");
  if (dropout_rate < 0.0 || dropout_rate > 0.02)
    throw ValidationError("make_dense",
                          "dropout rate must be in [0, 0.02], got " + std::to_string(dropout_rate));
  DenseLayer layer;
  layer.w.resize(out, in);
  double limit = std::sqrt(6.0 / static_cast<double>(in));
  double* p = layer.w.data();
  for (Eigen::Index i = 0; i < layer.w.size(); ++i) p[i] = rng.uniform(-limit, limit);
  layer.b = Eigen::VectorXd::Zero(out);
  layer.act = act;
  layer.dropout_rate = dropout_rate;
  layer.gw = Matrix::Zero(out, in);
  layer.gb = Eigen::VectorXd::Zero(out);
  return layer;
}

Matrix Stack::forward(const Matrix& x, bool training, Rng& rng) {
  Matrix h = x;
  for (DenseLayer& l : layers) h = l.forward(h, training, rng);
  return h;
}

Matrix Stack::backward(const Matrix& g) {
  Matrix gh = g;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) gh = it->backward(gh);
  return gh;
}

void Stack::zero_grad() {
  for (DenseLayer& l : layers) l.zero_grad();
}

double mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ValidationError("mse", "shape mismatch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  return 2.0 / static_cast<double>(pred.size()) * (pred - target);
}

void collect_params(Stack& s, const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    DenseLayer& l = s.layers[i];
    std::string base = prefix + "." + std::to_string(i);
    out.push_back({base + ".w", l.w.data(), l.gw.data(), l.w.size()});
    out.push_back({base + ".b", l.b.data(), l.gb.data(), l.b.size()});
    if (l.act == Activation::AdaptiveRelu)
      out.push_back({base + ".alpha", &l.alpha, &l.galpha, 1});
  }
}

Adam::Adam(std::vector<ParamRef> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  Eigen::Index total = 0;
  for (const ParamRef& p : params_) total += p.size;
  m_.assign(static_cast<std::size_t>(total), 0.0);
  v_.assign(static_cast<std::size_t>(total), 0.0);
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  double shrink = 1.0 - cfg_.lr * cfg_.weight_decay;
  std::size_t off = 0;
  for (const ParamRef& p : params_) {
    for (Eigen::Index i = 0; i < p.size; ++i, ++off) {
      double g = p.grad[i];
      if (!std::isfinite(g))
        throw DivergenceError(p.path, "non-finite gradient in " + p.path + "[" +
                                          std::to_string(i) + "]");
      if (cfg_.weight_decay != 0.0) p.value[i] *= shrink;
      m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g;
      v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m_[off] / bc1;
      double vhat = v_[off] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace pfkit
