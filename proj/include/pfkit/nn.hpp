#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfkit/common.hpp"

namespace pfkit {

using Matrix = Eigen::MatrixXd;

enum class Activation { Linear, Relu, AdaptiveRelu };

// Inverted-dropout mask: entries are 1/(1-rate) with probability 1-rate,
// else 0. Draws consume `rng` in storage order. Rate is capped at 0.02,
// the top of the explored sensitivity range.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);
Matrix dropout(const Matrix& batch, double rate, bool training, Rng& rng);

// Fully connected layer, batch rows. Forward caches what backward needs;
// backward accumulates parameter gradients and returns the input gradient.
struct DenseLayer {
  Matrix w;            // out x in
  Eigen::VectorXd b;   // out
  Activation act = Activation::Linear;
  double alpha = 1.0;  // adaptive relu slope, trainable
  double dropout_rate = 0.0;

  Matrix gw;
  Eigen::VectorXd gb;
  double galpha = 0.0;

  Matrix in_cache, z_cache, mask_cache;

  Eigen::Index fan_in() const { return w.cols(); }
  Eigen::Index fan_out() const { return w.rows(); }

  Matrix forward(const Matrix& x, bool training, Rng& rng);
  Matrix backward(const Matrix& g_out);
  void zero_grad();
};

// He-uniform initialization: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
// drawn in storage order; b = 0; alpha = 1.
DenseLayer make_dense(Eigen::Index in, Eigen::Index out, Activation act, double dropout_rate,
                      Rng& rng);

// A chain of layers sharing one forward/backward pass.
struct Stack {
  std::vector<DenseLayer> layers;

  Matrix forward(const Matrix& x, bool training, Rng& rng);
  Matrix backward(const Matrix& g);
  void zero_grad();
};

double mse(const Matrix& pred, const Matrix& target);
Matrix mse_grad(const Matrix& pred, const Matrix& target);

// Named view into a model's parameters and their gradient slots.
struct ParamRef {
  std::string path;
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index size = 0;
};

void collect_params(Stack& s, const std::string& prefix, std::vector<ParamRef>& out);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: param *= (1 - lr*wd) before the update
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig cfg);

  // One update over all registered parameters.
  // Throws DivergenceError naming the parameter on a non-finite gradient.
  void step();

  int steps() const { return t_; }
  const std::vector<ParamRef>& params() const { return params_; }
  std::vector<double>& m() { return m_; }
  std::vector<double>& v() { return v_; }
  void set_steps(int t) { t_ = t; }

 private:
  std::vector<ParamRef> params_;
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

}  // namespace pfkit
