#pragma once

#include <optional>

#include "pfkit/nn.hpp"
#include "pfkit/scenario.hpp"

namespace pfkit {

// Double-head configuration and training protocol. beta1 weights the
// physical penalty; beta0 = 1 - beta1 always.
struct Pinn4pfConfig {
  int n_shared_layers = 2;
  int n_head_layers = 4;
  double lr = 1.3e-4;
  double weight_decay = 1.1e-5;
  double dropout = 0.001;
  int batch_size = 16;
  int epochs = 5000;
  double beta1_max = 0.71;
  int ramp_start_epoch = 100;
  int ramp_end_epoch = 1000;
  std::uint64_t seed = 0;
  bool adaptive_heads = true;  // false: plain ReLU in the heads (ablation)
  bool physical_loss = true;   // false: beta1 pinned to 0 (ablation)
  bool learned_psi = false;    // reserved variant, not implemented
};

// Trunk only (single stack) or trunk + two heads whose outputs are
// concatenated as [mu | omega].
struct Model {
  Stack trunk;
  Stack head_mu, head_omega;

  bool double_head() const { return !head_mu.layers.empty(); }
  Matrix forward(const Matrix& x, bool training, Rng& rng);
  void backward(const Matrix& g);
  void zero_grad();
  std::vector<ParamRef> params();
  std::vector<double> alphas() const;  // adaptive slopes in parameter order
};

Model make_pinn4pf_model(int n_load, const Pinn4pfConfig& cfg, Rng& rng);

// Diagonal entries of the admittance matrix at the load buses, in
// dataset column order.
Eigen::VectorXcd load_bus_y_diag(const Network& net, const AdmittanceMatrix& y);

// Hidden function per row and load bus from inputs and labels only:
//   psi_k = (p_k - j q_k) / (mu_k - j omega_k) - Y_kk (mu_k + j omega_k),
// the diagonal-only rearrangement of the nodal current balance. Rows
// with |V_k| < 1e-6 are rejected (ValidationError).
Eigen::MatrixXcd compute_psi_from_labels(const Eigen::VectorXcd& y_diag, const Matrix& x,
                                         const Matrix& y);

// Fills ds.psi from the dataset's training view (noisy rows use their
// corrupted values so the physical anchor matches what the trainer sees).
void attach_psi(Dataset& ds, const Eigen::VectorXcd& y_diag);

// Voltage reconstruction through the physical relation
//   f'_k = ((p_k - j q_k) / (mu_hat_k - j omega_hat_k) - psi_k) / Y_kk.
// Rows where any predicted |V_k| falls below `guard` are skipped and
// flagged; their recon values are not meaningful.
struct PhysicalEval {
  Matrix recon;               // batch x 2n, [mu' | omega']
  std::vector<char> skipped;  // per batch row
  int n_skipped = 0;
};
PhysicalEval physical_model(const Eigen::VectorXcd& y_diag, const Matrix& x, const Matrix& pred,
                            const Eigen::MatrixXcd& psi, double guard = 1e-6);

struct LossConfig {
  double beta0 = 1.0;
  double beta1 = 0.0;
  Eigen::VectorXcd y_diag;
  double guard = 1e-6;
};

// L = beta0 * MSE(pred, y) + beta1 * MSE(f'(x, pred, psi), y), with the
// physical mean taken over non-skipped rows. grad is dL/dpred including
// the exact path through the complex division in f'.
struct LossResult {
  double value = 0.0;
  double supervised = 0.0;
  double physical = 0.0;
  int rows_skipped = 0;
  Matrix grad;
};
LossResult composite_loss(const Matrix& pred, const Matrix& y, const Matrix& x_raw,
                          const Eigen::MatrixXcd& psi, const LossConfig& cfg);

// beta1 = 0 before ramp_start_epoch, then linear in epoch up to
// beta1_max at ramp_end_epoch, constant afterwards. beta0 = 1 - beta1.
std::pair<double, double> beta_schedule(int epoch, double beta1_max, int ramp_start_epoch,
                                        int ramp_end_epoch);

struct TrainOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  int batch_size = 16;
  int epochs = 100;
  std::uint64_t seed = 0;
  double beta1_max = 0.0;  // 0 disables the physical term entirely
  int ramp_start_epoch = 100;
  int ramp_end_epoch = 1000;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // supervised MSE on the clean validation split
  double beta0 = 1.0;
  double beta1 = 0.0;
  std::vector<double> alphas;
  int phys_rows_skipped = 0;
};

struct TrainResult {
  Model model;  // parameters after the last epoch
  Model best;   // lowest validation loss
  int best_epoch = -1;
  double best_val = 0.0;
  std::vector<EpochRecord> history;
  Normalization norm;
  bool diverged = false;
  std::string divergence_reason;
  std::uint64_t seed = 0;
  // final optimizer state, aligned to Model::params() order
  std::vector<double> adam_m, adam_v;
  int adam_t = 0;
};

// Shared mini-batch loop used by every model family: seeded shuffling,
// composite loss (physical branch active only when beta1 > 0), Adam with
// decoupled weight decay, per-epoch validation, best-checkpoint
// retention. Divergence stops training and leaves history intact.
TrainResult train_network(Model model, const Dataset& ds, const Eigen::VectorXcd& y_diag,
                          const TrainOptions& opt);

TrainResult train_pinn4pf(Dataset& ds, const Network& net, const AdmittanceMatrix& y,
                          const Pinn4pfConfig& cfg);

// Forward pass in evaluation mode on raw (unstandardized) inputs.
Matrix predict(Model& model, const Normalization& norm, const Matrix& x_raw);

// Checkpoint: full parameter set, adaptive slopes, optimizer state,
// seeds and normalization, as JSON with round-trip-exact numbers.
struct Checkpoint {
  std::string kind;  // "pinn4pf" | "mlp" | "lr"
  int n_load = 0;
  std::uint64_t seed = 0;
  Model model;  // best-validation parameters
  Normalization norm;
  int best_epoch = -1;
  double best_val = 0.0;
  std::vector<double> adam_m, adam_v;
  int adam_t = 0;
};
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// History CSV: epoch, train_loss, val_loss, beta0, beta1,
// phys_rows_skipped, then one column per adaptive slope.
void save_history(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace pfkit
