#pragma once

#include <vector>

#include "pfkit/grid.hpp"

namespace pfkit {

// Net complex power injection targets at the load buses, ordered like
// Network::load_indices(). Loads drawing power have negative entries.
struct LoadVector {
  std::vector<double> p_d;
  std::vector<double> q_d;
};

// Rectangular bus voltages, one entry per bus (reference included):
// V_i = mu_i + j omega_i.
struct VoltageState {
  std::vector<double> mu;
  std::vector<double> omega;
};

// Polar bus voltages: magnitude v, angle delta (radians).
struct PolarState {
  std::vector<double> v;
  std::vector<double> delta;
};

PolarState polar_from_rect(const VoltageState& s);
VoltageState rect_from_polar(const PolarState& s);

enum class SolveStatus { Converged, MaxIterations, SingularJacobian, NumericalFailure };

struct PfSolution {
  VoltageState state;
  int iterations = 0;
  double max_mismatch = 0.0;  // at exit
  SolveStatus status = SolveStatus::NumericalFailure;
  double p_ref = 0.0;  // injection balancing the network at the reference bus
  double q_ref = 0.0;

  bool converged() const { return status == SolveStatus::Converged; }
};

// Active/reactive injections p_i, q_i at every bus from rectangular
// voltages and the admittance matrix, evaluated with the real-valued
// conductance/susceptance formulation:
//   p_i = sum_j g_ij (mu_i mu_j + omega_i omega_j) + b_ij (omega_i mu_j - mu_i omega_j)
//   q_i = sum_j g_ij (omega_i mu_j - mu_i omega_j) - b_ij (mu_i mu_j + omega_i omega_j)
void nodal_power(const AdmittanceMatrix& y, const VoltageState& s, std::vector<double>& p_out,
                 std::vector<double>& q_out);

// Largest absolute power mismatch |target - injected| over load buses.
double max_residual(const Network& net, const AdmittanceMatrix& y, const LoadVector& loads,
                    const VoltageState& s);

// Newton-Raphson in polar coordinates from a flat start (all voltages
// 1+j0). Convergence is tested before each update, so an already
// balanced state reports zero iterations. Dense LU is used for small
// systems, sparse LU above 64 buses.
PfSolution solve_newton_raphson(const Network& net, const AdmittanceMatrix& y,
                                const LoadVector& loads, double tol = 1e-8, int max_iter = 50);
PfSolution solve_newton_raphson(const Network& net, const LoadVector& loads, double tol = 1e-8,
                                int max_iter = 50);

// Gauss-Seidel sweeps V_k <- (conj(S_k)/conj(V_k) - sum_{i != k} Y_ki V_i) / Y_kk
// over load buses; converges when the largest voltage update is below tol.
PfSolution solve_gauss_seidel(const Network& net, const AdmittanceMatrix& y,
                              const LoadVector& loads, double tol = 1e-10, int max_iter = 5000);

// Per-line sending-end quantities evaluated at the `from` terminal:
// current magnitude and complex power flow into the line.
struct LineFlows {
  std::vector<double> current_mag;
  std::vector<double> p_send;
  std::vector<double> q_send;
};

LineFlows line_flows(const Network& net, const VoltageState& s);

}  // namespace pfkit
