#include "pfkit/pf.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace pfkit {

PolarState polar_from_rect(const VoltageState& s) {
  PolarState p;
  p.v.resize(s.mu.size());
  p.delta.resize(s.mu.size());
  for (std::size_t i = 0; i < s.mu.size(); ++i) {
    p.v[i] = std::hypot(s.mu[i], s.omega[i]);
    p.delta[i] = std::atan2(s.omega[i], s.mu[i]);
  }
  return p;
}

VoltageState rect_from_polar(const PolarState& p) {
  VoltageState s;
  s.mu.resize(p.v.size());
  s.omega.resize(p.v.size());
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    s.mu[i] = p.v[i] * std::cos(p.delta[i]);
    s.omega[i] = p.v[i] * std::sin(p.delta[i]);
  }
  return s;
}

void nodal_power(const AdmittanceMatrix& y, const VoltageState& s, std::vector<double>& p_out,
                 std::vector<double>& q_out) {
  int n = y.size();
  p_out.assign(n, 0.0);
  q_out.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (const auto& [j, yij] : y.row(i)) {
      double g = yij.real(), b = yij.imag();
      double uu = s.mu[i] * s.mu[j] + s.omega[i] * s.omega[j];
      double wu = s.omega[i] * s.mu[j] - s.mu[i] * s.omega[j];
      pi += g * uu + b * wu;
      qi += g * wu - b * uu;
    }
    p_out[i] = pi;
    q_out[i] = qi;
  }
}

double max_residual(const Network& net, const AdmittanceMatrix& y, const LoadVector& loads,
                    const VoltageState& s) {
  std::vector<double> p, q;
  nodal_power(y, s, p, q);
  auto load_idx = net.load_indices();
  double worst = 0.0;
  for (std::size_t k = 0; k < load_idx.size(); ++k) {
    worst = std::max(worst, std::abs(loads.p_d[k] - p[load_idx[k]]));
    worst = std::max(worst, std::abs(loads.q_d[k] - q[load_idx[k]]));
  }
  return worst;
}

namespace {

void check_loads(const Network& net, const LoadVector& loads) {
  std::size_t n = static_cast<std::size_t>(net.n_load());
  if (loads.p_d.size() != n || loads.q_d.size() != n)
    throw ValidationError("loads", "expected " + std::to_string(n) + " load entries, got p:" +
                                       std::to_string(loads.p_d.size()) + " q:" +
                                       std::to_string(loads.q_d.size()));
}

// Injections in polar form plus the mismatch vector [dp; dq] over load buses.
void polar_power(const AdmittanceMatrix& y, const PolarState& st, std::vector<double>& p,
                 std::vector<double>& q) {
  int n = y.size();
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (const auto& [j, yij] : y.row(i)) {
      double g = yij.real(), b = yij.imag();
      double th = st.delta[i] - st.delta[j];
      double c = std::cos(th), s = std::sin(th);
      pi += st.v[j] * (g * c + b * s);
      qi += st.v[j] * (g * s - b * c);
    }
    p[i] = st.v[i] * pi;
    q[i] = st.v[i] * qi;
  }
}

PfSolution finish(const Network& net, const AdmittanceMatrix& y, const PolarState& st,
                  int iterations, double mismatch, SolveStatus status) {
  PfSolution sol;
  sol.state = rect_from_polar(st);
  sol.iterations = iterations;
  sol.max_mismatch = mismatch;
  sol.status = status;
  std::vector<double> p, q;
  nodal_power(y, sol.state, p, q);
  int ref = net.reference_index();
  sol.p_ref = p[ref];
  sol.q_ref = q[ref];
  return sol;
}

}  // namespace

PfSolution solve_newton_raphson(const Network& net, const AdmittanceMatrix& y,
                                const LoadVector& loads, double tol, int max_iter) {
  check_loads(net, loads);
  int n = net.n_total();
  auto load_idx = net.load_indices();
  int m = static_cast<int>(load_idx.size());
  // position of bus i among the unknowns, -1 for the reference bus
  std::vector<int> unknown_of(n, -1);
  for (int k = 0; k < m; ++k) unknown_of[load_idx[k]] = k;

  PolarState st;
  st.v.assign(n, 1.0);
  st.delta.assign(n, 0.0);

  std::vector<double> p, q;
  bool dense = n <= 64;
  int iter = 0;
  for (;; ++iter) {
    polar_power(y, st, p, q);
    double mismatch = 0.0;
    Eigen::VectorXd rhs(2 * m);
    for (int k = 0; k < m; ++k) {
      int i = load_idx[k];
      rhs(k) = loads.p_d[k] - p[i];
      rhs(m + k) = loads.q_d[k] - q[i];
      mismatch = std::max(mismatch, std::max(std::abs(rhs(k)), std::abs(rhs(m + k))));
    }
    if (!std::isfinite(mismatch))
      return finish(net, y, st, iter, mismatch, SolveStatus::NumericalFailure);
    if (mismatch <= tol) return finish(net, y, st, iter, mismatch, SolveStatus::Converged);
    if (iter >= max_iter) return finish(net, y, st, iter, mismatch, SolveStatus::MaxIterations);

    // Jacobian blocks: rows/cols indexed by load-bus unknowns,
    // [dp/ddelta dp/dv; dq/ddelta dq/dv].
    Eigen::VectorXd step(2 * m);
    auto fill = [&](auto&& put) {
      for (int k = 0; k < m; ++k) {
        int i = load_idx[k];
        for (const auto& [j, yij] : y.row(i)) {
          int c = unknown_of[j];
          if (c < 0) continue;  // reference bus: fixed voltage
          double g = yij.real(), b = yij.imag();
          if (j == i) {
            double vi = st.v[i];
            put(k, c, -q[i] - b * vi * vi);                // dp_i/ddelta_i
            put(k, m + c, p[i] / vi + g * vi);             // dp_i/dv_i
            put(m + k, c, p[i] - g * vi * vi);             // dq_i/ddelta_i
            put(m + k, m + c, q[i] / vi - b * vi);         // dq_i/dv_i
          } else {
            double th = st.delta[i] - st.delta[j];
            double cth = std::cos(th), sth = std::sin(th);
            double vij = st.v[i] * st.v[j];
            put(k, c, vij * (g * sth - b * cth));          // dp_i/ddelta_j
            put(k, m + c, st.v[i] * (g * cth + b * sth));  // dp_i/dv_j
            put(m + k, c, -vij * (g * cth + b * sth));     // dq_i/ddelta_j
            put(m + k, m + c, st.v[i] * (g * sth - b * cth));  // dq_i/dv_j
          }
        }
      }
    };

    if (dense) {
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
      fill([&](int r, int c, double v) { jac(r, c) = v; });
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
      if (!lu.isInvertible())
        return finish(net, y, st, iter, mismatch, SolveStatus::SingularJacobian);
      step = lu.solve(rhs);
    } else {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<std::size_t>(16) * m);
      fill([&](int r, int c, double v) { trips.emplace_back(r, c, v); });
      Eigen::SparseMatrix<double> jac(2 * m, 2 * m);
      jac.setFromTriplets(trips.begin(), trips.end());
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(jac);
      if (lu.info() != Eigen::Success)
        return finish(net, y, st, iter, mismatch, SolveStatus::SingularJacobian);
      step = lu.solve(rhs);
    }
    if (!step.allFinite()) return finish(net, y, st, iter, mismatch, SolveStatus::NumericalFailure);

    for (int k = 0; k < m; ++k) {
      int i = load_idx[k];
      st.delta[i] += step(k);
      st.v[i] += step(m + k);
    }
  }
}

PfSolution solve_newton_raphson(const Network& net, const LoadVector& loads, double tol,
                                int max_iter) {
  return solve_newton_raphson(net, build_admittance(net), loads, tol, max_iter);
}

PfSolution solve_gauss_seidel(const Network& net, const AdmittanceMatrix& y,
                              const LoadVector& loads, double tol, int max_iter) {
  check_loads(net, loads);
  int n = net.n_total();
  auto load_idx = net.load_indices();
  std::vector<int> load_pos(n, -1);
  for (std::size_t k = 0; k < load_idx.size(); ++k) load_pos[load_idx[k]] = static_cast<int>(k);

  std::vector<Complex> v(n, Complex(1.0, 0.0));
  int iter = 0;
  double worst_update = 0.0;
  SolveStatus status = SolveStatus::MaxIterations;
  for (; iter < max_iter; ++iter) {
    worst_update = 0.0;
    for (int i : load_idx) {
      int k = load_pos[i];
      Complex s_conj(loads.p_d[k], -loads.q_d[k]);
      Complex sum(0.0, 0.0);
      Complex diag(0.0, 0.0);
      for (const auto& [j, yij] : y.row(i)) {
        if (j == i)
          diag = yij;
        else
          sum += yij * v[j];
      }
      Complex v_new = (s_conj / std::conj(v[i]) - sum) / diag;
      worst_update = std::max(worst_update, std::abs(v_new - v[i]));
      v[i] = v_new;
    }
    if (!std::isfinite(worst_update)) {
      status = SolveStatus::NumericalFailure;
      ++iter;
      break;
    }
    if (worst_update <= tol) {
      status = SolveStatus::Converged;
      ++iter;
      break;
    }
  }

  PolarState st;
  st.v.resize(n);
  st.delta.resize(n);
  for (int i = 0; i < n; ++i) {
    st.v[i] = std::abs(v[i]);
    st.delta[i] = std::arg(v[i]);
  }
  PfSolution sol = finish(net, y, st, iter, 0.0, status);
  sol.max_mismatch = max_residual(net, y, loads, sol.state);
  return sol;
}

LineFlows line_flows(const Network& net, const VoltageState& s) {
  LineFlows out;
  out.current_mag.reserve(net.lines.size());
  out.p_send.reserve(net.lines.size());
  out.q_send.reserve(net.lines.size());
  for (const Line& l : net.lines) {
    int a = net.index_of(l.from);
    int b = net.index_of(l.to);
    Complex va(s.mu[a], s.omega[a]);
    Complex vb(s.mu[b], s.omega[b]);
    Complex y_series = 1.0 / Complex(l.r, l.x);
    Complex i_ab = y_series * (va - vb) + Complex(0.0, l.b_sh / 2.0) * va;
    Complex s_ab = va * std::conj(i_ab);
    out.current_mag.push_back(std::abs(i_ab));
    out.p_send.push_back(s_ab.real());
    out.q_send.push_back(s_ab.imag());
  }
  return out;
}

}  // namespace pfkit
