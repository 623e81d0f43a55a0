#pragma once

#include <Eigen/Dense>

#include "pfkit/pf.hpp"

namespace pfkit {

// Load scenario sampler: apparent power per load bus drawn from
// N(base_s_i, rel_std * base_s_i), then p = s * pf, q = sqrt(s^2 - p^2).
struct SamplingSpec {
  std::vector<double> base_s;   // nominal apparent power per load bus (p.u.)
  std::vector<double> base_pf;  // power factor per load bus, in (0, 1]
  double rel_std = 0.30;
  int pool_size = 5000;
  std::uint64_t seed = 0;

  void validate(int n_load) const;
};

// Training-split corruption. At level 0.10 perturbations are bounded by
// x_range_at_max on inputs and y_range_at_max on labels; the bounds
// scale linearly down to zero at level 0.
struct NoiseSpec {
  double level = 0.0;
  double x_range_at_max = 1.0;
  double y_range_at_max = 0.1;
  std::uint64_t seed = 0;
};

enum class Split : std::uint8_t { Train, Val, Test };

struct DatasetMeta {
  std::uint64_t scenario_seed = 0;  // pool sampling stream
  std::uint64_t dataset_seed = 0;   // scenario selection + split shuffle
  double solver_tol = 1e-10;
  int n_failures = 0;  // scenarios dropped for non-convergence
  std::string grid_hash;
  std::vector<int> load_bus_ids;
  NoiseSpec noise;  // level 0 = clean dataset
};

// Rows are scenarios. Column layout of x: [p_d per load bus | q_d per
// load bus]; of y: [mu per load bus | omega per load bus]. x/y always
// hold the clean solver ground truth; when noise is injected, the
// corrupted copies live in x_noisy/y_noisy (identical outside the
// training split) and the *_view accessors return them.
struct Dataset {
  int n_load = 0;
  Eigen::MatrixXd x, y;
  Eigen::MatrixXd x_noisy, y_noisy;  // empty when meta.noise.level == 0
  Eigen::MatrixXcd psi;              // hidden-function values, filled on demand
  std::vector<Split> split;
  DatasetMeta meta;

  int rows() const { return static_cast<int>(x.rows()); }
  std::vector<int> indices_of(Split s) const;
  const Eigen::MatrixXd& x_view() const { return x_noisy.size() ? x_noisy : x; }
  const Eigen::MatrixXd& y_view() const { return y_noisy.size() ? y_noisy : y; }
};

// Draws spec.pool_size load scenarios. Each row uses its own seeded
// stream (derived from spec.seed and the row index), so the pool is
// reproducible row-by-row regardless of evaluation order. Non-positive
// apparent-power draws are rejected and redrawn.
std::vector<LoadVector> sample_scenarios(const SamplingSpec& spec, int n_load);

// Selects n_points scenarios from the pool (seeded shuffle), solves each
// with Newton-Raphson at meta.solver_tol, replaces non-converging rows
// with further pool entries, and tags rows 40/20/40 train/val/test by a
// second seeded shuffle. Throws DatasetError when more than 10% of the
// requested points fail to solve.
Dataset build_dataset(const Network& net, const AdmittanceMatrix& y,
                      const std::vector<LoadVector>& pool, int n_points, std::uint64_t seed,
                      double solver_tol = 1e-10);

// Returns a copy with training-split rows of x/y perturbed entrywise by
// u ~ Uniform(0, range * level / 0.10) with a random sign. level 0
// returns the dataset unchanged. Deterministic per spec.seed.
Dataset inject_noise(Dataset ds, const NoiseSpec& spec);

// CSV (clean values, full round-trip precision) + "<csv>.meta.json"
// sidecar with split indices, seeds, noise spec, normalization stats of
// the clean training inputs, and the grid hash. Loading re-applies the
// recorded noise, so a saved noisy dataset reproduces exactly.
void save_dataset(const Dataset& ds, const std::string& csv_path);
Dataset load_dataset(const std::string& csv_path);

// Mean/std per input column over training rows (std floored at 1e-12).
struct Normalization {
  Eigen::VectorXd mean, std;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const;
};
Normalization fit_normalization(const Eigen::MatrixXd& x, const std::vector<int>& rows);

}  // namespace pfkit
