#pragma once

#include "pfkit/baselines.hpp"

namespace pfkit {

// Per-quantity error statistics over a test set. `mean` is the MSE over
// all rows and buses/lines; `max_unit` the worst per-bus (per-line)
// MSE; `std_units` the spread of per-unit MSEs; `std_rows` the spread
// of per-row squared errors.
struct MetricStats {
  double mean = 0.0;
  double max_unit = 0.0;
  double std_units = 0.0;
  double std_rows = 0.0;
};

struct DirectReport {
  MetricStats v;      // voltage magnitude, p.u.^2
  MetricStats delta;  // phase angle, rad^2
};

struct DerivedReport {
  MetricStats i;  // line current magnitude
  MetricStats p;  // line active power
  MetricStats q;  // line reactive power
};

struct EvalReport {
  std::string model_kind;
  std::string system;
  int rows = 0;
  DirectReport direct;
  DerivedReport derived;
  std::string dataset_hash;
  std::uint64_t model_seed = 0;
};

// Predictions vs clean labels on the selected split, compared in polar
// coordinates (v, delta) per load bus.
DirectReport evaluate_direct(Model& model, const Normalization& norm, const Dataset& ds,
                             Split split, const Network& net);

// Line-flow quantities from the predicted full network state vs from the
// label state.
DerivedReport evaluate_derived(Model& model, const Normalization& norm, const Dataset& ds,
                               Split split, const Network& net);

EvalReport evaluate_model(Model& model, const Normalization& norm, const Dataset& ds, Split split,
                          const Network& net, const std::string& kind, const std::string& system);

// Metric plumbing variants taking explicit prediction matrices (rows
// aligned with the split's clean labels).
DirectReport direct_from_predictions(const Matrix& pred, const Matrix& labels, int n_load);
DerivedReport derived_from_predictions(const Matrix& pred, const Matrix& labels,
                                       const Network& net);

// Self-check path: predictions replaced by the labels themselves, so
// every MSE must come out exactly zero.
EvalReport evaluate_stub(const Dataset& ds, Split split, const Network& net,
                         const std::string& system);

// Out-of-distribution check: scenarios redrawn with base apparent power
// scaled by `scale`, solved fresh, and evaluated like a test split.
// Non-converging scenarios are skipped and counted in n_failures.
struct StressResult {
  EvalReport report;
  int n_failures = 0;
};
StressResult stress_eval(Model& model, const Normalization& norm, const Network& net,
                         const AdmittanceMatrix& y, const SamplingSpec& base, double scale,
                         int n_points, std::uint64_t seed, const std::string& kind);

// Fingerprint of a dataset's numeric content (clean matrices + split).
std::string dataset_content_hash(const Dataset& ds);

enum class SweepAxis { Noise, TrainSize, SystemSize, Ablation, Stress };

struct SweepSpec {
  SweepAxis axis = SweepAxis::Noise;
  std::vector<double> values;  // noise levels / train sizes / stress scales
  std::uint64_t seed = 1;
  std::string grid_path;                 // all axes except SystemSize
  std::vector<std::string> grid_paths;   // SystemSize cells
  std::vector<int> points_per_grid;      // SystemSize cells
  int points = 512;
  std::vector<std::string> models = {"pinn4pf", "mlp", "lr"};
  int epochs = -1;      // override when >= 0, else model presets
  double total_s = 1.5;  // scenario defaults, split evenly over load buses
  double pf = 0.9;
  int pool_size = 5000;
  int stress_points = 128;
};

struct SweepCell {
  std::string cell;  // e.g. "noise=0.05"
  std::string model;
  bool failed = false;
  std::string error;
  EvalReport report;
  // mean MSE(v) divided by the axis' reference cell;
  // NaN when the reference is not part of the sweep.
  double normalized_v = 0.0;
};

// Trains and evaluates every cell of the axis; cell failures are
// recorded and the sweep continues. Deterministic per spec.seed.
std::vector<SweepCell> run_sweep(const SweepSpec& spec);

// Long-format CSV (axis, cell, model, metric, value) for plotting, and a
// JSON dump of the full reports.
void save_sweep_csv(const std::vector<SweepCell>& cells, const std::string& axis,
                    const std::string& path);
void save_sweep_json(const std::vector<SweepCell>& cells, const std::string& axis,
                     const std::string& path);
void save_report_json(const EvalReport& report, const std::string& path);
void save_report_csv(const EvalReport& report, const std::string& path);

// Even split of total_s over the load buses with a uniform power factor.
SamplingSpec default_sampling(const Network& net, double total_s, double pf, int pool_size,
                              std::uint64_t seed);

}  // namespace pfkit
