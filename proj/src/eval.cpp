#include "pfkit/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace pfkit {

namespace {
using nlohmann::json;

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

// mean/max/std across units (buses or lines) of per-unit MSEs, plus the
// spread of per-row mean squared errors. sq is rows x units of squared
// errors.
MetricStats stats_from_squared(const Matrix& sq) {
  MetricStats st;
  if (sq.size() == 0) return st;
  Eigen::VectorXd per_unit = sq.colwise().mean();
  st.mean = per_unit.mean();
  st.max_unit = per_unit.maxCoeff();
  st.std_units = std::sqrt((per_unit.array() - st.mean).square().mean());
  Eigen::VectorXd per_row = sq.rowwise().mean();
  st.std_rows = std::sqrt((per_row.array() - per_row.mean()).square().mean());
  return st;
}

// Full network voltage state from one row of load-bus values; the
// reference bus stays at 1 + j0.
VoltageState state_from_row(const Network& net, const std::vector<int>& load_idx,
                            const Eigen::RowVectorXd& row, int n) {
  VoltageState s;
  s.mu.assign(net.n_total(), 1.0);
  s.omega.assign(net.n_total(), 0.0);
  for (int k = 0; k < n; ++k) {
    s.mu[load_idx[k]] = row(k);
    s.omega[load_idx[k]] = row(n + k);
  }
  return s;
}
}  // namespace

namespace {
// Gathers the split's clean inputs and labels.
void gather_split(const Dataset& ds, Split split, Matrix& x, Matrix& y, const char* who) {
  auto rows = ds.indices_of(split);
  if (rows.empty()) throw ValidationError(who, "empty split");
  x.resize(rows.size(), ds.x.cols());
  y.resize(rows.size(), ds.y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(i) = ds.x.row(rows[i]);
    y.row(i) = ds.y.row(rows[i]);
  }
}
}  // namespace

DirectReport direct_from_predictions(const Matrix& pred, const Matrix& labels, int n_load) {
  int n = n_load;
  Matrix sq_v(pred.rows(), n), sq_d(pred.rows(), n);
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (int k = 0; k < n; ++k) {
      double vh = std::hypot(pred(r, k), pred(r, n + k));
      double dh = std::atan2(pred(r, n + k), pred(r, k));
      double vt = std::hypot(labels(r, k), labels(r, n + k));
      double dt = std::atan2(labels(r, n + k), labels(r, k));
      sq_v(r, k) = (vh - vt) * (vh - vt);
      sq_d(r, k) = (dh - dt) * (dh - dt);
    }
  }
  DirectReport rep;
  rep.v = stats_from_squared(sq_v);
  rep.delta = stats_from_squared(sq_d);
  return rep;
}

DerivedReport derived_from_predictions(const Matrix& pred, const Matrix& labels,
                                       const Network& net) {
  int n = net.n_load();
  auto load_idx = net.load_indices();
  Eigen::Index n_lines = static_cast<Eigen::Index>(net.lines.size());
  Matrix sq_i(pred.rows(), n_lines), sq_p(pred.rows(), n_lines), sq_q(pred.rows(), n_lines);
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    LineFlows fp = line_flows(net, state_from_row(net, load_idx, pred.row(r), n));
    LineFlows ft = line_flows(net, state_from_row(net, load_idx, labels.row(r), n));
    for (Eigen::Index l = 0; l < n_lines; ++l) {
      sq_i(r, l) = std::pow(fp.current_mag[l] - ft.current_mag[l], 2);
      sq_p(r, l) = std::pow(fp.p_send[l] - ft.p_send[l], 2);
      sq_q(r, l) = std::pow(fp.q_send[l] - ft.q_send[l], 2);
    }
  }
  DerivedReport rep;
  rep.i = stats_from_squared(sq_i);
  rep.p = stats_from_squared(sq_p);
  rep.q = stats_from_squared(sq_q);
  return rep;
}

DirectReport evaluate_direct(Model& model, const Normalization& norm, const Dataset& ds,
                             Split split, const Network& net) {
  (void)net;
  Matrix x, y;
  gather_split(ds, split, x, y, "evaluate_direct");
  return direct_from_predictions(predict(model, norm, x), y, ds.n_load);
}

DerivedReport evaluate_derived(Model& model, const Normalization& norm, const Dataset& ds,
                               Split split, const Network& net) {
  Matrix x, y;
  gather_split(ds, split, x, y, "evaluate_derived");
  return derived_from_predictions(predict(model, norm, x), y, net);
}

EvalReport evaluate_stub(const Dataset& ds, Split split, const Network& net,
                         const std::string& system) {
  Matrix x, y;
  gather_split(ds, split, x, y, "evaluate_stub");
  EvalReport rep;
  rep.model_kind = "labels_stub";
  rep.system = system;
  rep.rows = static_cast<int>(y.rows());
  rep.direct = direct_from_predictions(y, y, ds.n_load);
  rep.derived = derived_from_predictions(y, y, net);
  rep.dataset_hash = dataset_content_hash(ds);
  return rep;
}

EvalReport evaluate_model(Model& model, const Normalization& norm, const Dataset& ds, Split split,
                          const Network& net, const std::string& kind, const std::string& system) {
  EvalReport rep;
  rep.model_kind = kind;
  rep.system = system;
  rep.rows = static_cast<int>(ds.indices_of(split).size());
  rep.direct = evaluate_direct(model, norm, ds, split, net);
  rep.derived = evaluate_derived(model, norm, ds, split, net);
  rep.dataset_hash = dataset_content_hash(ds);
  return rep;
}

std::string dataset_content_hash(const Dataset& ds) {
  std::uint64_t h = fnv1a(ds.x.data(), sizeof(double) * ds.x.size());
  h = fnv1a(ds.y.data(), sizeof(double) * ds.y.size(), h);
  h = fnv1a(ds.split.data(), ds.split.size(), h);
  return hex64(h);
}

SamplingSpec default_sampling(const Network& net, double total_s, double pf, int pool_size,
                              std::uint64_t seed) {
  if (total_s <= 0.0) throw ValidationError("total_s", "must be positive");
  int n = net.n_load();
  SamplingSpec spec;
  // Heterogeneous nominal pattern: lognormal per-bus weights (their own
  // seeded stream, so the pattern is a stable property of the seed),
  // normalized to total_s. Concentrated loads drive parts of the feeder
  // into the nonlinear regime; an even split keeps the voltage response
  // nearly affine and defeats the point of learning it.
  Rng rng(splitmix64(seed ^ 0x6c6f616473ULL));
  std::vector<double> w(n);
  double sum = 0.0;
  for (double& wi : w) {
    wi = std::exp(rng.normal());
    sum += wi;
  }
  spec.base_s.resize(n);
  for (int i = 0; i < n; ++i) spec.base_s[i] = total_s * w[i] / sum;
  spec.base_pf.assign(n, pf);
  spec.pool_size = pool_size;
  spec.seed = seed;
  return spec;
}

StressResult stress_eval(Model& model, const Normalization& norm, const Network& net,
                         const AdmittanceMatrix& y, const SamplingSpec& base, double scale,
                         int n_points, std::uint64_t seed, const std::string& kind) {
  if (scale < 1.0) throw ValidationError("scale", "must be >= 1");
  SamplingSpec spec = base;
  for (double& s : spec.base_s) s *= scale;
  spec.pool_size = 2 * n_points;
  spec.seed = seed;
  auto pool = sample_scenarios(spec, net.n_load());

  int n = net.n_load();
  auto load_idx = net.load_indices();
  Dataset ds;
  ds.n_load = n;
  ds.x.resize(n_points, 2 * n);
  ds.y.resize(n_points, 2 * n);
  int row = 0, failures = 0;
  for (const LoadVector& lv : pool) {
    if (row >= n_points) break;
    PfSolution sol = solve_newton_raphson(net, y, lv, 1e-10, 50);
    if (!sol.converged()) {
      ++failures;
      continue;
    }
    for (int k = 0; k < n; ++k) {
      ds.x(row, k) = lv.p_d[k];
      ds.x(row, n + k) = lv.q_d[k];
      ds.y(row, k) = sol.state.mu[load_idx[k]];
      ds.y(row, n + k) = sol.state.omega[load_idx[k]];
    }
    ++row;
  }
  if (row == 0) throw DatasetError("stress_eval: no scenario converged at scale " +
                                   std::to_string(scale));
  ds.x.conservativeResize(row, Eigen::NoChange);
  ds.y.conservativeResize(row, Eigen::NoChange);
  ds.split.assign(row, Split::Test);
  for (int i : load_idx) ds.meta.load_bus_ids.push_back(net.buses[i].id);

  StressResult res;
  res.n_failures = failures;
  res.report = evaluate_model(model, norm, ds, Split::Test, net, kind,
                              "stress_scale_" + std::to_string(scale));
  return res;
}

namespace {

struct TrainedModel {
  Model model;
  Normalization norm;
  std::uint64_t seed = 0;
};

TrainedModel train_for_sweep(const std::string& kind, Dataset& ds, const Network& net,
                             const AdmittanceMatrix& y, std::uint64_t seed, int epochs_override) {
  TrainedModel out;
  out.seed = seed;
  if (kind == "pinn4pf" || kind == "pinn4pf_relu" || kind == "pinn4pf_supervised" ||
      kind == "pinn4pf_relu_supervised") {
    Pinn4pfConfig cfg;
    cfg.seed = seed;
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    cfg.adaptive_heads = kind.find("relu") == std::string::npos;
    cfg.physical_loss = kind.find("supervised") == std::string::npos;
    TrainResult tr = train_pinn4pf(ds, net, y, cfg);
    out.model = std::move(tr.best);
    out.norm = tr.norm;
  } else if (kind == "mlp") {
    MlpConfig cfg;
    cfg.seed = seed;
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    TrainResult tr = train_mlp(ds, cfg);
    out.model = std::move(tr.best);
    out.norm = tr.norm;
  } else if (kind == "lr") {
    LrConfig cfg;
    cfg.seed = seed;
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    TrainResult tr = train_lr(ds, cfg);
    out.model = std::move(tr.best);
    out.norm = tr.norm;
  } else {
    throw ValidationError("model", "unknown model kind '" + kind + "'");
  }
  return out;
}

std::string format_value(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

}  // namespace

std::vector<SweepCell> run_sweep(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  auto add_failure = [&](const std::string& cell, const std::string& model,
                         const std::string& err) {
    SweepCell c;
    c.cell = cell;
    c.model = model;
    c.failed = true;
    c.error = err;
    cells.push_back(c);
  };

  auto model_seed = [&](const std::string& kind, std::size_t cell_idx) {
    return splitmix64(spec.seed ^ fnv1a(kind) ^ splitmix64(cell_idx + 1));
  };

  if (spec.axis == SweepAxis::SystemSize) {
    if (spec.grid_paths.size() != spec.values.size() ||
        spec.points_per_grid.size() != spec.values.size())
      throw ValidationError("sweep", "system axis needs one grid and point count per value");
    for (std::size_t ci = 0; ci < spec.values.size(); ++ci) {
      std::string cell = "buses=" + std::to_string(static_cast<int>(spec.values[ci]));
      try {
        Network net = load_network(spec.grid_paths[ci]);
        AdmittanceMatrix y = build_admittance(net);
        auto pool = sample_scenarios(
            default_sampling(net, spec.total_s, spec.pf, spec.pool_size, splitmix64(spec.seed)),
            net.n_load());
        Dataset ds = build_dataset(net, y, pool, spec.points_per_grid[ci], spec.seed);
        for (const std::string& kind : spec.models) {
          try {
            TrainedModel tm = train_for_sweep(kind, ds, net, y, model_seed(kind, ci), spec.epochs);
            SweepCell c;
            c.cell = cell;
            c.model = kind;
            c.report = evaluate_model(tm.model, tm.norm, ds, Split::Test, net, kind, cell);
            c.report.model_seed = tm.seed;
            c.normalized_v = std::numeric_limits<double>::quiet_NaN();
            cells.push_back(c);
          } catch (const std::exception& e) {
            add_failure(cell, kind, e.what());
          }
        }
      } catch (const std::exception& e) {
        add_failure(cell, "*", e.what());
      }
    }
    return cells;
  }

  Network net = load_network(spec.grid_path);
  AdmittanceMatrix y = build_admittance(net);
  auto pool = sample_scenarios(
      default_sampling(net, spec.total_s, spec.pf, spec.pool_size, splitmix64(spec.seed)),
      net.n_load());

  if (spec.axis == SweepAxis::Noise) {
    Dataset clean = build_dataset(net, y, pool, spec.points, spec.seed);
    for (std::size_t ci = 0; ci < spec.values.size(); ++ci) {
      double level = spec.values[ci];
      std::string cell = "noise=" + format_value(level);
      NoiseSpec ns;
      ns.level = level;
      ns.seed = splitmix64(spec.seed ^ (0x1000 + ci));
      Dataset ds = inject_noise(clean, ns);
      for (const std::string& kind : spec.models) {
        try {
          TrainedModel tm = train_for_sweep(kind, ds, net, y, model_seed(kind, ci), spec.epochs);
          SweepCell c;
          c.cell = cell;
          c.model = kind;
          c.report = evaluate_model(tm.model, tm.norm, ds, Split::Test, net, kind, cell);
          c.report.model_seed = tm.seed;
          cells.push_back(c);
        } catch (const std::exception& e) {
          add_failure(cell, kind, e.what());
        }
      }
    }
    // Normalized curve: divide by PINN4PF at the 10% level (fall back
    // to the largest swept level).
    double ref_level = *std::max_element(spec.values.begin(), spec.values.end());
    for (double v : spec.values)
      if (v == 0.10) ref_level = 0.10;
    std::string ref_cell = "noise=" + format_value(ref_level);
    double ref = std::numeric_limits<double>::quiet_NaN();
    for (const SweepCell& c : cells)
      if (!c.failed && c.model == "pinn4pf" && c.cell == ref_cell) ref = c.report.direct.v.mean;
    for (SweepCell& c : cells) {
      if (c.failed) continue;
      c.normalized_v = c.report.direct.v.mean / ref;
      if (c.model == "pinn4pf" && c.cell == ref_cell) c.normalized_v = 1.0;
    }
    return cells;
  }

  if (spec.axis == SweepAxis::TrainSize) {
    for (std::size_t ci = 0; ci < spec.values.size(); ++ci) {
      int points = static_cast<int>(spec.values[ci]);
      std::string cell = "points=" + std::to_string(points);
      try {
        Dataset ds = build_dataset(net, y, pool, points, spec.seed);
        for (const std::string& kind : spec.models) {
          try {
            TrainedModel tm = train_for_sweep(kind, ds, net, y, model_seed(kind, ci), spec.epochs);
            SweepCell c;
            c.cell = cell;
            c.model = kind;
            c.report = evaluate_model(tm.model, tm.norm, ds, Split::Test, net, kind, cell);
            c.report.model_seed = tm.seed;
            cells.push_back(c);
          } catch (const std::exception& e) {
            add_failure(cell, kind, e.what());
          }
        }
      } catch (const std::exception& e) {
        add_failure(cell, "*", e.what());
      }
    }
    // Normalized curve: divide by PINN4PF at 256 points (fall back to
    // the smallest swept size).
    int ref_points = static_cast<int>(*std::min_element(spec.values.begin(), spec.values.end()));
    for (double v : spec.values)
      if (static_cast<int>(v) == 256) ref_points = 256;
    std::string ref_cell = "points=" + std::to_string(ref_points);
    double ref = std::numeric_limits<double>::quiet_NaN();
    for (const SweepCell& c : cells)
      if (!c.failed && c.model == "pinn4pf" && c.cell == ref_cell) ref = c.report.direct.v.mean;
    for (SweepCell& c : cells) {
      if (c.failed) continue;
      c.normalized_v = c.report.direct.v.mean / ref;
      if (c.model == "pinn4pf" && c.cell == ref_cell) c.normalized_v = 1.0;
    }
    return cells;
  }

  if (spec.axis == SweepAxis::Ablation) {
    Dataset ds = build_dataset(net, y, pool, spec.points, spec.seed);
    const char* kinds[] = {"pinn4pf_relu_supervised", "pinn4pf_supervised", "pinn4pf_relu",
                           "pinn4pf"};
    const char* labels[] = {"relu_supervised", "adaptive_supervised", "relu_physical",
                            "adaptive_physical"};
    for (int k = 0; k < 4; ++k) {
      try {
        TrainedModel tm = train_for_sweep(kinds[k], ds, net, y,
                                          model_seed("pinn4pf", 0),  // same seed: isolate the ablation
                                          spec.epochs);
        SweepCell c;
        c.cell = labels[k];
        c.model = kinds[k];
        c.report = evaluate_model(tm.model, tm.norm, ds, Split::Test, net, kinds[k], labels[k]);
        c.report.model_seed = tm.seed;
        c.normalized_v = std::numeric_limits<double>::quiet_NaN();
        cells.push_back(c);
      } catch (const std::exception& e) {
        add_failure(labels[k], kinds[k], e.what());
      }
    }
    return cells;
  }

  // Stress axis: train once per model on the base dataset, then evaluate
  // at each scale on freshly solved out-of-distribution scenarios.
  Dataset ds = build_dataset(net, y, pool, spec.points, spec.seed);
  SamplingSpec base = default_sampling(net, spec.total_s, spec.pf, spec.pool_size, spec.seed);
  for (const std::string& kind : spec.models) {
    TrainedModel tm;
    bool trained = false;
    try {
      tm = train_for_sweep(kind, ds, net, y, model_seed(kind, 0), spec.epochs);
      trained = true;
    } catch (const std::exception& e) {
      add_failure("*", kind, e.what());
    }
    if (!trained) continue;
    for (std::size_t ci = 0; ci < spec.values.size(); ++ci) {
      double scale = spec.values[ci];
      std::string cell = "scale=" + format_value(scale);
      try {
        StressResult sr = stress_eval(tm.model, tm.norm, net, y, base, scale, spec.stress_points,
                                      splitmix64(spec.seed ^ (0x2000 + ci)), kind);
        SweepCell c;
        c.cell = cell;
        c.model = kind;
        c.report = sr.report;
        c.report.model_seed = tm.seed;
        c.normalized_v = std::numeric_limits<double>::quiet_NaN();
        cells.push_back(c);
      } catch (const std::exception& e) {
        add_failure(cell, kind, e.what());
      }
    }
  }
  return cells;
}

namespace {
void metric_rows(std::string& out, const std::string& axis, const SweepCell& c) {
  auto row = [&](const std::string& metric, double v) {
    out += axis + "," + c.cell + "," + c.model + "," + metric + ",";
    append_double(out, v);
    out += "\n";
  };
  row("mse_v_mean", c.report.direct.v.mean);
  row("mse_v_max", c.report.direct.v.max_unit);
  row("mse_v_std_units", c.report.direct.v.std_units);
  row("mse_v_std_rows", c.report.direct.v.std_rows);
  row("mse_delta_mean", c.report.direct.delta.mean);
  row("mse_delta_max", c.report.direct.delta.max_unit);
  row("mse_i_mean", c.report.derived.i.mean);
  row("mse_i_max", c.report.derived.i.max_unit);
  row("mse_p_mean", c.report.derived.p.mean);
  row("mse_q_mean", c.report.derived.q.mean);
  if (std::isfinite(c.normalized_v)) row("mse_v_normalized", c.normalized_v);
}

json stats_json(const MetricStats& s) {
  return {{"mean", s.mean},
          {"max_unit", s.max_unit},
          {"std_units", s.std_units},
          {"std_rows", s.std_rows}};
}

json report_json(const EvalReport& r) {
  return {{"model", r.model_kind},
          {"system", r.system},
          {"rows", r.rows},
          {"dataset_hash", r.dataset_hash},
          {"model_seed", r.model_seed},
          {"mse_v", stats_json(r.direct.v)},
          {"mse_delta", stats_json(r.direct.delta)},
          {"mse_i", stats_json(r.derived.i)},
          {"mse_p", stats_json(r.derived.p)},
          {"mse_q", stats_json(r.derived.q)}};
}
}  // namespace

void save_sweep_csv(const std::vector<SweepCell>& cells, const std::string& axis,
                    const std::string& path) {
  std::string out = "axis,cell,model,metric,value\n";
  for (const SweepCell& c : cells) {
    if (c.failed) {
      out += axis + "," + c.cell + "," + c.model + ",failed,nan\n";
      continue;
    }
    metric_rows(out, axis, c);
  }
  write_text_file(path, out);
}

void save_sweep_json(const std::vector<SweepCell>& cells, const std::string& axis,
                     const std::string& path) {
  json arr = json::array();
  for (const SweepCell& c : cells) {
    json jc;
    jc["axis"] = axis;
    jc["cell"] = c.cell;
    jc["model"] = c.model;
    jc["failed"] = c.failed;
    if (c.failed)
      jc["error"] = c.error;
    else {
      jc["report"] = report_json(c.report);
      if (std::isfinite(c.normalized_v)) jc["normalized_v"] = c.normalized_v;
    }
    arr.push_back(jc);
  }
  write_text_file(path, arr.dump(2) + "\n");
}

void save_report_json(const EvalReport& report, const std::string& path) {
  write_text_file(path, report_json(report).dump(2) + "\n");
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::string out = "metric,value\n";
  auto row = [&](const std::string& metric, double v) {
    out += metric + ",";
    append_double(out, v);
    out += "\n";
  };
  row("mse_v_mean", report.direct.v.mean);
  row("mse_v_max", report.direct.v.max_unit);
  row("mse_v_std_units", report.direct.v.std_units);
  row("mse_v_std_rows", report.direct.v.std_rows);
  row("mse_delta_mean", report.direct.delta.mean);
  row("mse_delta_max", report.direct.delta.max_unit);
  row("mse_delta_std_units", report.direct.delta.std_units);
  row("mse_delta_std_rows", report.direct.delta.std_rows);
  row("mse_i_mean", report.derived.i.mean);
  row("mse_i_max", report.derived.i.max_unit);
  row("mse_p_mean", report.derived.p.mean);
  row("mse_p_max", report.derived.p.max_unit);
  row("mse_q_mean", report.derived.q.mean);
  row("mse_q_max", report.derived.q.max_unit);
  write_text_file(path, out);
}

}  // namespace pfkit
