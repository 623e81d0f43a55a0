#include "pfkit/scenario.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace pfkit {

namespace {
using nlohmann::json;

// Shortest exact round-trip rendering of a double.
void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(const char* begin, const char* end, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ValidationError(where, "invalid number '" + std::string(begin, end) + "'");
  return v;
}
}  // namespace

void SamplingSpec::validate(int n_load) const {
  if (static_cast<int>(base_s.size()) != n_load)
    throw ValidationError("base_s", "expected " + std::to_string(n_load) + " entries, got " +
                                        std::to_string(base_s.size()));
  if (static_cast<int>(base_pf.size()) != n_load)
    throw ValidationError("base_pf", "expected " + std::to_string(n_load) + " entries, got " +
                                         std::to_string(base_pf.size()));
  for (std::size_t i = 0; i < base_s.size(); ++i) {
    if (base_s[i] <= 0.0)
      throw ValidationError("base_s[" + std::to_string(i) + "]", "must be positive");
    if (base_pf[i] <= 0.0 || base_pf[i] > 1.0)
      throw ValidationError("base_pf[" + std::to_string(i) + "]", "must be in (0, 1]");
  }
  if (rel_std <= 0.0) throw ValidationError("rel_std", "must be positive");
  if (pool_size <= 0) throw ValidationError("pool_size", "must be positive");
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < rows(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

std::vector<LoadVector> sample_scenarios(const SamplingSpec& spec, int n_load) {
  spec.validate(n_load);
  std::vector<LoadVector> pool(spec.pool_size);
  for (int r = 0; r < spec.pool_size; ++r) {
    Rng rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(r) + 1)));
    LoadVector& lv = pool[r];
    lv.p_d.resize(n_load);
    lv.q_d.resize(n_load);
    for (int i = 0; i < n_load; ++i) {
      double s = 0.0;
      do {
        s = rng.normal(spec.base_s[i], spec.rel_std * spec.base_s[i]);
      } while (s <= 0.0);
      double p = s * spec.base_pf[i];
      double q = std::sqrt(s * s - p * p);
      // Loads consume power: injections are negative.
      lv.p_d[i] = -p;
      lv.q_d[i] = -q;
    }
  }
  return pool;
}

Dataset build_dataset(const Network& net, const AdmittanceMatrix& y,
                      const std::vector<LoadVector>& pool, int n_points, std::uint64_t seed,
                      double solver_tol) {
  if (n_points <= 0) throw ValidationError("n_points", "must be positive");
  if (n_points > static_cast<int>(pool.size()))
    throw DatasetError("requested " + std::to_string(n_points) + " points from a pool of " +
                       std::to_string(pool.size()));

  int n = net.n_load();
  auto load_idx = net.load_indices();

  std::vector<int> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng sel_rng(splitmix64(seed));
  sel_rng.shuffle(order);

  Dataset ds;
  ds.n_load = n;
  ds.x.resize(n_points, 2 * n);
  ds.y.resize(n_points, 2 * n);
  ds.meta.dataset_seed = seed;
  ds.meta.solver_tol = solver_tol;
  for (int i : load_idx) ds.meta.load_bus_ids.push_back(net.buses[i].id);

  int max_failures = n_points / 10;
  int row = 0, failures = 0;
  for (std::size_t pos = 0; pos < order.size() && row < n_points; ++pos) {
    const LoadVector& lv = pool[order[pos]];
    PfSolution sol = solve_newton_raphson(net, y, lv, solver_tol, 50);
    if (!sol.converged()) {
      if (++failures > max_failures)
        throw DatasetError("power flow failed on " + std::to_string(failures) +
                           " scenarios (limit " + std::to_string(max_failures) +
                           " for " + std::to_string(n_points) + " points)");
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
  if (row < n_points)
    throw DatasetError("pool exhausted after " + std::to_string(row) + " of " +
                       std::to_string(n_points) + " points");
  ds.meta.n_failures = failures;

  // 40/20/40 split on a freshly shuffled row order.
  std::vector<int> rows(n_points);
  for (int i = 0; i < n_points; ++i) rows[i] = i;
  Rng split_rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL));
  split_rng.shuffle(rows);
  int n_train = static_cast<int>(std::floor(0.4 * n_points));
  int n_train_val = static_cast<int>(std::floor(0.6 * n_points));
  ds.split.assign(n_points, Split::Test);
  for (int i = 0; i < n_train; ++i) ds.split[rows[i]] = Split::Train;
  for (int i = n_train; i < n_train_val; ++i) ds.split[rows[i]] = Split::Val;
  return ds;
}

Dataset inject_noise(Dataset ds, const NoiseSpec& spec) {
  if (spec.level < 0.0) throw ValidationError("noise.level", "must be non-negative");
  ds.meta.noise = spec;
  if (spec.level == 0.0) {
    ds.x_noisy.resize(0, 0);
    ds.y_noisy.resize(0, 0);
    return ds;
  }
  double amp_x = spec.x_range_at_max * spec.level / 0.10;
  double amp_y = spec.y_range_at_max * spec.level / 0.10;
  ds.x_noisy = ds.x;
  ds.y_noisy = ds.y;
  Rng rng(splitmix64(spec.seed));
  for (int r = 0; r < ds.rows(); ++r) {
    if (ds.split[r] != Split::Train) continue;
    for (int c = 0; c < ds.x.cols(); ++c) ds.x_noisy(r, c) += rng.uniform(0.0, amp_x) * rng.sign();
    for (int c = 0; c < ds.y.cols(); ++c) ds.y_noisy(r, c) += rng.uniform(0.0, amp_y) * rng.sign();
  }
  return ds;
}

Normalization fit_normalization(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  if (rows.empty()) throw ValidationError("normalization", "no rows to fit on");
  Normalization norm;
  norm.mean = Eigen::VectorXd::Zero(x.cols());
  norm.std = Eigen::VectorXd::Zero(x.cols());
  for (int r : rows) norm.mean += x.row(r).transpose();
  norm.mean /= static_cast<double>(rows.size());
  for (int r : rows) {
    Eigen::VectorXd d = x.row(r).transpose() - norm.mean;
    norm.std += d.cwiseProduct(d);
  }
  norm.std = (norm.std / static_cast<double>(rows.size())).cwiseSqrt().cwiseMax(1e-12);
  return norm;
}

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd& m) const {
  Eigen::MatrixXd out = m;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

void save_dataset(const Dataset& ds, const std::string& csv_path) {
  int n = ds.n_load;
  std::string out;
  out.reserve(static_cast<std::size_t>(ds.rows()) * ds.x.cols() * 20);
  for (int k = 0; k < n; ++k) out += "p_d_" + std::to_string(ds.meta.load_bus_ids[k]) + ",";
  for (int k = 0; k < n; ++k) out += "q_d_" + std::to_string(ds.meta.load_bus_ids[k]) + ",";
  for (int k = 0; k < n; ++k) out += "mu_" + std::to_string(ds.meta.load_bus_ids[k]) + ",";
  for (int k = 0; k < n; ++k) {
    out += "omega_" + std::to_string(ds.meta.load_bus_ids[k]);
    out += (k + 1 < n) ? "," : "\n";
  }
  for (int r = 0; r < ds.rows(); ++r) {
    for (int c = 0; c < 2 * n; ++c) {
      append_double(out, ds.x(r, c));
      out += ',';
    }
    for (int c = 0; c < 2 * n; ++c) {
      append_double(out, ds.y(r, c));
      out += (c + 1 < 2 * n) ? ',' : '\n';
    }
  }
  write_text_file(csv_path, out);

  json meta;
  meta["version"] = kVersion;
  meta["n_load"] = n;
  meta["rows"] = ds.rows();
  meta["load_bus_ids"] = ds.meta.load_bus_ids;
  meta["scenario_seed"] = ds.meta.scenario_seed;
  meta["dataset_seed"] = ds.meta.dataset_seed;
  meta["solver_tol"] = ds.meta.solver_tol;
  meta["n_failures"] = ds.meta.n_failures;
  meta["grid_hash"] = ds.meta.grid_hash;
  meta["noise"] = {{"level", ds.meta.noise.level},
                   {"x_range_at_max", ds.meta.noise.x_range_at_max},
                   {"y_range_at_max", ds.meta.noise.y_range_at_max},
                   {"seed", ds.meta.noise.seed}};
  std::vector<int> train, val, test;
  for (int r = 0; r < ds.rows(); ++r) {
    if (ds.split[r] == Split::Train) train.push_back(r);
    else if (ds.split[r] == Split::Val) val.push_back(r);
    else test.push_back(r);
  }
  meta["split"] = {{"train", train}, {"val", val}, {"test", test}};
  Normalization norm = fit_normalization(ds.x, train);
  std::vector<double> mean(norm.mean.data(), norm.mean.data() + norm.mean.size());
  std::vector<double> stdv(norm.std.data(), norm.std.data() + norm.std.size());
  meta["normalization"] = {{"mean", mean}, {"std", stdv}};
  write_text_file(csv_path + ".meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& csv_path) {
  json meta;
  try {
    meta = json::parse(read_text_file(csv_path + ".meta.json"));
  } catch (const json::parse_error& e) {
    throw ValidationError(csv_path + ".meta.json", std::string("invalid JSON: ") + e.what());
  }

  Dataset ds;
  ds.n_load = meta.at("n_load").get<int>();
  int rows = meta.at("rows").get<int>();
  ds.meta.load_bus_ids = meta.at("load_bus_ids").get<std::vector<int>>();
  ds.meta.scenario_seed = meta.at("scenario_seed").get<std::uint64_t>();
  ds.meta.dataset_seed = meta.at("dataset_seed").get<std::uint64_t>();
  ds.meta.solver_tol = meta.at("solver_tol").get<double>();
  ds.meta.n_failures = meta.at("n_failures").get<int>();
  ds.meta.grid_hash = meta.at("grid_hash").get<std::string>();
  NoiseSpec noise;
  noise.level = meta.at("noise").at("level").get<double>();
  noise.x_range_at_max = meta.at("noise").at("x_range_at_max").get<double>();
  noise.y_range_at_max = meta.at("noise").at("y_range_at_max").get<double>();
  noise.seed = meta.at("noise").at("seed").get<std::uint64_t>();

  ds.split.assign(rows, Split::Test);
  for (int r : meta.at("split").at("train").get<std::vector<int>>()) ds.split[r] = Split::Train;
  for (int r : meta.at("split").at("val").get<std::vector<int>>()) ds.split[r] = Split::Val;

  int n = ds.n_load;
  ds.x.resize(rows, 2 * n);
  ds.y.resize(rows, 2 * n);
  std::string text = read_text_file(csv_path);
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw ValidationError(csv_path, "missing header line");
  ++pos;
  int cols = 4 * n;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::size_t end = text.find_first_of(",\n", pos);
      if (end == std::string::npos)
        throw ValidationError(csv_path, "truncated at row " + std::to_string(r));
      double v = parse_double(text.data() + pos, text.data() + end,
                              csv_path + ":row " + std::to_string(r));
      if (c < 2 * n)
        ds.x(r, c) = v;
      else
        ds.y(r, c - 2 * n) = v;
      pos = end + 1;
    }
  }
  if (noise.level > 0.0) ds = inject_noise(std::move(ds), noise);
  else ds.meta.noise = noise;
  return ds;
}

}  // namespace pfkit
