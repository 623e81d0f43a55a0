// pfkit: power-flow dataset generation, model training, and evaluation.
//
// Exit codes: 0 success, 2 validation failure, 3 dataset generation
// failure, 4 training divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfkit/eval.hpp"
#include "pfkit/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pfkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDataset = 3;
constexpr int kExitDivergence = 4;

struct Preset {
  int buses;
  int points;
  std::uint64_t grid_seed;
  double total_s;  // calibrated nominal loading for the bundled feeder
};

const std::map<std::string, Preset> kPresets = {
    {"paper-4bus", {4, 256, 7, 1.5}},
    {"paper-15bus", {15, 512, 3, 5.5}},
    {"paper-290bus", {290, 1024, 1, 1.5}},
    {"paper-2224bus", {2224, 2048, 1, 1.5}},
};

std::string default_out_dir() {
  const char* env = std::getenv("PFKIT_OUT_DIR");
  return env && *env ? env : ".";
}

std::string join_args(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

// Bundled fixture for a preset if present, else the identical
// deterministic feeder regenerated in place.
Network preset_network(const Preset& p, std::string& grid_path_out, const std::string& out_dir) {
  std::string bundled = "data/feeders/feeder" + std::to_string(p.buses) + ".json";
  if (fs::exists(bundled)) {
    grid_path_out = bundled;
    return load_network(bundled);
  }
  Network net = make_synthetic_feeder(p.buses, p.grid_seed);
  ensure_dir(out_dir);
  grid_path_out = out_dir + "/feeder" + std::to_string(p.buses) + ".json";
  save_network(net, grid_path_out);
  return net;
}

Dataset generate_dataset(const Network& net, const AdmittanceMatrix& y, int points,
                         std::uint64_t seed, double noise_level, std::uint64_t noise_seed,
                         int pool_size, double total_s, double pf, double tol,
                         const std::string& grid_hash) {
  SamplingSpec spec = default_sampling(net, total_s, pf, pool_size, seed);
  auto pool = sample_scenarios(spec, net.n_load());
  Dataset ds = build_dataset(net, y, pool, points, seed, tol);
  ds.meta.scenario_seed = seed;
  ds.meta.grid_hash = grid_hash;
  if (noise_level > 0.0) {
    NoiseSpec ns;
    ns.level = noise_level;
    ns.seed = noise_seed;
    ds = inject_noise(std::move(ds), ns);
  }
  return ds;
}

int cmd_grid_make(int buses, std::uint64_t seed, double base_kv, const std::string& out) {
  Network net = make_synthetic_feeder(buses, seed);
  if (base_kv > 0.0)
    for (Bus& b : net.buses) b.base_kv = base_kv;
  save_network(net, out);
  std::cout << "wrote " << out << " (" << net.n_total() << " buses, " << net.lines.size()
            << " lines, hash " << hash_file(out) << ")\n";
  return kExitOk;
}

int cmd_grid_validate(const std::string& file) {
  load_network(file);
  std::cout << file << ": ok\n";
  return kExitOk;
}

int cmd_grid_info(const std::string& file) {
  Network net = load_network(file);
  std::cout << "file: " << file << "\n"
            << "buses: " << net.n_total() << " (1 reference, " << net.n_load() << " load)\n"
            << "lines: " << net.lines.size() << "\n"
            << "base_mva: " << net.base_mva << "\n"
            << "connected: yes\n"
            << "hash: " << hash_file(file) << "\n";
  return kExitOk;
}

int cmd_dataset_generate(const std::string& grid, int points, std::uint64_t seed,
                         double noise_level, std::uint64_t noise_seed, int pool_size,
                         double total_s, double pf, double tol, const std::string& out_dir,
                         const std::string& command) {
  Network net = load_network(grid);
  AdmittanceMatrix y = build_admittance(net);
  if (points <= 0) {
    // size-matched default: 256/512/1024/2048 for the preset system sizes
    int n = net.n_total();
    points = n <= 4 ? 256 : n <= 15 ? 512 : n <= 290 ? 1024 : 2048;
  }
  Dataset ds = generate_dataset(net, y, points, seed, noise_level, noise_seed, pool_size, total_s,
                                pf, tol, hash_file(grid));
  ensure_dir(out_dir);
  std::string csv = out_dir + "/dataset.csv";
  save_dataset(ds, csv);

  RunManifest m;
  m.command = command;
  m.hashes["grid"] = ds.meta.grid_hash;
  m.hashes["dataset"] = hash_file(csv);
  m.hashes["dataset_meta"] = hash_file(csv + ".meta.json");
  m.params["points"] = std::to_string(points);
  m.params["seed"] = std::to_string(seed);
  m.params["noise_level"] = std::to_string(noise_level);
  m.params["noise_seed"] = std::to_string(noise_seed);
  m.params["pool_size"] = std::to_string(pool_size);
  m.params["total_s"] = std::to_string(total_s);
  m.params["pf"] = std::to_string(pf);
  m.params["solver_tol"] = std::to_string(tol);
  write_manifest(m, out_dir + "/manifest.json");
  std::cout << "wrote " << csv << " (" << ds.rows() << " rows, " << ds.meta.n_failures
            << " replaced scenarios, hash " << m.hashes["dataset"] << ")\n";
  return kExitOk;
}

void apply_config_overrides(const std::string& config_path, json& out) {
  if (config_path.empty()) return;
  try {
    out = json::parse(read_text_file(config_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(config_path, std::string("invalid JSON: ") + e.what());
  }
}

template <typename T>
void maybe_set(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

int cmd_train(const std::string& kind, std::string dataset_csv, std::string grid,
              const std::string& preset_name, std::uint64_t seed, int epochs_override,
              const std::string& config_path, const std::string& out_dir,
              const std::string& command) {
  Network net;
  AdmittanceMatrix y(0);
  Dataset ds;
  std::string grid_path = grid;

  if (!preset_name.empty() && dataset_csv.empty()) {
    auto it = kPresets.find(preset_name);
    if (it == kPresets.end())
      throw ValidationError("--preset", "unknown preset '" + preset_name + "'");
    if (grid.empty()) {
      net = preset_network(it->second, grid_path, out_dir);
    } else {
      net = load_network(grid);
      grid_path = grid;
    }
    y = build_admittance(net);
    ds = generate_dataset(net, y, it->second.points, seed, 0.0, 0, 5000, it->second.total_s, 0.9,
                          1e-10, hash_file(grid_path));
    ensure_dir(out_dir);
    save_dataset(ds, out_dir + "/dataset.csv");
    dataset_csv = out_dir + "/dataset.csv";
  } else {
    if (dataset_csv.empty())
      throw ValidationError("--dataset", "required unless --preset generates one");
    ds = load_dataset(dataset_csv);
    if (kind == "pinn4pf" || !grid.empty()) {
      if (grid.empty()) throw ValidationError("--grid", "required for pinn4pf training");
      net = load_network(grid);
      y = build_admittance(net);
    }
  }

  json overrides;
  apply_config_overrides(config_path, overrides);

  TrainResult tr;
  json config_used;
  if (kind == "pinn4pf") {
    Pinn4pfConfig cfg;
    cfg.seed = seed;
    maybe_set(overrides, "n_shared_layers", cfg.n_shared_layers);
    maybe_set(overrides, "n_head_layers", cfg.n_head_layers);
    maybe_set(overrides, "lr", cfg.lr);
    maybe_set(overrides, "weight_decay", cfg.weight_decay);
    maybe_set(overrides, "dropout", cfg.dropout);
    maybe_set(overrides, "batch_size", cfg.batch_size);
    maybe_set(overrides, "epochs", cfg.epochs);
    maybe_set(overrides, "beta1_max", cfg.beta1_max);
    maybe_set(overrides, "ramp_start_epoch", cfg.ramp_start_epoch);
    maybe_set(overrides, "ramp_end_epoch", cfg.ramp_end_epoch);
    maybe_set(overrides, "seed", cfg.seed);
    maybe_set(overrides, "adaptive_heads", cfg.adaptive_heads);
    maybe_set(overrides, "physical_loss", cfg.physical_loss);
    maybe_set(overrides, "learned_psi", cfg.learned_psi);
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    config_used = {{"n_shared_layers", cfg.n_shared_layers},
                   {"n_head_layers", cfg.n_head_layers},
                   {"lr", cfg.lr},
                   {"weight_decay", cfg.weight_decay},
                   {"dropout", cfg.dropout},
                   {"batch_size", cfg.batch_size},
                   {"epochs", cfg.epochs},
                   {"beta1_max", cfg.beta1_max},
                   {"ramp_start_epoch", cfg.ramp_start_epoch},
                   {"ramp_end_epoch", cfg.ramp_end_epoch},
                   {"seed", cfg.seed},
                   {"adaptive_heads", cfg.adaptive_heads},
                   {"physical_loss", cfg.physical_loss}};
    tr = train_pinn4pf(ds, net, y, cfg);
  } else if (kind == "mlp") {
    MlpConfig cfg;
    cfg.seed = seed;
    maybe_set(overrides, "n_hidden", cfg.n_hidden);
    maybe_set(overrides, "lr", cfg.lr);
    maybe_set(overrides, "weight_decay", cfg.weight_decay);
    maybe_set(overrides, "dropout", cfg.dropout);
    maybe_set(overrides, "batch_size", cfg.batch_size);
    maybe_set(overrides, "epochs", cfg.epochs);
    maybe_set(overrides, "seed", cfg.seed);
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    config_used = {{"n_hidden", cfg.n_hidden}, {"lr", cfg.lr},
                   {"weight_decay", cfg.weight_decay}, {"dropout", cfg.dropout},
                   {"batch_size", cfg.batch_size}, {"epochs", cfg.epochs},
                   {"seed", cfg.seed}};
    tr = train_mlp(ds, cfg);
  } else if (kind == "lr") {
    LrConfig cfg;
    cfg.seed = seed;
    maybe_set(overrides, "lr", cfg.lr);
    maybe_set(overrides, "batch_size", cfg.batch_size);
    maybe_set(overrides, "epochs", cfg.epochs);
    maybe_set(overrides, "seed", cfg.seed);
    if (epochs_override >= 0) cfg.epochs = epochs_override;
    config_used = {{"lr", cfg.lr}, {"batch_size", cfg.batch_size}, {"epochs", cfg.epochs},
                   {"seed", cfg.seed}};
    tr = train_lr(ds, cfg);
  } else {
    throw ValidationError("train", "unknown model kind '" + kind + "'");
  }

  ensure_dir(out_dir);
  save_history(tr.history, out_dir + "/history.csv");

  Checkpoint ck;
  ck.kind = kind;
  ck.n_load = ds.n_load;
  ck.seed = tr.seed;
  ck.model = tr.best;
  ck.norm = tr.norm;
  ck.best_epoch = tr.best_epoch;
  ck.best_val = tr.best_val;
  ck.adam_m = tr.adam_m;
  ck.adam_v = tr.adam_v;
  ck.adam_t = tr.adam_t;
  save_checkpoint(ck, out_dir + "/checkpoint.json");

  RunManifest m;
  m.command = command;
  if (!grid_path.empty() && fs::exists(grid_path)) m.hashes["grid"] = hash_file(grid_path);
  m.hashes["dataset"] = hash_file(dataset_csv);
  m.hashes["checkpoint"] = hash_file(out_dir + "/checkpoint.json");
  m.hashes["history"] = hash_file(out_dir + "/history.csv");
  m.params["model"] = kind;
  m.params["seed"] = std::to_string(seed);
  m.params["config"] = config_used.dump();
  if (!preset_name.empty()) m.params["preset"] = preset_name;
  m.params["best_epoch"] = std::to_string(tr.best_epoch);
  if (tr.diverged) m.params["diverged"] = tr.divergence_reason;
  write_manifest(m, out_dir + "/manifest.json");

  if (tr.diverged) {
    std::cerr << "training diverged: " << tr.divergence_reason << " (history retained at "
              << out_dir << "/history.csv)\n";
    return kExitDivergence;
  }
  std::cout << "trained " << kind << ": best val " << tr.best_val << " at epoch " << tr.best_epoch
            << "; wrote " << out_dir << "/checkpoint.json\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_csv,
             const std::string& grid, bool stub_labels, const std::string& out_dir,
             const std::string& command) {
  Network net = load_network(grid);
  Dataset ds = load_dataset(dataset_csv);

  EvalReport rep;
  if (stub_labels) {
    rep = evaluate_stub(ds, Split::Test, net, grid);
  } else {
    if (checkpoint.empty())
      throw ValidationError("--checkpoint", "required unless --stub-labels is set");
    Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.n_load != ds.n_load)
      throw ValidationError("--checkpoint", "model width " + std::to_string(ck.n_load) +
                                                " does not match dataset " +
                                                std::to_string(ds.n_load));
    rep = evaluate_model(ck.model, ck.norm, ds, Split::Test, net, ck.kind, grid);
    rep.model_seed = ck.seed;
  }

  ensure_dir(out_dir);
  save_report_json(rep, out_dir + "/report.json");
  save_report_csv(rep, out_dir + "/report.csv");

  RunManifest m;
  m.command = command;
  m.hashes["grid"] = hash_file(grid);
  m.hashes["dataset"] = hash_file(dataset_csv);
  if (!checkpoint.empty()) m.hashes["checkpoint"] = hash_file(checkpoint);
  m.hashes["report"] = hash_file(out_dir + "/report.json");
  m.params["stub_labels"] = stub_labels ? "true" : "false";
  write_manifest(m, out_dir + "/manifest.json");

  std::cout << "MSE(v) mean " << rep.direct.v.mean << ", MSE(delta) mean " << rep.direct.delta.mean
            << ", MSE(i) mean " << rep.derived.i.mean << "; wrote " << out_dir << "/report.json\n";
  return kExitOk;
}

int run_and_save_sweep(const SweepSpec& spec, const std::string& axis, const std::string& out_dir,
                       const std::string& command) {
  auto cells = run_sweep(spec);
  ensure_dir(out_dir);
  save_sweep_csv(cells, axis, out_dir + "/sweep.csv");
  save_sweep_json(cells, axis, out_dir + "/sweep.json");
  RunManifest m;
  m.command = command;
  if (!spec.grid_path.empty()) m.hashes["grid"] = hash_file(spec.grid_path);
  m.hashes["sweep"] = hash_file(out_dir + "/sweep.csv");
  m.params["axis"] = axis;
  m.params["seed"] = std::to_string(spec.seed);
  write_manifest(m, out_dir + "/manifest.json");
  int failed = 0;
  for (const auto& c : cells)
    if (c.failed) ++failed;
  std::cout << "sweep " << axis << ": " << cells.size() << " cells, " << failed
            << " failed; wrote " << out_dir << "/sweep.csv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"power-flow learning toolkit"};
  app.require_subcommand(1);
  std::string command = join_args(argc, argv);

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "create/inspect network files");
  grid_cmd->require_subcommand(1);
  int gm_buses = 15;
  std::uint64_t gm_seed = 1;
  double gm_base_kv = 0.0;
  std::string gm_out = "grid.json";
  auto* gmake = grid_cmd->add_subcommand("make", "generate a synthetic radial feeder");
  gmake->add_option("--buses", gm_buses, "total bus count (including reference)")->required();
  gmake->add_option("--seed", gm_seed, "topology/impedance seed");
  gmake->add_option("--base-kv", gm_base_kv, "override base kV on all buses");
  gmake->add_option("--out", gm_out, "output JSON path");

  std::string gv_file;
  auto* gval = grid_cmd->add_subcommand("validate", "structural checks on a network file");
  gval->add_option("file", gv_file, "network JSON")->required();

  std::string gi_file;
  auto* ginfo = grid_cmd->add_subcommand("info", "print network summary");
  ginfo->add_option("file", gi_file, "network JSON")->required();

  // dataset
  auto* ds_cmd = app.add_subcommand("dataset", "scenario dataset generation");
  ds_cmd->require_subcommand(1);
  std::string dg_grid, dg_out = default_out_dir();
  int dg_points = -1, dg_pool = 5000;
  std::uint64_t dg_seed = 1, dg_noise_seed = 1;
  double dg_noise = 0.0, dg_total_s = 1.5, dg_pf = 0.9, dg_tol = 1e-10;
  auto* dgen = ds_cmd->add_subcommand("generate", "sample scenarios and solve ground truth");
  dgen->add_option("--grid", dg_grid, "network JSON")->required();
  dgen->add_option("--points", dg_points, "dataset size (default by system size)");
  dgen->add_option("--seed", dg_seed, "sampling/selection seed");
  dgen->add_option("--noise", dg_noise, "training-split noise level (0..0.10)");
  dgen->add_option("--noise-seed", dg_noise_seed, "noise stream seed");
  dgen->add_option("--pool", dg_pool, "scenario pool size");
  dgen->add_option("--total-s", dg_total_s, "total nominal apparent power (p.u.)");
  dgen->add_option("--pf", dg_pf, "uniform power factor");
  dgen->add_option("--tol", dg_tol, "solver tolerance for labels");
  dgen->add_option("--out", dg_out, "output directory");

  // train
  std::string tr_kind, tr_dataset, tr_grid, tr_preset, tr_config, tr_out = default_out_dir();
  std::uint64_t tr_seed = 1;
  int tr_epochs = -1;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("model", tr_kind, "pinn4pf | mlp | lr")->required();
  train_cmd->add_option("--dataset", tr_dataset, "dataset CSV path");
  train_cmd->add_option("--grid", tr_grid, "network JSON (required for pinn4pf)");
  train_cmd->add_option("--preset", tr_preset, "paper-4bus|paper-15bus|paper-290bus|paper-2224bus");
  train_cmd->add_option("--seed", tr_seed, "training seed");
  train_cmd->add_option("--epochs", tr_epochs, "override epoch count");
  train_cmd->add_option("--config", tr_config, "JSON config overriding preset fields");
  train_cmd->add_option("--out", tr_out, "output directory");

  // eval
  std::string ev_ck, ev_dataset, ev_grid, ev_out = default_out_dir();
  bool ev_stub = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
  eval_cmd->add_option("--checkpoint", ev_ck, "checkpoint JSON");
  eval_cmd->add_option("--dataset", ev_dataset, "dataset CSV")->required();
  eval_cmd->add_option("--grid", ev_grid, "network JSON")->required();
  eval_cmd->add_flag("--stub-labels", ev_stub, "use labels as predictions (pipeline self-check)");
  eval_cmd->add_option("--out", ev_out, "output directory");

  // sweep
  std::string sw_axis, sw_grid, sw_out = default_out_dir();
  std::vector<std::string> sw_grids, sw_models = {"pinn4pf", "mlp", "lr"};
  std::vector<double> sw_values;
  std::vector<int> sw_points_per_grid;
  int sw_points = 512, sw_epochs = -1;
  std::uint64_t sw_seed = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "experiment axis over datasets/models");
  sweep_cmd->add_option("--axis", sw_axis, "noise | size | system | stress")->required();
  sweep_cmd->add_option("--grid", sw_grid, "base network JSON (noise/size/stress)");
  sweep_cmd->add_option("--grids", sw_grids, "network JSONs (system axis)");
  sweep_cmd->add_option("--values", sw_values, "axis values");
  sweep_cmd->add_option("--points-per-grid", sw_points_per_grid, "dataset sizes (system axis)");
  sweep_cmd->add_option("--points", sw_points, "dataset size (other axes)");
  sweep_cmd->add_option("--epochs", sw_epochs, "override epoch count");
  sweep_cmd->add_option("--models", sw_models, "model kinds to include");
  sweep_cmd->add_option("--seed", sw_seed, "sweep seed");
  sweep_cmd->add_option("--out", sw_out, "output directory");

  // ablation
  std::string ab_grid, ab_out = default_out_dir();
  int ab_points = 512, ab_epochs = -1;
  std::uint64_t ab_seed = 1;
  auto* abl_cmd = app.add_subcommand("ablation", "activation/loss ablation grid");
  abl_cmd->add_option("--grid", ab_grid, "network JSON")->required();
  abl_cmd->add_option("--points", ab_points, "dataset size");
  abl_cmd->add_option("--epochs", ab_epochs, "override epoch count");
  abl_cmd->add_option("--seed", ab_seed, "seed");
  abl_cmd->add_option("--out", ab_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gmake->parsed()) return cmd_grid_make(gm_buses, gm_seed, gm_base_kv, gm_out);
    if (gval->parsed()) return cmd_grid_validate(gv_file);
    if (ginfo->parsed()) return cmd_grid_info(gi_file);
    if (dgen->parsed())
      return cmd_dataset_generate(dg_grid, dg_points, dg_seed, dg_noise, dg_noise_seed, dg_pool,
                                  dg_total_s, dg_pf, dg_tol, dg_out, command);
    if (train_cmd->parsed())
      return cmd_train(tr_kind, tr_dataset, tr_grid, tr_preset, tr_seed, tr_epochs, tr_config,
                       tr_out, command);
    if (eval_cmd->parsed())
      return cmd_eval(ev_ck, ev_dataset, ev_grid, ev_stub, ev_out, command);
    if (sweep_cmd->parsed()) {
      SweepSpec spec;
      if (sw_axis == "noise") spec.axis = SweepAxis::Noise;
      else if (sw_axis == "size") spec.axis = SweepAxis::TrainSize;
      else if (sw_axis == "system") spec.axis = SweepAxis::SystemSize;
      else if (sw_axis == "stress") spec.axis = SweepAxis::Stress;
      else throw ValidationError("--axis", "unknown axis '" + sw_axis + "'");
      spec.values = sw_values;
      if (spec.values.empty()) {
        if (spec.axis == SweepAxis::Noise) spec.values = {0.0, 0.025, 0.05, 0.075, 0.10};
        else if (spec.axis == SweepAxis::TrainSize) spec.values = {256, 512, 1024};
        else if (spec.axis == SweepAxis::Stress) spec.values = {1.0, 1.5};
        else throw ValidationError("--values", "required for the system axis");
      }
      spec.seed = sw_seed;
      spec.grid_path = sw_grid;
      spec.grid_paths = sw_grids;
      spec.points_per_grid = sw_points_per_grid;
      spec.points = sw_points;
      spec.models = sw_models;
      spec.epochs = sw_epochs;
      if (spec.axis != SweepAxis::SystemSize && spec.grid_path.empty())
        throw ValidationError("--grid", "required for this axis");
      return run_and_save_sweep(spec, sw_axis, sw_out, command);
    }
    if (abl_cmd->parsed()) {
      SweepSpec spec;
      spec.axis = SweepAxis::Ablation;
      spec.grid_path = ab_grid;
      spec.points = ab_points;
      spec.epochs = ab_epochs;
      spec.seed = ab_seed;
      return run_and_save_sweep(spec, "ablation", ab_out, command);
    }
    throw ValidationError("cli", "no subcommand matched");
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
