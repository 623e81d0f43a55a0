#include "pfkit/pinn4pf.hpp"

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
}  // namespace

Matrix Model::forward(const Matrix& x, bool training, Rng& rng) {
  Matrix h = trunk.forward(x, training, rng);
  if (!double_head()) return h;
  Matrix mu = head_mu.forward(h, training, rng);
  Matrix om = head_omega.forward(h, training, rng);
  Matrix out(mu.rows(), mu.cols() + om.cols());
  out << mu, om;
  return out;
}

void Model::backward(const Matrix& g) {
  if (!double_head()) {
    trunk.backward(g);
    return;
  }
  Eigen::Index n = g.cols() / 2;
  Matrix gh = head_mu.backward(g.leftCols(n));
  gh += head_omega.backward(g.rightCols(n));
  trunk.backward(gh);
}

void Model::zero_grad() {
  trunk.zero_grad();
  head_mu.zero_grad();
  head_omega.zero_grad();
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  collect_params(trunk, "trunk", out);
  collect_params(head_mu, "head_mu", out);
  collect_params(head_omega, "head_omega", out);
  return out;
}

std::vector<double> Model::alphas() const {
  std::vector<double> out;
  for (const Stack* s : {&trunk, &head_mu, &head_omega})
    for (const DenseLayer& l : s->layers)
      if (l.act == Activation::AdaptiveRelu) out.push_back(l.alpha);
  return out;
}

Model make_pinn4pf_model(int n_load, const Pinn4pfConfig& cfg, Rng& rng) {
  if (n_load <= 0) throw ValidationError("n_load", "must be positive");
  if (cfg.n_shared_layers < 1 || cfg.n_head_layers < 1)
    throw ValidationError("config", "layer counts must be positive");
  int n = n_load;
  Model m;
  for (int i = 0; i < cfg.n_shared_layers; ++i)
    m.trunk.layers.push_back(make_dense(2 * n, 2 * n, Activation::Relu, cfg.dropout, rng));
  Activation head_act = cfg.adaptive_heads ? Activation::AdaptiveRelu : Activation::Relu;
  for (Stack* head : {&m.head_mu, &m.head_omega}) {
    for (int i = 0; i < cfg.n_head_layers; ++i) {
      Eigen::Index in = (i == 0) ? 2 * n : n;
      head->layers.push_back(make_dense(in, n, head_act, cfg.dropout, rng));
    }
    head->layers.push_back(make_dense(n, n, Activation::Linear, 0.0, rng));
  }
  return m;
}

Eigen::VectorXcd load_bus_y_diag(const Network& net, const AdmittanceMatrix& y) {
  auto load_idx = net.load_indices();
  Eigen::VectorXcd out(load_idx.size());
  for (std::size_t k = 0; k < load_idx.size(); ++k) {
    out(k) = y.diag(load_idx[k]);
    if (std::abs(out(k)) == 0.0)
      throw ValidationError("y_diag[" + std::to_string(k) + "]", "zero diagonal admittance");
  }
  return out;
}

Eigen::MatrixXcd compute_psi_from_labels(const Eigen::VectorXcd& y_diag, const Matrix& x,
                                         const Matrix& y) {
  Eigen::Index n = y_diag.size();
  if (x.cols() != 2 * n || y.cols() != 2 * n || x.rows() != y.rows())
    throw ValidationError("compute_psi", "x/y shapes inconsistent with y_diag");
  Eigen::MatrixXcd psi(x.rows(), n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < n; ++k) {
      Complex v(y(r, k), y(r, n + k));
      if (std::abs(v) < 1e-6)
        throw ValidationError("compute_psi", "|V| below 1e-6 at row " + std::to_string(r) +
                                                 " bus column " + std::to_string(k));
      Complex s_conj(x(r, k), -x(r, n + k));
      psi(r, k) = s_conj / std::conj(v) - y_diag(k) * v;
    }
  }
  return psi;
}

void attach_psi(Dataset& ds, const Eigen::VectorXcd& y_diag) {
  ds.psi = compute_psi_from_labels(y_diag, ds.x_view(), ds.y_view());
}

PhysicalEval physical_model(const Eigen::VectorXcd& y_diag, const Matrix& x, const Matrix& pred,
                            const Eigen::MatrixXcd& psi, double guard) {
  Eigen::Index n = y_diag.size();
  if (pred.cols() != 2 * n || x.cols() != 2 * n || psi.cols() != n || pred.rows() != x.rows() ||
      psi.rows() != x.rows())
    throw ValidationError("physical_model", "shape mismatch");
  PhysicalEval ev;
  ev.recon.setZero(pred.rows(), 2 * n);
  ev.skipped.assign(pred.rows(), 0);
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index k = 0; k < n; ++k) {
      Complex d(pred(r, k), -pred(r, n + k));  // mu_hat - j omega_hat
      if (std::abs(d) < guard) {
        ev.skipped[r] = 1;
        break;
      }
      Complex num(x(r, k), -x(r, n + k));  // p - j q
      Complex f = (num / d - psi(r, k)) / y_diag(k);
      ev.recon(r, k) = f.real();
      ev.recon(r, n + k) = f.imag();
    }
    if (ev.skipped[r]) ++ev.n_skipped;
  }
  return ev;
}

std::pair<double, double> beta_schedule(int epoch, double beta1_max, int ramp_start_epoch,
                                        int ramp_end_epoch) {
  if (epoch < 0) throw ValidationError("epoch", "must be non-negative");
  if (ramp_end_epoch <= ramp_start_epoch)
    throw ValidationError("ramp_end_epoch", "must exceed ramp_start_epoch");
  double b1 = 0.0;
  if (epoch >= ramp_end_epoch)
    b1 = beta1_max;
  else if (epoch >= ramp_start_epoch)
    b1 = beta1_max * static_cast<double>(epoch - ramp_start_epoch) /
         static_cast<double>(ramp_end_epoch - ramp_start_epoch);
  return {1.0 - b1, b1};
}

LossResult composite_loss(const Matrix& pred, const Matrix& y, const Matrix& x_raw,
                          const Eigen::MatrixXcd& psi, const LossConfig& cfg) {
  if (cfg.beta0 < 0.0 || cfg.beta1 < 0.0 || std::abs(cfg.beta0 + cfg.beta1 - 1.0) > 1e-12)
    throw ValidationError("loss", "beta0/beta1 must be non-negative and sum to 1");
  LossResult res;
  res.supervised = mse(pred, y);
  res.grad = cfg.beta0 * mse_grad(pred, y);
  res.value = cfg.beta0 * res.supervised;
  if (cfg.beta1 == 0.0) return res;

  Eigen::Index n = cfg.y_diag.size();
  PhysicalEval ev = physical_model(cfg.y_diag, x_raw, pred, psi, cfg.guard);
  res.rows_skipped = ev.n_skipped;
  Eigen::Index included = pred.rows() - ev.n_skipped;
  if (included == 0) return res;

  double denom = static_cast<double>(included * 2 * n);
  double sq = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (ev.skipped[r]) continue;
    sq += (ev.recon.row(r) - y.row(r)).squaredNorm();
  }
  res.physical = sq / denom;
  res.value += cfg.beta1 * res.physical;

  // Backward through f': with N = p - jq, D = mu_hat - j omega_hat,
  // df/dD = -N / (D^2 Y_kk) =: G. For upstream (du, dw) on (mu', omega'):
  //   d/d mu_hat    = du*Re(G) + dw*Im(G)
  //   d/d omega_hat = du*Im(G) - dw*Re(G)
  double scale = cfg.beta1 * 2.0 / denom;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (ev.skipped[r]) continue;
    for (Eigen::Index k = 0; k < n; ++k) {
      double du = scale * (ev.recon(r, k) - y(r, k));
      double dw = scale * (ev.recon(r, n + k) - y(r, n + k));
      Complex d(pred(r, k), -pred(r, n + k));
      Complex num(x_raw(r, k), -x_raw(r, n + k));
      Complex g = -num / (d * d * cfg.y_diag(k));
      res.grad(r, k) += du * g.real() + dw * g.imag();
      res.grad(r, n + k) += du * g.imag() - dw * g.real();
    }
  }
  return res;
}

TrainResult train_network(Model model, const Dataset& ds, const Eigen::VectorXcd& y_diag,
                          const TrainOptions& opt) {
  if (opt.batch_size <= 0) throw ValidationError("batch_size", "must be positive");
  if (opt.epochs < 0) throw ValidationError("epochs", "must be non-negative");
  if (opt.lr <= 0.0) throw ValidationError("lr", "must be positive");

  auto train_idx = ds.indices_of(Split::Train);
  auto val_idx = ds.indices_of(Split::Val);
  if (train_idx.empty() || val_idx.empty())
    throw ValidationError("dataset", "needs non-empty train and validation splits");

  const Matrix& xv = ds.x_view();
  const Matrix& yv = ds.y_view();
  Normalization norm = fit_normalization(xv, train_idx);

  int n_tr = static_cast<int>(train_idx.size());
  Matrix x_tr_raw(n_tr, xv.cols()), y_tr(n_tr, yv.cols());
  for (int i = 0; i < n_tr; ++i) {
    x_tr_raw.row(i) = xv.row(train_idx[i]);
    y_tr.row(i) = yv.row(train_idx[i]);
  }
  Matrix x_tr = norm.apply(x_tr_raw);

  int n_val = static_cast<int>(val_idx.size());
  Matrix x_val(n_val, ds.x.cols()), y_val(n_val, ds.y.cols());
  for (int i = 0; i < n_val; ++i) {
    x_val.row(i) = ds.x.row(val_idx[i]);
    y_val.row(i) = ds.y.row(val_idx[i]);
  }
  x_val = norm.apply(x_val);

  bool use_phys = opt.beta1_max > 0.0;
  Eigen::MatrixXcd psi_tr;
  if (use_phys) {
    if (ds.psi.rows() != ds.rows() || ds.psi.cols() != ds.n_load)
      throw ValidationError("psi", "hidden function must be attached before physical training");
    psi_tr.resize(n_tr, ds.n_load);
    for (int i = 0; i < n_tr; ++i) psi_tr.row(i) = ds.psi.row(train_idx[i]);
  }

  TrainResult res;
  res.model = std::move(model);
  res.seed = opt.seed;
  res.norm = norm;
  res.best_val = std::numeric_limits<double>::infinity();

  Adam adam(res.model.params(), {opt.lr, 0.9, 0.999, 1e-8, opt.weight_decay});
  Rng rng(splitmix64(opt.seed ^ 0x747261696eULL));

  std::vector<int> order(n_tr);
  for (int i = 0; i < n_tr; ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto [b0, b1] = beta_schedule(epoch, opt.beta1_max, opt.ramp_start_epoch, opt.ramp_end_epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    int skipped = 0;
    try {
      for (int start = 0; start < n_tr; start += opt.batch_size) {
        int rows = std::min(opt.batch_size, n_tr - start);
        Matrix xb(rows, x_tr.cols()), xb_raw(rows, x_tr.cols()), yb(rows, y_tr.cols());
        Eigen::MatrixXcd psib;
        if (use_phys && b1 > 0.0) psib.resize(rows, ds.n_load);
        for (int i = 0; i < rows; ++i) {
          int r = order[start + i];
          xb.row(i) = x_tr.row(r);
          xb_raw.row(i) = x_tr_raw.row(r);
          yb.row(i) = y_tr.row(r);
          if (psib.size()) psib.row(i) = psi_tr.row(r);
        }
        res.model.zero_grad();
        Matrix pred = res.model.forward(xb, true, rng);
        LossConfig lc;
        lc.beta0 = b0;
        lc.beta1 = (use_phys && b1 > 0.0) ? b1 : 0.0;
        if (lc.beta1 > 0.0) lc.y_diag = y_diag;
        LossResult lr = composite_loss(pred, yb, xb_raw, psib, lc);
        if (!std::isfinite(lr.value))
          throw DivergenceError("loss", "non-finite loss at epoch " + std::to_string(epoch) +
                                            " batch " + std::to_string(start / opt.batch_size));
        res.model.backward(lr.grad);
        adam.step();
        loss_sum += lr.value * rows;
        skipped += lr.rows_skipped;
      }
    } catch (const DivergenceError& e) {
      res.diverged = true;
      res.divergence_reason = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
      break;
    }

    Rng eval_rng(0);
    Matrix pv = res.model.forward(x_val, false, eval_rng);
    double vloss = mse(pv, y_val);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / n_tr;
    rec.val_loss = vloss;
    rec.beta0 = b0;
    rec.beta1 = b1;
    rec.alphas = res.model.alphas();
    rec.phys_rows_skipped = skipped;
    res.history.push_back(rec);
    if (vloss < res.best_val) {
      res.best_val = vloss;
      res.best_epoch = epoch;
      res.best = res.model;
    }
  }
  if (res.best_epoch < 0) res.best = res.model;  // zero epochs or immediate divergence

  res.adam_m = adam.m();
  res.adam_v = adam.v();
  res.adam_t = adam.steps();
  return res;
}

TrainResult train_pinn4pf(Dataset& ds, const Network& net, const AdmittanceMatrix& y,
                          const Pinn4pfConfig& cfg) {
  if (cfg.learned_psi)
    throw ValidationError("learned_psi",
                          "the learned hidden-function variant is reserved and not implemented");
  Eigen::VectorXcd y_diag = load_bus_y_diag(net, y);
  bool use_phys = cfg.physical_loss && cfg.beta1_max > 0.0;
  if (use_phys && ds.psi.rows() != ds.rows()) attach_psi(ds, y_diag);

  Rng init_rng(splitmix64(cfg.seed));
  Model m = make_pinn4pf_model(ds.n_load, cfg, init_rng);

  TrainOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.batch_size = cfg.batch_size;
  opt.epochs = cfg.epochs;
  opt.seed = cfg.seed;
  opt.beta1_max = use_phys ? cfg.beta1_max : 0.0;
  opt.ramp_start_epoch = cfg.ramp_start_epoch;
  opt.ramp_end_epoch = cfg.ramp_end_epoch;
  return train_network(std::move(m), ds, y_diag, opt);
}

Matrix predict(Model& model, const Normalization& norm, const Matrix& x_raw) {
  Rng rng(0);
  return model.forward(norm.apply(x_raw), false, rng);
}

namespace {

json layer_to_json(const DenseLayer& l) {
  const char* act = "linear";
  if (l.act == Activation::Relu) act = "relu";
  else if (l.act == Activation::AdaptiveRelu) act = "adaptive_relu";
  json j;
  j["in"] = l.w.cols();
  j["out"] = l.w.rows();
  j["act"] = act;
  j["dropout"] = l.dropout_rate;
  j["alpha"] = l.alpha;
  j["w"] = std::vector<double>(l.w.data(), l.w.data() + l.w.size());
  j["b"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
  return j;
}

DenseLayer layer_from_json(const json& j, const std::string& where) {
  DenseLayer l;
  Eigen::Index in = j.at("in").get<Eigen::Index>();
  Eigen::Index out = j.at("out").get<Eigen::Index>();
  std::string act = j.at("act").get<std::string>();
  if (act == "linear") l.act = Activation::Linear;
  else if (act == "relu") l.act = Activation::Relu;
  else if (act == "adaptive_relu") l.act = Activation::AdaptiveRelu;
  else throw ValidationError(where + ".act", "unknown activation '" + act + "'");
  l.dropout_rate = j.at("dropout").get<double>();
  l.alpha = j.at("alpha").get<double>();
  auto w = j.at("w").get<std::vector<double>>();
  auto b = j.at("b").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != in * out ||
      static_cast<Eigen::Index>(b.size()) != out)
    throw ValidationError(where, "weight/bias sizes disagree with layer shape");
  l.w = Eigen::Map<const Matrix>(w.data(), out, in);
  l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
  l.gw = Matrix::Zero(out, in);
  l.gb = Eigen::VectorXd::Zero(out);
  return l;
}

json stack_to_json(const Stack& s) {
  json arr = json::array();
  for (const DenseLayer& l : s.layers) arr.push_back(layer_to_json(l));
  return arr;
}

Stack stack_from_json(const json& arr, const std::string& where) {
  Stack s;
  for (std::size_t i = 0; i < arr.size(); ++i)
    s.layers.push_back(layer_from_json(arr[i], where + "[" + std::to_string(i) + "]"));
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json j;
  j["version"] = kVersion;
  j["kind"] = ck.kind;
  j["n_load"] = ck.n_load;
  j["seed"] = ck.seed;
  j["best_epoch"] = ck.best_epoch;
  j["best_val"] = ck.best_val;
  j["model"] = {{"trunk", stack_to_json(ck.model.trunk)},
                {"head_mu", stack_to_json(ck.model.head_mu)},
                {"head_omega", stack_to_json(ck.model.head_omega)}};
  j["normalization"] = {
      {"mean", std::vector<double>(ck.norm.mean.data(), ck.norm.mean.data() + ck.norm.mean.size())},
      {"std", std::vector<double>(ck.norm.std.data(), ck.norm.std.data() + ck.norm.std.size())}};
  j["optimizer"] = {{"t", ck.adam_t}, {"m", ck.adam_m}, {"v", ck.adam_v}};
  write_text_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path, std::string("invalid JSON: ") + e.what());
  }
  Checkpoint ck;
  ck.kind = j.at("kind").get<std::string>();
  ck.n_load = j.at("n_load").get<int>();
  ck.seed = j.at("seed").get<std::uint64_t>();
  ck.best_epoch = j.at("best_epoch").get<int>();
  ck.best_val = j.at("best_val").get<double>();
  ck.model.trunk = stack_from_json(j.at("model").at("trunk"), "model.trunk");
  ck.model.head_mu = stack_from_json(j.at("model").at("head_mu"), "model.head_mu");
  ck.model.head_omega = stack_from_json(j.at("model").at("head_omega"), "model.head_omega");
  auto mean = j.at("normalization").at("mean").get<std::vector<double>>();
  auto stdv = j.at("normalization").at("std").get<std::vector<double>>();
  ck.norm.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  ck.norm.std = Eigen::Map<const Eigen::VectorXd>(stdv.data(), stdv.size());
  ck.adam_t = j.at("optimizer").at("t").get<int>();
  ck.adam_m = j.at("optimizer").at("m").get<std::vector<double>>();
  ck.adam_v = j.at("optimizer").at("v").get<std::vector<double>>();
  return ck;
}

void save_history(const std::vector<EpochRecord>& history, const std::string& path) {
  std::string out = "epoch,train_loss,val_loss,beta0,beta1,phys_rows_skipped";
  std::size_t n_alpha = history.empty() ? 0 : history.front().alphas.size();
  for (std::size_t i = 0; i < n_alpha; ++i) out += ",alpha_" + std::to_string(i);
  out += "\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch);
    out += ',';
    append_double(out, r.train_loss);
    out += ',';
    append_double(out, r.val_loss);
    out += ',';
    append_double(out, r.beta0);
    out += ',';
    append_double(out, r.beta1);
    out += ',';
    out += std::to_string(r.phys_rows_skipped);
    for (double a : r.alphas) {
      out += ',';
      append_double(out, a);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace pfkit
