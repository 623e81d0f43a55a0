#include "pfkit/grid.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace pfkit {

namespace {
using nlohmann::json;
}

int Network::n_load() const {
  int n = 0;
  for (const auto& b : buses)
    if (b.kind == BusKind::Load) ++n;
  return n;
}

int Network::index_of(int bus_id) const {
  for (int i = 0; i < n_total(); ++i)
    if (buses[i].id == bus_id) return i;
  return -1;
}

int Network::reference_index() const {
  for (int i = 0; i < n_total(); ++i)
    if (buses[i].kind == BusKind::Reference) return i;
  return -1;
}

std::vector<int> Network::load_indices() const {
  std::vector<int> out;
  out.reserve(buses.size());
  for (int i = 0; i < n_total(); ++i)
    if (buses[i].kind == BusKind::Load) out.push_back(i);
  return out;
}

void Network::validate() const {
  if (buses.empty()) throw ValidationError("buses", "network has no buses");
  if (base_mva <= 0.0) throw ValidationError("base_mva", "must be positive");

  std::unordered_map<int, int> id_to_index;
  int n_ref = 0;
  for (int i = 0; i < n_total(); ++i) {
    const Bus& b = buses[i];
    std::string path = "buses[" + std::to_string(i) + "]";
    if (!id_to_index.emplace(b.id, i).second)
      throw ValidationError(path + ".id", "duplicate bus id " + std::to_string(b.id));
    if (b.base_kv <= 0.0) throw ValidationError(path + ".base_kv", "must be positive");
    if (b.kind == BusKind::Reference) ++n_ref;
  }
  if (n_ref != 1)
    throw ValidationError("buses", "expected exactly one reference bus, found " +
                                       std::to_string(n_ref));

  for (std::size_t k = 0; k < lines.size(); ++k) {
    const Line& l = lines[k];
    std::string path = "lines[" + std::to_string(k) + "]";
    if (!id_to_index.count(l.from))
      throw ValidationError(path + ".from", "unknown bus id " + std::to_string(l.from));
    if (!id_to_index.count(l.to))
      throw ValidationError(path + ".to", "unknown bus id " + std::to_string(l.to));
    if (l.from == l.to) throw ValidationError(path, "self-loop on bus " + std::to_string(l.from));
    if (l.r < 0.0) throw ValidationError(path + ".r", "must be non-negative");
    if (l.x == 0.0) throw ValidationError(path + ".x", "must be nonzero");
    if (l.b_sh < 0.0) throw ValidationError(path + ".b_sh", "must be non-negative");
  }

  // Connectivity from the reference bus over undirected lines.
  std::vector<std::vector<int>> adj(buses.size());
  for (const Line& l : lines) {
    int a = id_to_index.at(l.from);
    int b = id_to_index.at(l.to);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(buses.size(), 0);
  std::vector<int> stack{reference_index()};
  seen[stack[0]] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        stack.push_back(v);
      }
  }
  for (int i = 0; i < n_total(); ++i)
    if (!seen[i])
      throw ValidationError("buses[" + std::to_string(i) + "]",
                            "bus " + std::to_string(buses[i].id) +
                                " is not connected to the reference bus");
}

Complex AdmittanceMatrix::at(int i, int j) const {
  for (const Entry& e : rows_[i])
    if (e.first == j) return e.second;
  return Complex(0.0, 0.0);
}

void AdmittanceMatrix::add(int i, int j, Complex v) {
  auto& row = rows_[i];
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const Entry& e, int col) { return e.first < col; });
  if (it != row.end() && it->first == j)
    it->second += v;
  else
    row.insert(it, {j, v});
}

std::vector<Complex> AdmittanceMatrix::multiply(const std::vector<Complex>& v) const {
  std::vector<Complex> out(rows_.size(), Complex(0.0, 0.0));
  for (std::size_t i = 0; i < rows_.size(); ++i)
    for (const Entry& e : rows_[i]) out[i] += e.second * v[e.first];
  return out;
}

AdmittanceMatrix build_admittance(const Network& net) {
  AdmittanceMatrix y(net.n_total());
  for (const Line& l : net.lines) {
    int a = net.index_of(l.from);
    int b = net.index_of(l.to);
    Complex y_series = 1.0 / Complex(l.r, l.x);
    Complex y_shunt(0.0, l.b_sh / 2.0);
    y.add(a, a, y_series + y_shunt);
    y.add(b, b, y_series + y_shunt);
    y.add(a, b, -y_series);
    y.add(b, a, -y_series);
  }
  return y;
}

Network load_network(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path, std::string("invalid JSON: ") + e.what());
  }

  Network net;
  if (!j.contains("base_mva") || !j["base_mva"].is_number())
    throw ValidationError("base_mva", "missing or not a number");
  net.base_mva = j["base_mva"].get<double>();

  if (!j.contains("buses") || !j["buses"].is_array())
    throw ValidationError("buses", "missing or not an array");
  for (std::size_t i = 0; i < j["buses"].size(); ++i) {
    const json& jb = j["buses"][i];
    std::string path_i = "buses[" + std::to_string(i) + "]";
    Bus b;
    if (!jb.contains("id") || !jb["id"].is_number_integer())
      throw ValidationError(path_i + ".id", "missing or not an integer");
    b.id = jb["id"].get<int>();
    if (!jb.contains("kind") || !jb["kind"].is_string())
      throw ValidationError(path_i + ".kind", "missing or not a string");
    std::string kind = jb["kind"].get<std::string>();
    if (kind == "reference")
      b.kind = BusKind::Reference;
    else if (kind == "load")
      b.kind = BusKind::Load;
    else
      throw ValidationError(path_i + ".kind", "expected \"reference\" or \"load\", got \"" + kind + "\"");
    if (!jb.contains("base_kv") || !jb["base_kv"].is_number())
      throw ValidationError(path_i + ".base_kv", "missing or not a number");
    b.base_kv = jb["base_kv"].get<double>();
    net.buses.push_back(b);
  }

  if (!j.contains("lines") || !j["lines"].is_array())
    throw ValidationError("lines", "missing or not an array");
  for (std::size_t i = 0; i < j["lines"].size(); ++i) {
    const json& jl = j["lines"][i];
    std::string path_i = "lines[" + std::to_string(i) + "]";
    Line l;
    for (const char* key : {"from", "to", "r", "x", "b_sh"})
      if (!jl.contains(key))
        throw ValidationError(path_i + "." + key, "missing");
    if (!jl["from"].is_number_integer())
      throw ValidationError(path_i + ".from", "not an integer");
    if (!jl["to"].is_number_integer())
      throw ValidationError(path_i + ".to", "not an integer");
    l.from = jl["from"].get<int>();
    l.to = jl["to"].get<int>();
    l.r = jl["r"].get<double>();
    l.x = jl["x"].get<double>();
    l.b_sh = jl["b_sh"].get<double>();
    net.lines.push_back(l);
  }

  net.validate();
  return net;
}

void save_network(const Network& net, const std::string& path) {
  net.validate();
  json j;
  j["base_mva"] = net.base_mva;
  j["buses"] = json::array();
  for (const Bus& b : net.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"kind", b.kind == BusKind::Reference ? "reference" : "load"},
                          {"base_kv", b.base_kv}});
  }
  j["lines"] = json::array();
  for (const Line& l : net.lines) {
    j["lines"].push_back(
        {{"from", l.from}, {"to", l.to}, {"r", l.r}, {"x", l.x}, {"b_sh", l.b_sh}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

Network make_synthetic_feeder(int n_total, std::uint64_t seed) {
  if (n_total < 2)
    throw ValidationError("n_total", "feeder needs at least 2 buses, got " + std::to_string(n_total));
  Rng rng(splitmix64(seed));
  Network net;
  net.base_mva = 1.0;
  net.buses.push_back({0, BusKind::Reference, 12.47});
  for (int i = 1; i < n_total; ++i) net.buses.push_back({i, BusKind::Load, 12.47});
  for (int i = 1; i < n_total; ++i) {
    Line l;
    l.from = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
    l.to = i;
    l.r = rng.uniform(0.001, 0.05);
    l.x = rng.uniform(0.002, 0.1);
    l.b_sh = 0.0;
    net.lines.push_back(l);
  }
  net.validate();
  return net;
}

}  // namespace pfkit
