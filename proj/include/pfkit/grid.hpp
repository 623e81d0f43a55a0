#pragma once

#include <utility>
#include <vector>

#include "pfkit/common.hpp"

namespace pfkit {

enum class BusKind { Reference, Load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  double base_kv = 12.47;
};

// Branch between two buses: series impedance r + jx and total line
// charging susceptance b_sh (split half to each terminal, pi model).
struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_sh = 0.0;
};

struct Network {
  double base_mva = 1.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;

  int n_total() const { return static_cast<int>(buses.size()); }
  int n_load() const;
  // Position of the bus with this id in `buses`; -1 if absent.
  int index_of(int bus_id) const;
  int reference_index() const;
  std::vector<int> load_indices() const;

  // Structural checks: unique ids, exactly one reference bus, line
  // endpoints exist and differ, r >= 0, x != 0, b_sh >= 0, connected.
  // Throws ValidationError naming the offending element.
  void validate() const;
};

// Sparse bus admittance matrix stored by rows; entries sorted by column.
class AdmittanceMatrix {
 public:
  using Entry = std::pair<int, Complex>;

  explicit AdmittanceMatrix(int n) : rows_(n) {}

  int size() const { return static_cast<int>(rows_.size()); }
  const std::vector<Entry>& row(int i) const { return rows_[i]; }
  Complex diag(int i) const { return at(i, i); }
  Complex at(int i, int j) const;
  void add(int i, int j, Complex v);

  std::vector<Complex> multiply(const std::vector<Complex>& v) const;

 private:
  std::vector<std::vector<Entry>> rows_;
};

AdmittanceMatrix build_admittance(const Network& net);

Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);

// Random radial feeder: bus 0 is the reference, each subsequent bus
// attaches to a uniformly chosen earlier bus. Series impedances are
// drawn uniformly from r in [0.001, 0.05], x in [0.002, 0.1] per unit;
// no line charging.
Network make_synthetic_feeder(int n_total, std::uint64_t seed);

}  // namespace pfkit
