#pragma once

#include <Eigen/Dense>
#include <complex>
#include <set>
#include <string>
#include <vector>

#include "psdyn/errors.hpp"

namespace psdyn::net {

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double v_set = 1.0;                 // pu magnitude, PV/slack
  double p_inj = 0.0;                 // scheduled net injection, pu (load negative)
  double q_inj = 0.0;
  std::complex<double> shunt{0.0, 0.0};  // pu admittance to ground
  double base_kv = 0.0;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_half = 0.0;  // half charging susceptance at each end
  double tap = 1.0;     // off-nominal ratio on the from side
  bool in_service = true;
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;

  int index_of(int bus_id) const;  // dense index, throws UnknownBus
  int slack_index() const;
  void validate() const;
};

using YBus = Eigen::MatrixXcd;

// Standard pi-model assembly: series admittance 1/(r+jx), half charging at
// each end, tap on the from side; out-of-service branches contribute nothing.
YBus build_ybus(const Network& net);

struct PowerFlowSolution {
  Eigen::VectorXcd v;                           // per-bus complex voltage
  std::vector<std::complex<double>> injection;  // net computed S at each bus
  double slack_p = 0.0;
  double slack_q = 0.0;
  int iterations = 0;
  double max_residual = 0.0;
  bool low_voltage = false;  // any |v| below the configured threshold
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
  double low_voltage_threshold = 0.85;
};

// Newton-Raphson in polar form from flat start.
PowerFlowSolution solve_power_flow(const Network& net, const PowerFlowOptions& opts = {});

// Replaces every scheduled PQ-bus injection by the constant admittance that
// consumes the same power at the solved voltage: y = (p - jq)/|v|^2 with
// p, q the consumed load. Scheduled PQ injections are zeroed.
Network loads_to_admittance(const Network& net, const PowerFlowSolution& sol);

enum class EventKind { apply_fault, clear_fault, trip_line };

struct Event {
  EventKind kind = EventKind::apply_fault;
  double time = 0.0;
  int bus = -1;                            // fault events
  std::complex<double> admittance{0.0, 0.0};
  int from = -1, to = -1;                  // trip events
};

// Event-driven admittance-matrix state over an immutable base network. The
// matrix is rebuilt from the base data on every change so that apply/clear
// pairs restore the original bit pattern exactly.
class TopologyState {
 public:
  explicit TopologyState(Network base);

  void apply(const Event& ev);
  const YBus& ybus() const { return current_; }
  const Network& base() const { return base_; }

 private:
  void rebuild();
  int branch_index(int from, int to) const;

  Network base_;
  std::vector<std::pair<int, std::complex<double>>> active_faults_;  // bus index, admittance
  std::set<int> tripped_;                                            // branch indices
  YBus current_;
};

}  // namespace psdyn::net
