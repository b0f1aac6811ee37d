#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "psdyn/devices.hpp"
#include "psdyn/network.hpp"

namespace psdyn::sim {

// Differential-algebraic system: xdot = f(x, v), 0 = g(x, v), where x stacks
// the device states and v holds the bus voltages in rectangular coordinates
// (re, im per bus). g is the nodal current balance I_inj(x, v) - Y*v.
class DaeSystem {
 public:
  DaeSystem(net::Network dynamic_net, std::vector<std::unique_ptr<dev::Device>> devices);

  int n_states() const { return n_x_; }
  int n_alg() const { return n_v_; }
  int n_buses() const { return n_bus_; }

  const std::vector<std::string>& state_labels() const { return labels_; }
  const std::vector<std::unique_ptr<dev::Device>>& devices() const { return devices_; }
  int device_bus(std::size_t k) const { return device_bus_[k]; }
  int device_offset(std::size_t k) const { return device_offset_[k]; }

  net::TopologyState& topology() { return topology_; }
  const net::TopologyState& topology() const { return topology_; }

  void f(const Eigen::VectorXd& x, const Eigen::VectorXd& v, Eigen::VectorXd& dx) const;
  void g(const Eigen::VectorXd& x, const Eigen::VectorXd& v, Eigen::VectorXd& res) const;

  static std::complex<double> bus_voltage(const Eigen::VectorXd& v, int bus_index);

 private:
  net::TopologyState topology_;
  std::vector<std::unique_ptr<dev::Device>> devices_;
  std::vector<int> device_bus_;
  std::vector<int> device_offset_;
  std::vector<std::string> labels_;
  int n_x_ = 0;
  int n_v_ = 0;
  int n_bus_ = 0;
};

// Builds the DAE from a load-converted network and initialized devices.
DaeSystem assemble(net::Network dynamic_net, std::vector<std::unique_ptr<dev::Device>> devices);

struct NewtonOptions {
  double tol = 1e-9;      // max update magnitude
  int max_iter = 50;
  double fd_eps = 1e-7;   // forward-difference scale for the Jacobian
};

// Re-solves g(x, v) = 0 for v with x frozen (network transient re-solution
// after a topology change). No-op if the residual is already negligible.
void solve_algebraic(const DaeSystem& dae, const Eigen::VectorXd& x, Eigen::VectorXd& v,
                     const NewtonOptions& opts = {});

// One implicit-trapezoidal step of length dt with simultaneous solution of
// the algebraic constraints. Returns the Newton iteration count.
int step_trapezoidal(const DaeSystem& dae, Eigen::VectorXd& x, Eigen::VectorXd& v, double dt,
                     const NewtonOptions& opts = {});

struct Scenario {
  std::string network_path;
  double dt = 1e-3;         // step during [0, dt_switch)
  double dt_coarse = 5e-3;  // step afterwards; set equal to dt for a single fixed step
  double dt_switch = 1.0;
  double horizon = 10.0;
  std::vector<net::Event> events;  // times strictly inside (0, horizon)
  std::vector<std::string> channels;

  void validate() const;
};

struct RunOptions {
  NewtonOptions newton;
  int max_dt_halvings = 4;
};

struct SimulationResult {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> v;
  std::vector<int> newton_iters;
  std::vector<double> g_residuals;  // max |g| per step, against the then-active topology
  std::vector<std::string> state_labels;
  std::vector<std::string> warnings;
  bool failed = false;
  double fail_time = 0.0;
  std::string fail_reason;

  std::size_t index_at(double time) const;  // nearest grid index
};

// Integrates through the scenario's timed events from the given consistent
// initial point. Event times are snapped to the step grid (with a warning
// when the snap is not exact); at each event the admittance matrix is
// rebuilt and the algebraic variables re-solved with states frozen.
SimulationResult run(DaeSystem& dae, Eigen::VectorXd x0, Eigen::VectorXd v0,
                     const Scenario& scenario, const RunOptions& opts = {});

// Network + devices + consistent initial point, ready to simulate or linearize.
struct PreparedSystem {
  std::unique_ptr<DaeSystem> dae;
  Eigen::VectorXd x0;
  Eigen::VectorXd v0;
  net::PowerFlowSolution powerflow;
};

// Full setup pipeline: power flow on the input network, loads to constant
// admittances, device initialization, DAE assembly, consistency check.
PreparedSystem prepare(const net::Network& input, std::vector<std::unique_ptr<dev::Device>> devices,
                       const net::PowerFlowOptions& pf_opts = {.tol = 1e-10});

}  // namespace psdyn::sim
