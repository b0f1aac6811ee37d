#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "psdyn/oscillator.hpp"
#include "psdyn/simulation.hpp"

namespace psdyn::an {

struct StateMatrix {
  Eigen::MatrixXd a;
  std::vector<std::string> labels;  // one per differential state
};

// Reduced system matrix A = f_x - f_y * g_y^{-1} * g_x at a consistent point,
// by central finite differences with per-variable step h*max(1, |x_i|).
StateMatrix linearize_system(const sim::DaeSystem& dae, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& v0, double h = 1e-6);

struct ModeReport {
  std::complex<double> eigenvalue;
  double frequency_hz = 0.0;     // |Im| / 2pi
  double damping_ratio = 0.0;    // -Re / |lambda|
  Eigen::VectorXd participation; // per state, column sums to 1
  bool degenerate = false;       // repeated eigenvalue, Jordan-block caveat
};

// Full spectrum with participation factors, sorted by damping ratio ascending.
std::vector<ModeReport> eigen_analysis(const StateMatrix& sm);

// p_ki = |u_ki * w_ik| column-normalized so each mode sums to 1. The left set
// must be biorthogonal to the right set (rows of the right set's inverse).
Eigen::MatrixXd participation_factors(const Eigen::MatrixXcd& right, const Eigen::MatrixXcd& left);

// Oscillatory modes in [0.1, 3] Hz whose top participating states are machine
// rotor states. delta/omega of a swing pair carry near-equal participation, so
// both count as rotor states here. Returns indices into the report list, one
// per conjugate pair (positive-frequency member).
std::vector<std::size_t> electromechanical_modes(const std::vector<ModeReport>& modes,
                                                 const std::vector<std::string>& labels);

bool is_rotor_state(const std::string& label);
bool is_rotor_speed_state(const std::string& label);

// ---------------------------------------------------------------------------
// SM-emulation conditions: energy, time scale, damping, short-circuit.
// ---------------------------------------------------------------------------

struct EmulationThresholds {
  double time_band_lo = 2.0;    // s, inertial-response band
  double time_band_hi = 10.0;
  double energy_min = 0.1;      // s, minimum dE/dPl
  double damping_max = 0.3;     // max zeta, must also be oscillatory
  double overload_min = 3.0;    // short-circuit current capability ratio
};

struct DeviceCharacterization {
  std::string name;
  std::optional<double> c, d, k;
  std::optional<std::complex<double>> dominant_lambda;  // slowest eigenvalue
  std::optional<double> overload_ratio;
  // Exogenous fast-storage availability. When set it decides the energy
  // verdict directly (storage is a property of the plant, not of the
  // oscillator coefficients); otherwise the dE/dPl ratio is tested.
  std::optional<bool> energy_available;
};

struct ConditionVerdict {
  bool pass = false;
  double measured = 0.0;
  std::string basis;  // which route produced the number
};

struct EmulationReport {
  std::string device;
  ConditionVerdict energy, time_scale, damping, short_circuit;
  bool sm_equivalent = false;
  EmulationThresholds thresholds;
};

EmulationReport emulation_report(const DeviceCharacterization& ch,
                                 const EmulationThresholds& th = {});

// Table-style preset characterizations for the four devices compared in the
// oscillator study.
DeviceCharacterization preset_characterization(const std::string& name, double k = 10.0);

}  // namespace psdyn::an
