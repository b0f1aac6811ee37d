#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psdyn/errors.hpp"
#include "psdyn/oscillator.hpp"

namespace psdyn::dev {

inline constexpr double kOmegaBase = osc::kOmegaBase;

double wrap_angle(double a);  // to (-pi, pi]

// ---------------------------------------------------------------------------
// Control-block primitives. Kept as free functions so the blocks can be
// exercised against closed-form responses without a network.
// ---------------------------------------------------------------------------

struct PllParams {
  double kp = 0.1;
  double ki = 0.05;
  double omega_b = kOmegaBase;
};

struct PllState {
  double x = 0.0;          // PI integrator
  double theta_est = 0.0;  // angle estimate
};

// Estimated frequency deviation (pu): kp*(theta - theta_est) + x.
double pll_frequency_estimate(const PllParams& p, double theta_meas, const PllState& s);

// dx = ki*e, dtheta_est = omega_b*(omega_ref + kp*e + x), e wrapped to (-pi, pi].
PllState pll_derivatives(const PllParams& p, double theta_meas, const PllState& s,
                         double omega_ref = 0.0);

struct DroopParams {
  double r = 0.05;   // droop gain is 1/r
  double t_f = 1.2;  // first lag, s
  double t_d = 0.6;  // second lag, s
};

// Gain 1/r into two cascaded first-order lags; x2 is the current offset command.
std::pair<double, double> droop_derivatives(const DroopParams& p, double freq_error, double x1,
                                            double x2);

// Hard magnitude clamp with d-axis priority.
std::pair<double, double> limit_dq_current(double id, double iq, double i_max);

// ---------------------------------------------------------------------------
// Classical machine (swing equation behind a constant emf).
// ---------------------------------------------------------------------------

struct ClassicalSmParams {
  double h = 4.0;        // inertia constant, s
  double d = 0.0;        // damping, pu
  double x_total = 0.5;  // transient + connection reactance, pu
  double omega_b = kOmegaBase;

  void validate() const;
};

// ddelta = omega_b*omega; domega = (p_m - e'*v*sin(delta - theta)/x - d*omega)/(2h).
std::pair<double, double> classical_sm_derivatives(const ClassicalSmParams& p, double e_prime,
                                                   double p_m, double delta, double omega,
                                                   std::complex<double> v_terminal);

// ---------------------------------------------------------------------------
// Detailed machine: 6th-order two-axis model + 3-state voltage regulator +
// 2-state turbine governor (11 states).
// ---------------------------------------------------------------------------

struct DetailedSmParams {
  double h = 6.0;
  double d = 0.0;
  double ra = 0.0;
  double xd = 0.9, xdp = 0.12, xdpp = 0.10;
  double xq = 0.86, xqp = 0.20, xqpp = 0.10;
  double td0p = 6.0, td0pp = 0.04;
  double tq0p = 0.5, tq0pp = 0.06;
  // exciter
  double ka = 20.0, ta = 0.2;
  double ke = 1.0, te = 0.314;
  double kf = 0.063, tf = 0.35;
  // governor
  double rg = 0.05, tg = 0.2, tt = 0.5;
  double omega_b = kOmegaBase;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Converter-interfaced generator: PLL (2 states), droop lags (2 states),
// d-axis current loop (1 state); q-axis current held at its setpoint.
// ---------------------------------------------------------------------------

struct CigParams {
  PllParams pll;
  DroopParams droop;
  double ti = 0.02;    // current-loop time constant, s
  double i_max = 1.2;  // current limit, pu
  double omega_b = kOmegaBase;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Device contract for the DAE: states + derivatives + injected current, all
// pure given (state slice, terminal voltage).
// ---------------------------------------------------------------------------

class Device {
 public:
  virtual ~Device() = default;

  const std::string& name() const { return name_; }
  int bus_id() const { return bus_id_; }

  virtual int state_count() const = 0;
  virtual std::vector<std::string> state_labels() const = 0;

  // Steady-state consistent initialization from the power-flow operating
  // point (terminal voltage and net injected power at the device bus).
  virtual void initialize(std::complex<double> v, std::complex<double> s_inj,
                          std::span<double> x) = 0;

  virtual void derivatives(std::span<const double> x, std::complex<double> v,
                           std::span<double> dx) const = 0;

  virtual std::complex<double> injected_current(std::span<const double> x,
                                                std::complex<double> v) const = 0;

  // Named derived signals for reporting (CSV channels).
  virtual std::vector<std::string> output_names() const { return {}; }
  virtual double output(const std::string& which, std::span<const double> x,
                        std::complex<double> v) const;

 protected:
  Device(std::string name, int bus_id) : name_(std::move(name)), bus_id_(bus_id) {}

 private:
  std::string name_;
  int bus_id_;
};

class ClassicalSmDevice : public Device {
 public:
  ClassicalSmDevice(std::string name, int bus_id, ClassicalSmParams p);

  int state_count() const override { return 2; }
  std::vector<std::string> state_labels() const override;
  void initialize(std::complex<double> v, std::complex<double> s_inj,
                  std::span<double> x) override;
  void derivatives(std::span<const double> x, std::complex<double> v,
                   std::span<double> dx) const override;
  std::complex<double> injected_current(std::span<const double> x,
                                        std::complex<double> v) const override;
  std::vector<std::string> output_names() const override;
  double output(const std::string& which, std::span<const double> x,
                std::complex<double> v) const override;

  const ClassicalSmParams& params() const { return params_; }
  double e_prime() const { return e_prime_; }
  double p_m() const { return p_m_; }

 private:
  ClassicalSmParams params_;
  double e_prime_ = 1.0;
  double p_m_ = 0.0;
};

class DetailedSmDevice : public Device {
 public:
  // State layout.
  enum Idx { kDelta, kOmega, kEqp, kEdp, kEqpp, kEdpp, kVr, kEfd, kRf, kGovX, kPm };

  DetailedSmDevice(std::string name, int bus_id, DetailedSmParams p);

  int state_count() const override { return 11; }
  std::vector<std::string> state_labels() const override;
  void initialize(std::complex<double> v, std::complex<double> s_inj,
                  std::span<double> x) override;
  void derivatives(std::span<const double> x, std::complex<double> v,
                   std::span<double> dx) const override;
  std::complex<double> injected_current(std::span<const double> x,
                                        std::complex<double> v) const override;
  std::vector<std::string> output_names() const override;
  double output(const std::string& which, std::span<const double> x,
                std::complex<double> v) const override;

  const DetailedSmParams& params() const { return params_; }
  double v_ref() const { return v_ref_; }
  void set_v_ref(double v) { v_ref_ = v; }
  double p_ref() const { return p_ref_; }

  // Stator currents in the machine frame for the given state and terminal voltage.
  std::pair<double, double> stator_currents(std::span<const double> x,
                                            std::complex<double> v) const;

 private:
  DetailedSmParams params_;
  double v_ref_ = 1.0;
  double p_ref_ = 0.0;
};

class CigDevice : public Device {
 public:
  enum Idx { kPllX, kPllTheta, kDroopX1, kDroopX2, kId };

  CigDevice(std::string name, int bus_id, CigParams p);

  int state_count() const override { return 5; }
  std::vector<std::string> state_labels() const override;
  void initialize(std::complex<double> v, std::complex<double> s_inj,
                  std::span<double> x) override;
  void derivatives(std::span<const double> x, std::complex<double> v,
                   std::span<double> dx) const override;
  std::complex<double> injected_current(std::span<const double> x,
                                        std::complex<double> v) const override;
  std::vector<std::string> output_names() const override;
  double output(const std::string& which, std::span<const double> x,
                std::complex<double> v) const override;

  const CigParams& params() const { return params_; }
  double id_setpoint() const { return id0_; }
  double iq_setpoint() const { return iq0_; }

 private:
  CigParams params_;
  double id0_ = 0.0;
  double iq0_ = 0.0;
};

// Ideal voltage source behind a stiff Norton admittance; used to model an
// infinite bus in single-machine studies.
class InfiniteBusDevice : public Device {
 public:
  InfiniteBusDevice(std::string name, int bus_id, double y_src = 1e8);

  int state_count() const override { return 0; }
  std::vector<std::string> state_labels() const override { return {}; }
  void initialize(std::complex<double> v, std::complex<double> s_inj,
                  std::span<double> x) override;
  void derivatives(std::span<const double>, std::complex<double>,
                   std::span<double>) const override {}
  std::complex<double> injected_current(std::span<const double> x,
                                        std::complex<double> v) const override;

  std::complex<double> source_admittance() const { return y_src_; }

 private:
  std::complex<double> y_src_;
  std::complex<double> v0_{1.0, 0.0};
};

// Initializes every device from the converged power-flow point and verifies
// the steady-state contract: all derivatives below tol at the initial state.
// Returns the stacked initial state vector.
std::vector<double> initialize_all(const std::vector<std::unique_ptr<Device>>& devices,
                                   const Eigen::VectorXcd& bus_voltages,
                                   const std::vector<std::complex<double>>& bus_injections,
                                   const std::vector<int>& device_bus_index, double tol = 1e-8);

}  // namespace psdyn::dev
