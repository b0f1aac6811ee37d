#pragma once

#include <complex>
#include <numbers>
#include <utility>
#include <variant>
#include <vector>

#include "psdyn/errors.hpp"

namespace psdyn::osc {

inline constexpr double kOmegaBase = 2.0 * std::numbers::pi * 60.0;  // rad/s, 60 Hz system

// Restoring force f(y) of the second-order oscillator  c*y'' + d*y' - f(y) = 0.
// Linear:       f(y) = -k*y
// SmElectrical: f(y) = omega_b * (p_m - e_prime*v*sin(y - theta)/x)
struct LinearRestoring {
  double k = 1.0;
};

struct SmElectricalRestoring {
  double p_m = 0.0;
  double e_prime = 1.0;
  double v = 1.0;
  double theta = 0.0;
  double x = 0.5;
};

using Restoring = std::variant<LinearRestoring, SmElectricalRestoring>;

struct OscillatorParams {
  double c = 1.0;          // inertia coefficient (2H for a machine), s
  double d = 0.0;          // damping coefficient
  double omega_b = kOmegaBase;
  Restoring restoring = LinearRestoring{};

  void validate() const;
  double f(double y) const;
  double df_dy(double y) const;
};

struct LinearOscillator {
  double c = 1.0;
  double d = 0.0;
  double k = 1.0;
  bool restoring = true;  // false when the linearized k <= 0 (non-restoring operating point)
};

enum class DampingClass { underdamped, critical, overdamped };

const char* to_string(DampingClass c);

struct OscillatorMetrics {
  std::complex<double> lambda1;  // slower root first (larger real part)
  std::complex<double> lambda2;
  DampingClass damping_class = DampingClass::underdamped;
  double damping_ratio = 0.0;            // zeta = d / (2*sqrt(c*k))
  double natural_frequency_hz = 0.0;     // sqrt(k/c) / (2*pi)
  double energy_dissipation_ratio = 0.0; // c/(2d), seconds
  double settling_time_2pct = 0.0;       // 4/(zeta*omega_n) = 8c/d, seconds
};

// Solves f(y0) = 0 for the stable operating point. Principal branch for the
// electrical restoring (y0 - theta in [-pi/2, pi/2]); the back-swing
// equilibrium is rejected as unstable.
double equilibrium(const OscillatorParams& params);

// Tangent model at y0: c*dy'' + d*dy' + k*dy = 0 with k = -df/dy(y0).
// A non-restoring point (k <= 0) is returned with restoring=false.
LinearOscillator linearize(const OscillatorParams& params, double y0);

// Both roots of c*lambda^2 + d*lambda + k = 0, slower root first.
std::pair<std::complex<double>, std::complex<double>> eigenvalues(const LinearOscillator& lin);

// Stored-energy-to-dissipation ratio c/(2d), seconds. Throws ZeroDamping when d = 0.
double energy_dissipation_ratio(const LinearOscillator& lin);

// zeta = d/(2*sqrt(ck)); critical within 1e-9 of 1.
std::pair<DampingClass, double> damping_classification(const LinearOscillator& lin);

OscillatorMetrics metrics(const LinearOscillator& lin);

struct StepResponse {
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> ydot;
};

struct StepOptions {
  double divergence_bound = 1e6;
};

// Fixed-step integration (classical 4th-order one-step method) of the
// oscillator from its equilibrium with a constant power mismatch applied at
// t = 0. For the electrical restoring the step enters as a p_m offset (and is
// scaled by omega_b inside f); for the linear restoring it is added to f
// directly. Series length = floor(horizon/dt) + 1.
StepResponse step_response(const OscillatorParams& params, double step, double horizon, double dt,
                           const StepOptions& opts = {});

// Table-of-parameters presets for the SM / VSM / PLL comparison. The
// published comparison fixes c and d only; the restoring coefficient is a
// free choice (the energy/dissipation ratio does not depend on it) and
// defaults to 10.
enum class Preset { sm, vsm, pll };

const char* to_string(Preset p);

OscillatorParams preset_params(Preset p, double k = 10.0);

}  // namespace psdyn::osc
