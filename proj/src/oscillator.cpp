#include "psdyn/oscillator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace psdyn::osc {

void OscillatorParams::validate() const {
  if (!(c > 0.0)) throw ValidationError("oscillator: c must be > 0");
  if (d < 0.0) throw ValidationError("oscillator: d must be >= 0");
  if (!(omega_b > 0.0)) throw ValidationError("oscillator: omega_b must be > 0");
  if (const auto* sm = std::get_if<SmElectricalRestoring>(&restoring)) {
    if (!(sm->x > 0.0)) throw ValidationError("oscillator: reactance x must be > 0");
    if (!(sm->e_prime > 0.0)) throw ValidationError("oscillator: e_prime must be > 0");
    if (!(sm->v > 0.0)) throw ValidationError("oscillator: v must be > 0");
    if (std::abs(sm->p_m * sm->x / (sm->e_prime * sm->v)) > 1.0)
      throw NoEquilibrium("oscillator: |p_m*x/(e'*v)| > 1, no equilibrium exists");
  }
}

double OscillatorParams::f(double y) const {
  if (const auto* lin = std::get_if<LinearRestoring>(&restoring)) return -lin->k * y;
  const auto& sm = std::get<SmElectricalRestoring>(restoring);
  return omega_b * (sm.p_m - sm.e_prime * sm.v * std::sin(y - sm.theta) / sm.x);
}

double OscillatorParams::df_dy(double y) const {
  if (const auto* lin = std::get_if<LinearRestoring>(&restoring)) return -lin->k;
  const auto& sm = std::get<SmElectricalRestoring>(restoring);
  return -omega_b * sm.e_prime * sm.v * std::cos(y - sm.theta) / sm.x;
}

double equilibrium(const OscillatorParams& params) {
  params.validate();
  if (std::holds_alternative<LinearRestoring>(params.restoring)) return 0.0;
  const auto& sm = std::get<SmElectricalRestoring>(params.restoring);
  const double s = sm.p_m * sm.x / (sm.e_prime * sm.v);
  return sm.theta + std::asin(s);
}

LinearOscillator linearize(const OscillatorParams& params, double y0) {
  params.validate();
  LinearOscillator lin;
  lin.c = params.c;
  lin.d = params.d;
  lin.k = -params.df_dy(y0);
  lin.restoring = lin.k > 0.0;
  return lin;
}

std::pair<std::complex<double>, std::complex<double>> eigenvalues(const LinearOscillator& lin) {
  if (!(lin.c > 0.0)) throw ValidationError("eigenvalues: c must be > 0");
  const double disc = lin.d * lin.d - 4.0 * lin.c * lin.k;
  if (disc < 0.0) {
    const double re = -lin.d / (2.0 * lin.c);
    const double im = std::sqrt(-disc) / (2.0 * lin.c);
    return {{re, im}, {re, -im}};
  }
  // Real roots; avoid cancellation between -d and sqrt(disc).
  const double sq = std::sqrt(disc);
  double l1, l2;
  if (lin.d >= 0.0) {
    l2 = (-lin.d - sq) / (2.0 * lin.c);
    l1 = (l2 != 0.0) ? lin.k / (lin.c * l2) : (-lin.d + sq) / (2.0 * lin.c);
  } else {
    l1 = (-lin.d + sq) / (2.0 * lin.c);
    l2 = (l1 != 0.0) ? lin.k / (lin.c * l1) : (-lin.d - sq) / (2.0 * lin.c);
  }
  if (l1 < l2) std::swap(l1, l2);
  return {{l1, 0.0}, {l2, 0.0}};
}

double energy_dissipation_ratio(const LinearOscillator& lin) {
  if (lin.d == 0.0) throw ZeroDamping("energy_dissipation_ratio: unbounded for d = 0");
  return lin.c / (2.0 * lin.d);
}

std::pair<DampingClass, double> damping_classification(const LinearOscillator& lin) {
  if (!(lin.c > 0.0) || !(lin.k > 0.0))
    throw ValidationError("damping_classification: requires c > 0 and k > 0");
  const double zeta = lin.d / (2.0 * std::sqrt(lin.c * lin.k));
  DampingClass cls;
  if (std::abs(zeta - 1.0) < 1e-9)
    cls = DampingClass::critical;
  else if (zeta < 1.0)
    cls = DampingClass::underdamped;
  else
    cls = DampingClass::overdamped;
  return {cls, zeta};
}

const char* to_string(DampingClass c) {
  switch (c) {
    case DampingClass::underdamped: return "underdamped";
    case DampingClass::critical: return "critical";
    case DampingClass::overdamped: return "overdamped";
  }
  return "?";
}

OscillatorMetrics metrics(const LinearOscillator& lin) {
  OscillatorMetrics m;
  auto [l1, l2] = eigenvalues(lin);
  m.lambda1 = l1;
  m.lambda2 = l2;
  auto [cls, zeta] = damping_classification(lin);
  m.damping_class = cls;
  m.damping_ratio = zeta;
  m.natural_frequency_hz = std::sqrt(lin.k / lin.c) / (2.0 * std::numbers::pi);
  m.energy_dissipation_ratio = energy_dissipation_ratio(lin);
  // Envelope-based 2% settling estimate, 4/(zeta*omega_n) = 8c/d. The same
  // formula is applied in every damping class so that the time-scale
  // comparison across devices stays tied to c/(2d).
  m.settling_time_2pct = 8.0 * lin.c / lin.d;
  return m;
}

StepResponse step_response(const OscillatorParams& params, double step, double horizon, double dt,
                           const StepOptions& opts) {
  params.validate();
  if (!(dt > 0.0)) throw ValidationError("step_response: dt must be > 0");
  if (horizon < dt) throw ValidationError("step_response: horizon must be >= dt");

  const double y0 = equilibrium(params);
  const bool electrical = std::holds_alternative<SmElectricalRestoring>(params.restoring);
  const double forcing = electrical ? params.omega_b * step : step;

  const auto rhs = [&](double y, double v, double& dy, double& dv) {
    dy = v;
    dv = (params.f(y) + forcing - params.d * v) / params.c;
  };

  const std::size_t n = static_cast<std::size_t>(std::floor(horizon / dt)) + 1;
  StepResponse out;
  out.t.reserve(n);
  out.y.reserve(n);
  out.ydot.reserve(n);

  double y = y0, v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.t.push_back(static_cast<double>(i) * dt);
    out.y.push_back(y);
    out.ydot.push_back(v);
    if (i + 1 == n) break;

    double k1y, k1v, k2y, k2v, k3y, k3v, k4y, k4v;
    rhs(y, v, k1y, k1v);
    rhs(y + 0.5 * dt * k1y, v + 0.5 * dt * k1v, k2y, k2v);
    rhs(y + 0.5 * dt * k2y, v + 0.5 * dt * k2v, k3y, k3v);
    rhs(y + dt * k3y, v + dt * k3v, k4y, k4v);
    y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);

    if (!(std::abs(y) < opts.divergence_bound))
      throw Divergence("step_response: |y| exceeded " + std::to_string(opts.divergence_bound) +
                       " at t = " + std::to_string(out.t.back() + dt));
  }
  return out;
}

const char* to_string(Preset p) {
  switch (p) {
    case Preset::sm: return "sm";
    case Preset::vsm: return "vsm";
    case Preset::pll: return "pll";
  }
  return "?";
}

OscillatorParams preset_params(Preset p, double k) {
  OscillatorParams params;
  params.restoring = LinearRestoring{k};
  switch (p) {
    case Preset::sm:
      params.c = 6.0;
      params.d = 3.0;
      break;
    case Preset::vsm:
      params.c = 6.0;
      params.d = 100.0;
      break;
    case Preset::pll:
      params.c = 0.01;
      params.d = 3.0;
      break;
  }
  return params;
}

}  // namespace psdyn::osc
