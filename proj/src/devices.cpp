#include "psdyn/devices.hpp"

#include <algorithm>
#include <cmath>

namespace psdyn::dev {

namespace {

constexpr std::complex<double> kJ{0.0, 1.0};

// Park rotation between the network phasor frame and a machine frame whose
// q-axis leads the rotor angle reference: p_d + j*p_q = P * exp(-j(delta - pi/2)).
std::complex<double> to_machine_frame(std::complex<double> p, double delta) {
  return p * std::polar(1.0, -(delta - std::numbers::pi / 2.0));
}

std::complex<double> to_network_frame(std::complex<double> p_dq, double delta) {
  return p_dq * std::polar(1.0, delta - std::numbers::pi / 2.0);
}

}  // namespace

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

double pll_frequency_estimate(const PllParams& p, double theta_meas, const PllState& s) {
  return p.kp * wrap_angle(theta_meas - s.theta_est) + s.x;
}

PllState pll_derivatives(const PllParams& p, double theta_meas, const PllState& s,
                         double omega_ref) {
  const double e = wrap_angle(theta_meas - s.theta_est);
  PllState d;
  d.x = p.ki * e;
  d.theta_est = p.omega_b * (omega_ref + p.kp * e + s.x);
  return d;
}

std::pair<double, double> droop_derivatives(const DroopParams& p, double freq_error, double x1,
                                            double x2) {
  const double dx1 = (freq_error / p.r - x1) / p.t_f;
  const double dx2 = (x1 - x2) / p.t_d;
  return {dx1, dx2};
}

std::pair<double, double> limit_dq_current(double id, double iq, double i_max) {
  const double id_lim = std::clamp(id, -i_max, i_max);
  const double head = std::sqrt(std::max(0.0, i_max * i_max - id_lim * id_lim));
  const double iq_lim = std::clamp(iq, -head, head);
  return {id_lim, iq_lim};
}

double Device::output(const std::string& which, std::span<const double>,
                      std::complex<double>) const {
  throw ValidationError("device " + name() + " has no output '" + which + "'");
}

// --- classical machine ------------------------------------------------------

void ClassicalSmParams::validate() const {
  if (!(h > 0.0) || h > 20.0) throw ValidationError("classical sm: h must be in (0, 20]");
  if (d < 0.0) throw ValidationError("classical sm: d must be >= 0");
  if (!(x_total > 0.0)) throw ValidationError("classical sm: x_total must be > 0");
}

std::pair<double, double> classical_sm_derivatives(const ClassicalSmParams& p, double e_prime,
                                                   double p_m, double delta, double omega,
                                                   std::complex<double> v_terminal) {
  const double v = std::abs(v_terminal);
  const double theta = std::arg(v_terminal);
  const double p_e = e_prime * v * std::sin(delta - theta) / p.x_total;
  const double ddelta = p.omega_b * omega;
  const double domega = (p_m - p_e - p.d * omega) / (2.0 * p.h);
  return {ddelta, domega};
}

ClassicalSmDevice::ClassicalSmDevice(std::string name, int bus_id, ClassicalSmParams p)
    : Device(std::move(name), bus_id), params_(p) {
  params_.validate();
}

std::vector<std::string> ClassicalSmDevice::state_labels() const {
  return {name() + ":delta", name() + ":omega"};
}

void ClassicalSmDevice::initialize(std::complex<double> v, std::complex<double> s_inj,
                                   std::span<double> x) {
  const std::complex<double> i = std::conj(s_inj / v);
  const std::complex<double> e = v + kJ * params_.x_total * i;
  e_prime_ = std::abs(e);
  const double delta0 = std::arg(e);
  p_m_ = e_prime_ * std::abs(v) * std::sin(delta0 - std::arg(v)) / params_.x_total;
  x[0] = delta0;
  x[1] = 0.0;
}

void ClassicalSmDevice::derivatives(std::span<const double> x, std::complex<double> v,
                                    std::span<double> dx) const {
  auto [dd, dw] = classical_sm_derivatives(params_, e_prime_, p_m_, x[0], x[1], v);
  dx[0] = dd;
  dx[1] = dw;
}

std::complex<double> ClassicalSmDevice::injected_current(std::span<const double> x,
                                                         std::complex<double> v) const {
  const std::complex<double> e = std::polar(e_prime_, x[0]);
  return (e - v) / (kJ * params_.x_total);
}

std::vector<std::string> ClassicalSmDevice::output_names() const {
  return {"delta", "omega", "pe"};
}

double ClassicalSmDevice::output(const std::string& which, std::span<const double> x,
                                 std::complex<double> v) const {
  if (which == "delta") return x[0];
  if (which == "omega") return x[1];
  if (which == "pe")
    return e_prime_ * std::abs(v) * std::sin(x[0] - std::arg(v)) / params_.x_total;
  return Device::output(which, x, v);
}

// --- detailed machine -------------------------------------------------------

void DetailedSmParams::validate() const {
  if (!(h > 0.0)) throw ValidationError("detailed sm: h must be > 0");
  if (d < 0.0) throw ValidationError("detailed sm: d must be >= 0");
  if (!(xd >= xdp && xdp >= xdpp && xdpp > 0.0))
    throw ValidationError("detailed sm: need xd >= xd' >= xd'' > 0");
  if (!(xq >= xqp && xqp >= xqpp && xqpp > 0.0))
    throw ValidationError("detailed sm: need xq >= xq' >= xq'' > 0");
  for (double t : {td0p, td0pp, tq0p, tq0pp, ta, te, tf, tg, tt})
    if (!(t > 0.0)) throw ValidationError("detailed sm: time constants must be > 0");
  if (!(rg > 0.0)) throw ValidationError("detailed sm: governor droop must be > 0");
}

DetailedSmDevice::DetailedSmDevice(std::string name, int bus_id, DetailedSmParams p)
    : Device(std::move(name), bus_id), params_(p) {
  params_.validate();
}

std::vector<std::string> DetailedSmDevice::state_labels() const {
  const std::string n = name() + ":";
  return {n + "delta", n + "omega", n + "eqp",  n + "edp",   n + "eqpp", n + "edpp",
          n + "avr_vr", n + "avr_efd", n + "avr_rf", n + "gov_x", n + "gov_pm"};
}

std::pair<double, double> DetailedSmDevice::stator_currents(std::span<const double> x,
                                                            std::complex<double> v) const {
  const auto& p = params_;
  const std::complex<double> v_dq = to_machine_frame(v, x[kDelta]);
  const double vd = v_dq.real(), vq = v_dq.imag();
  const double det = p.ra * p.ra + p.xdpp * p.xqpp;
  const double ad = vd - x[kEdpp];
  const double aq = vq - x[kEqpp];
  const double id = (-p.ra * ad - p.xqpp * aq) / det;
  const double iq = (p.xdpp * ad - p.ra * aq) / det;
  return {id, iq};
}

void DetailedSmDevice::initialize(std::complex<double> v, std::complex<double> s_inj,
                                  std::span<double> x) {
  const auto& p = params_;
  const std::complex<double> i = std::conj(s_inj / v);
  const std::complex<double> e = v + std::complex<double>(p.ra, p.xq) * i;
  const double delta0 = std::arg(e);

  const std::complex<double> v_dq = to_machine_frame(v, delta0);
  const std::complex<double> i_dq = to_machine_frame(i, delta0);
  const double vd = v_dq.real(), vq = v_dq.imag();
  const double id = i_dq.real(), iq = i_dq.imag();

  const double eqp = vq + p.ra * iq + p.xdp * id;
  const double edp = vd + p.ra * id - p.xqp * iq;
  const double eqpp = vq + p.ra * iq + p.xdpp * id;
  const double edpp = vd + p.ra * id - p.xqpp * iq;
  const double efd = eqp + (p.xd - p.xdp) * id;
  const double pe = edpp * id + eqpp * iq + (p.xqpp - p.xdpp) * id * iq;

  x[kDelta] = delta0;
  x[kOmega] = 0.0;
  x[kEqp] = eqp;
  x[kEdp] = edp;
  x[kEqpp] = eqpp;
  x[kEdpp] = edpp;
  x[kVr] = p.ke * efd;
  x[kEfd] = efd;
  x[kRf] = p.kf / p.tf * efd;
  x[kGovX] = pe;
  x[kPm] = pe;
  v_ref_ = std::abs(v) + x[kVr] / p.ka;
  p_ref_ = pe;
}

void DetailedSmDevice::derivatives(std::span<const double> x, std::complex<double> v,
                                   std::span<double> dx) const {
  const auto& p = params_;
  const auto [id, iq] = stator_currents(x, v);
  const double pe = x[kEdpp] * id + x[kEqpp] * iq + (p.xqpp - p.xdpp) * id * iq;
  const double vmag = std::abs(v);
  const double vf = p.kf / p.tf * x[kEfd] - x[kRf];

  dx[kDelta] = p.omega_b * x[kOmega];
  dx[kOmega] = (x[kPm] - pe - p.d * x[kOmega]) / (2.0 * p.h);
  dx[kEqp] = (x[kEfd] - x[kEqp] - (p.xd - p.xdp) * id) / p.td0p;
  dx[kEdp] = (-x[kEdp] + (p.xq - p.xqp) * iq) / p.tq0p;
  dx[kEqpp] = (x[kEqp] - x[kEqpp] - (p.xdp - p.xdpp) * id) / p.td0pp;
  dx[kEdpp] = (x[kEdp] - x[kEdpp] + (p.xqp - p.xqpp) * iq) / p.tq0pp;
  dx[kVr] = (p.ka * (v_ref_ - vmag - vf) - x[kVr]) / p.ta;
  dx[kEfd] = (x[kVr] - p.ke * x[kEfd]) / p.te;
  dx[kRf] = (p.kf / p.tf * x[kEfd] - x[kRf]) / p.tf;
  dx[kGovX] = (p_ref_ - x[kOmega] / p.rg - x[kGovX]) / p.tg;
  dx[kPm] = (x[kGovX] - x[kPm]) / p.tt;
}

std::complex<double> DetailedSmDevice::injected_current(std::span<const double> x,
                                                        std::complex<double> v) const {
  const auto [id, iq] = stator_currents(x, v);
  return to_network_frame({id, iq}, x[kDelta]);
}

std::vector<std::string> DetailedSmDevice::output_names() const {
  return {"delta", "omega", "id", "iq", "pe", "efd", "pm", "vterm"};
}

double DetailedSmDevice::output(const std::string& which, std::span<const double> x,
                                std::complex<double> v) const {
  if (which == "delta") return x[kDelta];
  if (which == "omega") return x[kOmega];
  if (which == "efd") return x[kEfd];
  if (which == "pm") return x[kPm];
  if (which == "vterm") return std::abs(v);
  const auto [id, iq] = stator_currents(x, v);
  if (which == "id") return id;
  if (which == "iq") return iq;
  if (which == "pe") return x[kEdpp] * id + x[kEqpp] * iq + (params_.xqpp - params_.xdpp) * id * iq;
  return Device::output(which, x, v);
}

// --- converter-interfaced generator ------------------------------------------

void CigParams::validate() const {
  if (!(droop.r > 0.0)) throw ValidationError("cig: droop r must be > 0");
  for (double t : {droop.t_f, droop.t_d, ti})
    if (!(t > 0.0)) throw ValidationError("cig: time constants must be > 0");
  if (!(i_max > 0.0)) throw ValidationError("cig: i_max must be > 0");
}

CigDevice::CigDevice(std::string name, int bus_id, CigParams p)
    : Device(std::move(name), bus_id), params_(p) {
  params_.validate();
}

std::vector<std::string> CigDevice::state_labels() const {
  const std::string n = name() + ":";
  return {n + "pll_x", n + "pll_theta", n + "droop_x1", n + "droop_x2", n + "id"};
}

void CigDevice::initialize(std::complex<double> v, std::complex<double> s_inj,
                           std::span<double> x) {
  const double vmag = std::abs(v);
  if (vmag < 1e-6) throw InitializationInfeasible("cig: terminal voltage magnitude ~ 0");
  id0_ = s_inj.real() / vmag;
  iq0_ = -s_inj.imag() / vmag;
  const double imag0 = std::hypot(id0_, iq0_);
  if (imag0 > params_.i_max)
    throw InitializationInfeasible("cig: dispatch current " + std::to_string(imag0) +
                                   " pu exceeds i_max " + std::to_string(params_.i_max));
  x[kPllX] = 0.0;
  x[kPllTheta] = std::arg(v);
  x[kDroopX1] = 0.0;
  x[kDroopX2] = 0.0;
  x[kId] = id0_;
}

void CigDevice::derivatives(std::span<const double> x, std::complex<double> v,
                            std::span<double> dx) const {
  const auto& p = params_;
  const double theta = std::arg(v);
  PllState s{x[kPllX], x[kPllTheta]};
  const PllState ds = pll_derivatives(p.pll, theta, s);
  const double freq_est = pll_frequency_estimate(p.pll, theta, s);
  const auto [dx1, dx2] = droop_derivatives(p.droop, -freq_est, x[kDroopX1], x[kDroopX2]);
  const double id_cmd = id0_ + x[kDroopX2];

  dx[kPllX] = ds.x;
  dx[kPllTheta] = ds.theta_est;
  dx[kDroopX1] = dx1;
  dx[kDroopX2] = dx2;
  dx[kId] = (id_cmd - x[kId]) / p.ti;
}

std::complex<double> CigDevice::injected_current(std::span<const double> x,
                                                 std::complex<double>) const {
  const auto [id, iq] = limit_dq_current(x[kId], iq0_, params_.i_max);
  return std::complex<double>(id, iq) * std::polar(1.0, x[kPllTheta]);
}

std::vector<std::string> CigDevice::output_names() const {
  return {"freq_est", "droop_out", "droop_norm", "id", "id_unclamped", "iq", "imag"};
}

double CigDevice::output(const std::string& which, std::span<const double> x,
                         std::complex<double> v) const {
  if (which == "freq_est")
    return pll_frequency_estimate(params_.pll, std::arg(v), {x[kPllX], x[kPllTheta]});
  if (which == "droop_out") return x[kDroopX2];
  // Droop output scaled back by the droop gain: comparable to the per-unit
  // frequency traces.
  if (which == "droop_norm") return x[kDroopX2] * params_.droop.r;
  if (which == "id_unclamped") return x[kId];
  const auto [id, iq] = limit_dq_current(x[kId], iq0_, params_.i_max);
  if (which == "id") return id;
  if (which == "iq") return iq;
  if (which == "imag") return std::hypot(id, iq);
  return Device::output(which, x, v);
}

// --- infinite bus -------------------------------------------------------------

InfiniteBusDevice::InfiniteBusDevice(std::string name, int bus_id, double y_src)
    : Device(std::move(name), bus_id), y_src_(y_src, 0.0) {
  if (!(y_src > 0.0)) throw ValidationError("infinite bus: y_src must be > 0");
}

void InfiniteBusDevice::initialize(std::complex<double> v, std::complex<double> s_inj,
                                   std::span<double>) {
  const std::complex<double> i = std::conj(s_inj / v);
  v0_ = v + i / y_src_;
}

std::complex<double> InfiniteBusDevice::injected_current(std::span<const double>,
                                                         std::complex<double> v) const {
  return y_src_ * (v0_ - v);
}

// --- stacked initialization ----------------------------------------------------

std::vector<double> initialize_all(const std::vector<std::unique_ptr<Device>>& devices,
                                   const Eigen::VectorXcd& bus_voltages,
                                   const std::vector<std::complex<double>>& bus_injections,
                                   const std::vector<int>& device_bus_index, double tol) {
  int total = 0;
  for (const auto& d : devices) total += d->state_count();
  std::vector<double> x(static_cast<std::size_t>(total), 0.0);

  int offset = 0;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    const int bus = device_bus_index[k];
    const std::complex<double> v = bus_voltages(bus);
    const std::complex<double> s = bus_injections[static_cast<std::size_t>(bus)];
    auto slice = std::span<double>(x).subspan(offset, devices[k]->state_count());
    devices[k]->initialize(v, s, slice);

    std::vector<double> dx(devices[k]->state_count(), 0.0);
    devices[k]->derivatives(slice, v, dx);
    for (std::size_t s_i = 0; s_i < dx.size(); ++s_i) {
      if (std::abs(dx[s_i]) > tol)
        throw InitializationInfeasible(
            "device " + devices[k]->name() + " state " + devices[k]->state_labels()[s_i] +
            " has initial derivative " + std::to_string(dx[s_i]));
    }
    offset += devices[k]->state_count();
  }
  return x;
}

}  // namespace psdyn::dev
