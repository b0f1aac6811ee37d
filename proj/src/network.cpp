#include "psdyn/network.hpp"

#include <algorithm>
#include <cmath>

namespace psdyn::net {

namespace {
constexpr std::complex<double> kJ{0.0, 1.0};
}

int Network::index_of(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == bus_id) return static_cast<int>(i);
  throw UnknownBus("unknown bus id " + std::to_string(bus_id));
}

int Network::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].kind == BusKind::slack) return static_cast<int>(i);
  throw ValidationError("network has no slack bus");
}

void Network::validate() const {
  if (buses.empty()) throw ValidationError("network has no buses");
  int slack_count = 0;
  for (const auto& b : buses) {
    if (std::count_if(buses.begin(), buses.end(), [&](const Bus& o) { return o.id == b.id; }) != 1)
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (b.kind == BusKind::slack) ++slack_count;
    if ((b.kind == BusKind::slack || b.kind == BusKind::pv) && !(b.v_set > 0.0))
      throw ValidationError("bus " + std::to_string(b.id) + ": v_set must be > 0");
  }
  if (slack_count != 1)
    throw ValidationError("network must have exactly one slack bus, found " +
                          std::to_string(slack_count));
  for (const auto& br : branches) {
    if (br.x == 0.0)
      throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            ": x must be nonzero");
    if (br.from == br.to)
      throw ValidationError("branch endpoints must differ (bus " + std::to_string(br.from) + ")");
    index_of(br.from);
    index_of(br.to);
  }
}

YBus build_ybus(const Network& net) {
  net.validate();
  const int n = static_cast<int>(net.buses.size());
  YBus y = YBus::Zero(n, n);

  for (int i = 0; i < n; ++i) y(i, i) += net.buses[i].shunt;

  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    const int i = net.index_of(br.from);
    const int j = net.index_of(br.to);
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> ysh{0.0, br.b_half};
    const double t = br.tap;
    y(i, i) += (ys + ysh) / (t * t);
    y(j, j) += ys + ysh;
    y(i, j) -= ys / t;
    y(j, i) -= ys / t;
  }

  if (n > 1) {
    for (int i = 0; i < n; ++i) {
      bool connected = false;
      for (int j = 0; j < n && !connected; ++j)
        if (j != i && y(i, j) != std::complex<double>(0.0, 0.0)) connected = true;
      if (!connected)
        throw SingularIsland("bus " + std::to_string(net.buses[i].id) + " has no connections");
    }
  }
  return y;
}

namespace {

// P_i + jQ_i at every bus for voltages in polar form.
void computed_injections(const YBus& y, const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                         Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const int n = static_cast<int>(vm.size());
  p.setZero(n);
  q.setZero(n);
  for (int i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (int j = 0; j < n; ++j) {
      const double g = y(i, j).real();
      const double b = y(i, j).imag();
      if (g == 0.0 && b == 0.0) continue;
      const double th = va(i) - va(j);
      const double ct = std::cos(th), st = std::sin(th);
      pi += vm(i) * vm(j) * (g * ct + b * st);
      qi += vm(i) * vm(j) * (g * st - b * ct);
    }
    p(i) = pi;
    q(i) = qi;
  }
}

}  // namespace

PowerFlowSolution solve_power_flow(const Network& net, const PowerFlowOptions& opts) {
  net.validate();
  const YBus y = build_ybus(net);
  const int n = static_cast<int>(net.buses.size());
  const int slack = net.slack_index();

  // Unknowns: angles at all non-slack buses, magnitudes at PQ buses.
  std::vector<int> ang_idx, mag_idx;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    ang_idx.push_back(i);
    if (net.buses[i].kind == BusKind::pq) mag_idx.push_back(i);
  }
  const int na = static_cast<int>(ang_idx.size());
  const int nm = static_cast<int>(mag_idx.size());
  const int m = na + nm;

  Eigen::VectorXd vm(n), va(n);
  for (int i = 0; i < n; ++i) {
    const auto& b = net.buses[i];
    vm(i) = (b.kind == BusKind::pq) ? 1.0 : b.v_set;
    va(i) = 0.0;
  }

  Eigen::VectorXd p(n), q(n), mm(m);
  int iterations = 0;
  double max_res = 0.0;

  auto residual = [&]() {
    computed_injections(y, vm, va, p, q);
    for (int r = 0; r < na; ++r) mm(r) = net.buses[ang_idx[r]].p_inj - p(ang_idx[r]);
    for (int r = 0; r < nm; ++r) mm(na + r) = net.buses[mag_idx[r]].q_inj - q(mag_idx[r]);
    return mm.size() ? mm.cwiseAbs().maxCoeff() : 0.0;
  };

  max_res = residual();
  while (max_res >= opts.tol) {
    if (iterations >= opts.max_iter)
      throw NonConvergence("power flow did not converge in " + std::to_string(opts.max_iter) +
                           " iterations (max residual " + std::to_string(max_res) + ")");

    // Jacobian in polar coordinates: rows P then Q, columns dtheta then dV.
    Eigen::MatrixXd jac(m, m);
    for (int r = 0; r < na; ++r) {
      const int i = ang_idx[r];
      for (int cidx = 0; cidx < na; ++cidx) {
        const int j = ang_idx[cidx];
        const double g = y(i, j).real(), b = y(i, j).imag();
        if (i == j) {
          jac(r, cidx) = -q(i) - b * vm(i) * vm(i);
        } else {
          const double th = va(i) - va(j);
          jac(r, cidx) = vm(i) * vm(j) * (g * std::sin(th) - b * std::cos(th));
        }
      }
      for (int cidx = 0; cidx < nm; ++cidx) {
        const int j = mag_idx[cidx];
        const double g = y(i, j).real(), b = y(i, j).imag();
        if (i == j) {
          jac(r, na + cidx) = p(i) / vm(i) + g * vm(i);
        } else {
          const double th = va(i) - va(j);
          jac(r, na + cidx) = vm(i) * (g * std::cos(th) + b * std::sin(th));
        }
      }
    }
    for (int r = 0; r < nm; ++r) {
      const int i = mag_idx[r];
      for (int cidx = 0; cidx < na; ++cidx) {
        const int j = ang_idx[cidx];
        const double g = y(i, j).real(), b = y(i, j).imag();
        if (i == j) {
          jac(na + r, cidx) = p(i) - g * vm(i) * vm(i);
        } else {
          const double th = va(i) - va(j);
          jac(na + r, cidx) = -vm(i) * vm(j) * (g * std::cos(th) + b * std::sin(th));
        }
      }
      for (int cidx = 0; cidx < nm; ++cidx) {
        const int j = mag_idx[cidx];
        const double g = y(i, j).real(), b = y(i, j).imag();
        if (i == j) {
          jac(na + r, na + cidx) = q(i) / vm(i) - b * vm(i);
        } else {
          const double th = va(i) - va(j);
          jac(na + r, na + cidx) = vm(i) * (g * std::sin(th) - b * std::cos(th));
        }
      }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible())
      throw JacobianSingular("power flow Jacobian is singular at iteration " +
                             std::to_string(iterations));
    const Eigen::VectorXd dx = lu.solve(mm);
    for (int r = 0; r < na; ++r) va(ang_idx[r]) += dx(r);
    for (int r = 0; r < nm; ++r) vm(mag_idx[r]) += dx(na + r);
    ++iterations;
    max_res = residual();
    if (!std::isfinite(max_res))
      throw NonConvergence("power flow diverged at iteration " + std::to_string(iterations));
  }

  computed_injections(y, vm, va, p, q);
  PowerFlowSolution sol;
  sol.v.resize(n);
  sol.injection.resize(n);
  for (int i = 0; i < n; ++i) {
    sol.v(i) = std::polar(vm(i), va(i));
    sol.injection[i] = {p(i), q(i)};
  }
  sol.slack_p = p(slack);
  sol.slack_q = q(slack);
  sol.iterations = iterations;
  sol.max_residual = max_res;
  sol.low_voltage = (vm.minCoeff() < opts.low_voltage_threshold);
  return sol;
}

Network loads_to_admittance(const Network& net, const PowerFlowSolution& sol) {
  Network out = net;
  for (std::size_t i = 0; i < out.buses.size(); ++i) {
    Bus& b = out.buses[i];
    if (b.kind != BusKind::pq) continue;
    if (b.p_inj == 0.0 && b.q_inj == 0.0) continue;
    const double vmag = std::abs(sol.v(static_cast<int>(i)));
    if (vmag < 1e-6)
      throw ZeroVoltage("loads_to_admittance: |v| < 1e-6 at bus " + std::to_string(b.id));
    const double p_load = -b.p_inj;
    const double q_load = -b.q_inj;
    b.shunt += std::complex<double>(p_load, -q_load) / (vmag * vmag);
    b.p_inj = 0.0;
    b.q_inj = 0.0;
  }
  return out;
}

TopologyState::TopologyState(Network base) : base_(std::move(base)) {
  base_.validate();
  rebuild();
}

int TopologyState::branch_index(int from, int to) const {
  for (std::size_t i = 0; i < base_.branches.size(); ++i) {
    const auto& br = base_.branches[i];
    if ((br.from == from && br.to == to) || (br.from == to && br.to == from))
      return static_cast<int>(i);
  }
  throw UnknownBranch("unknown branch " + std::to_string(from) + "-" + std::to_string(to));
}

void TopologyState::apply(const Event& ev) {
  switch (ev.kind) {
    case EventKind::apply_fault: {
      const int idx = base_.index_of(ev.bus);
      active_faults_.emplace_back(idx, ev.admittance);
      break;
    }
    case EventKind::clear_fault: {
      const int idx = base_.index_of(ev.bus);
      auto it = std::find_if(active_faults_.begin(), active_faults_.end(),
                             [&](const auto& f) { return f.first == idx; });
      if (it == active_faults_.end())
        throw ValidationError("clear_fault: no active fault at bus " + std::to_string(ev.bus));
      active_faults_.erase(it);
      break;
    }
    case EventKind::trip_line:
      tripped_.insert(branch_index(ev.from, ev.to));
      break;
  }
  rebuild();
}

void TopologyState::rebuild() {
  Network active = base_;
  for (int idx : tripped_) active.branches[idx].in_service = false;
  current_ = build_ybus(active);
  for (const auto& [bus, adm] : active_faults_) current_(bus, bus) += adm;
}

}  // namespace psdyn::net
