#include "psdyn/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace psdyn::sim {

DaeSystem::DaeSystem(net::Network dynamic_net, std::vector<std::unique_ptr<dev::Device>> devices)
    : topology_(std::move(dynamic_net)), devices_(std::move(devices)) {
  n_bus_ = static_cast<int>(topology_.base().buses.size());
  n_v_ = 2 * n_bus_;
  for (const auto& d : devices_) {
    device_bus_.push_back(topology_.base().index_of(d->bus_id()));
    device_offset_.push_back(n_x_);
    n_x_ += d->state_count();
    for (auto& l : d->state_labels()) labels_.push_back(l);
  }
  if (static_cast<int>(labels_.size()) != n_x_)
    throw DimensionMismatch("device state labels do not match state count");
}

DaeSystem assemble(net::Network dynamic_net, std::vector<std::unique_ptr<dev::Device>> devices) {
  return DaeSystem(std::move(dynamic_net), std::move(devices));
}

std::complex<double> DaeSystem::bus_voltage(const Eigen::VectorXd& v, int bus_index) {
  return {v(2 * bus_index), v(2 * bus_index + 1)};
}

void DaeSystem::f(const Eigen::VectorXd& x, const Eigen::VectorXd& v, Eigen::VectorXd& dx) const {
  if (x.size() != n_x_ || v.size() != n_v_) throw DimensionMismatch("DaeSystem::f");
  dx.resize(n_x_);
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    const int off = device_offset_[k];
    const int n = devices_[k]->state_count();
    if (n == 0) continue;
    const std::complex<double> vb = bus_voltage(v, device_bus_[k]);
    devices_[k]->derivatives(std::span<const double>(x.data() + off, n), vb,
                             std::span<double>(dx.data() + off, n));
  }
}

void DaeSystem::g(const Eigen::VectorXd& x, const Eigen::VectorXd& v, Eigen::VectorXd& res) const {
  if (x.size() != n_x_ || v.size() != n_v_) throw DimensionMismatch("DaeSystem::g");
  res.resize(n_v_);

  Eigen::VectorXcd vc(n_bus_);
  for (int i = 0; i < n_bus_; ++i) vc(i) = {v(2 * i), v(2 * i + 1)};

  Eigen::VectorXcd mism = -(topology_.ybus() * vc);
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    const int off = device_offset_[k];
    const int n = devices_[k]->state_count();
    mism(device_bus_[k]) += devices_[k]->injected_current(
        std::span<const double>(x.data() + off, n), vc(device_bus_[k]));
  }
  for (int i = 0; i < n_bus_; ++i) {
    res(2 * i) = mism(i).real();
    res(2 * i + 1) = mism(i).imag();
  }
}

void solve_algebraic(const DaeSystem& dae, const Eigen::VectorXd& x, Eigen::VectorXd& v,
                     const NewtonOptions& opts) {
  const int m = dae.n_alg();
  Eigen::VectorXd res(m), res_p(m);
  Eigen::MatrixXd jac(m, m);

  dae.g(x, v, res);
  if (res.cwiseAbs().maxCoeff() < 1e-11) return;  // already consistent, leave v untouched

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    for (int j = 0; j < m; ++j) {
      const double h = opts.fd_eps * std::max(1.0, std::abs(v(j)));
      const double saved = v(j);
      v(j) = saved + h;
      dae.g(x, v, res_p);
      v(j) = saved;
      jac.col(j) = (res_p - res) / h;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Eigen::VectorXd dv = lu.solve(-res);
    if (!dv.allFinite())
      throw SingularAlgebraicJacobian("algebraic Jacobian is singular");
    v += dv;
    dae.g(x, v, res);
    if (dv.cwiseAbs().maxCoeff() < opts.tol) return;
  }
  throw NewtonDivergence("algebraic re-solution did not converge");
}

int step_trapezoidal(const DaeSystem& dae, Eigen::VectorXd& x, Eigen::VectorXd& v, double dt,
                     const NewtonOptions& opts) {
  const int nx = dae.n_states();
  const int nv = dae.n_alg();
  const int n = nx + nv;

  Eigen::VectorXd f0(nx), dxv(nx);
  dae.f(x, v, f0);

  // Unknown z = [x'; v'], explicit-Euler predictor.
  Eigen::VectorXd z(n);
  z.head(nx) = x + dt * f0;
  z.tail(nv) = v;

  Eigen::VectorXd zx(nx), zv(nv), res(n), res_p(n);
  Eigen::MatrixXd jac(n, n);

  const auto residual = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& out) {
    zx = zz.head(nx);
    zv = zz.tail(nv);
    dae.f(zx, zv, dxv);
    out.resize(n);
    out.head(nx) = zx - x - 0.5 * dt * (dxv + f0);
    Eigen::VectorXd gy(nv);
    dae.g(zx, zv, gy);
    out.tail(nv) = gy;
  };

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    residual(z, res);
    for (int j = 0; j < n; ++j) {
      const double h = opts.fd_eps * std::max(1.0, std::abs(z(j)));
      const double saved = z(j);
      z(j) = saved + h;
      residual(z, res_p);
      z(j) = saved;
      jac.col(j) = (res_p - res) / h;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Eigen::VectorXd dz = lu.solve(-res);
    if (!dz.allFinite()) throw NewtonDivergence("trapezoidal step: singular iteration matrix");
    z += dz;
    if (dz.cwiseAbs().maxCoeff() < opts.tol) {
      x = z.head(nx);
      v = z.tail(nv);
      return iter;
    }
  }
  throw NewtonDivergence("trapezoidal step: no convergence in " + std::to_string(opts.max_iter) +
                         " iterations");
}

void Scenario::validate() const {
  if (!(dt > 0.0)) throw ValidationError("scenario: dt must be > 0");
  if (!(dt_coarse > 0.0)) throw ValidationError("scenario: coarse dt must be > 0");
  if (!(horizon > 0.0)) throw ValidationError("scenario: horizon must be > 0");
  for (const auto& ev : events)
    if (!(ev.time > 0.0 && ev.time < horizon))
      throw ValidationError("scenario: event times must lie strictly within (0, horizon)");
}

std::size_t SimulationResult::index_at(double time) const {
  const auto it = std::lower_bound(t.begin(), t.end(), time);
  if (it == t.end()) return t.size() - 1;
  if (it == t.begin()) return 0;
  return (std::abs(*it - time) < std::abs(*(it - 1) - time))
             ? static_cast<std::size_t>(it - t.begin())
             : static_cast<std::size_t>(it - t.begin() - 1);
}

namespace {

std::vector<double> build_grid(const Scenario& sc) {
  std::vector<double> grid;
  grid.push_back(0.0);
  const double fine_end = std::min(sc.dt_switch, sc.horizon);
  const long n_fine = std::lround(fine_end / sc.dt);
  for (long i = 1; i <= n_fine; ++i) grid.push_back(static_cast<double>(i) * sc.dt);
  double base = grid.back();
  long j = 1;
  while (base + static_cast<double>(j) * sc.dt_coarse < sc.horizon - 1e-12) {
    grid.push_back(base + static_cast<double>(j) * sc.dt_coarse);
    ++j;
  }
  if (grid.back() < sc.horizon - 1e-12) grid.push_back(sc.horizon);
  return grid;
}

// Steps with divergence fallback: halve dt (recursively, bounded depth).
int advance(const DaeSystem& dae, Eigen::VectorXd& x, Eigen::VectorXd& v, double dt,
            const RunOptions& opts, int depth, int& halvings) {
  try {
    return step_trapezoidal(dae, x, v, dt, opts.newton);
  } catch (const NewtonDivergence&) {
    if (depth >= opts.max_dt_halvings) throw;
    ++halvings;
    int it = advance(dae, x, v, dt / 2.0, opts, depth + 1, halvings);
    it += advance(dae, x, v, dt / 2.0, opts, depth + 1, halvings);
    return it;
  }
}

}  // namespace

SimulationResult run(DaeSystem& dae, Eigen::VectorXd x0, Eigen::VectorXd v0,
                     const Scenario& scenario, const RunOptions& opts) {
  scenario.validate();
  SimulationResult out;
  out.state_labels = dae.state_labels();

  const std::vector<double> grid = build_grid(scenario);

  // Snap events to grid points.
  struct Timed {
    std::size_t grid_index;
    net::Event ev;
  };
  std::vector<Timed> events;
  for (const auto& ev : scenario.events) {
    std::size_t best = 0;
    double best_err = std::abs(grid[0] - ev.time);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double err = std::abs(grid[i] - ev.time);
      if (err < best_err) {
        best = i;
        best_err = err;
      }
    }
    if (best_err > 1e-9)
      out.warnings.push_back("event at t=" + std::to_string(ev.time) +
                             " snapped to grid point t=" + std::to_string(grid[best]));
    Timed te{best, ev};
    te.ev.time = grid[best];
    events.push_back(te);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Timed& a, const Timed& b) { return a.grid_index < b.grid_index; });

  Eigen::VectorXd x = std::move(x0), v = std::move(v0);
  Eigen::VectorXd gres(dae.n_alg());
  dae.g(x, v, gres);
  out.t.push_back(0.0);
  out.x.push_back(x);
  out.v.push_back(v);
  out.newton_iters.push_back(0);
  out.g_residuals.push_back(gres.cwiseAbs().maxCoeff());

  std::size_t next_event = 0;
  int halvings = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    try {
      // Apply events scheduled at this grid point, then re-solve the network
      // with frozen states if the admittance matrix actually changed.
      bool topology_changed = false;
      while (next_event < events.size() && events[next_event].grid_index == i) {
        const net::YBus before = dae.topology().ybus();
        dae.topology().apply(events[next_event].ev);
        if (std::memcmp(before.data(), dae.topology().ybus().data(),
                        sizeof(std::complex<double>) * static_cast<std::size_t>(before.size())) !=
            0)
          topology_changed = true;
        ++next_event;
      }
      if (topology_changed) solve_algebraic(dae, x, v, opts.newton);

      const double dt = grid[i + 1] - grid[i];
      const int iters = advance(dae, x, v, dt, opts, 0, halvings);
      dae.g(x, v, gres);
      out.t.push_back(grid[i + 1]);
      out.x.push_back(x);
      out.v.push_back(v);
      out.newton_iters.push_back(iters);
      out.g_residuals.push_back(gres.cwiseAbs().maxCoeff());
    } catch (const NumericalError& e) {
      out.failed = true;
      out.fail_time = grid[i];
      out.fail_reason = e.what();
      break;
    }
  }
  if (halvings > 0)
    out.warnings.push_back("step size was halved " + std::to_string(halvings) +
                           " time(s) to pass Newton divergence");
  return out;
}

PreparedSystem prepare(const net::Network& input, std::vector<std::unique_ptr<dev::Device>> devices,
                       const net::PowerFlowOptions& pf_opts) {
  PreparedSystem ps;
  ps.powerflow = net::solve_power_flow(input, pf_opts);

  net::Network dyn = net::loads_to_admittance(input, ps.powerflow);

  std::vector<int> device_bus;
  device_bus.reserve(devices.size());
  for (const auto& d : devices) device_bus.push_back(input.index_of(d->bus_id()));

  const std::vector<double> x0 =
      dev::initialize_all(devices, ps.powerflow.v, ps.powerflow.injection, device_bus);

  ps.dae = std::make_unique<DaeSystem>(std::move(dyn), std::move(devices));
  ps.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<long>(x0.size()));
  ps.v0.resize(ps.dae->n_alg());
  for (int i = 0; i < ps.dae->n_buses(); ++i) {
    ps.v0(2 * i) = ps.powerflow.v(i).real();
    ps.v0(2 * i + 1) = ps.powerflow.v(i).imag();
  }

  Eigen::VectorXd res;
  ps.dae->g(ps.x0, ps.v0, res);
  const double g0 = res.size() ? res.cwiseAbs().maxCoeff() : 0.0;
  if (g0 > 1e-8)
    throw InitializationInfeasible("initial algebraic residual " + std::to_string(g0) +
                                   " exceeds 1e-8");
  return ps;
}

}  // namespace psdyn::sim
