#include <doctest.h>

#include <cmath>

#include "psdyn/io.hpp"
#include "psdyn/simulation.hpp"

using namespace psdyn;
using namespace psdyn::sim;

namespace {

const std::string kWscc = std::string(PSDYN_DATA_DIR) + "/wscc9.net";
const std::string kFaultScn = std::string(PSDYN_DATA_DIR) + "/fault_bus5.scn";

// Test-only device: xdot = lambda * x, no network coupling.
class DecayDevice : public dev::Device {
 public:
  DecayDevice(std::string name, int bus, double lambda)
      : Device(std::move(name), bus), lambda_(lambda) {}
  int state_count() const override { return 1; }
  std::vector<std::string> state_labels() const override { return {name() + ":x"}; }
  void initialize(std::complex<double>, std::complex<double>, std::span<double> x) override {
    x[0] = 1.0;
  }
  void derivatives(std::span<const double> x, std::complex<double>,
                   std::span<double> dx) const override {
    dx[0] = lambda_ * x[0];
  }
  std::complex<double> injected_current(std::span<const double>,
                                        std::complex<double>) const override {
    return {0.0, 0.0};
  }

 private:
  double lambda_;
};

// One grounded bus so the algebraic block is nonsingular.
net::Network grounded_bus() {
  net::Network n;
  n.buses.push_back({1, net::BusKind::slack, 1.0, 0.0, 0.0, {1.0, 0.0}, 1.0});
  return n;
}

PreparedSystem prepare_wscc() {
  const auto loaded = io::load_network(kWscc);
  auto built = io::build_devices(loaded.device_specs);
  return prepare(loaded.network, std::move(built.devices));
}

}  // namespace

TEST_CASE("trapezoidal step reproduces the scalar amplification factor") {
  const double lambda = -3.0;
  std::vector<std::unique_ptr<dev::Device>> devices;
  devices.push_back(std::make_unique<DecayDevice>("d", 1, lambda));
  DaeSystem dae(grounded_bus(), std::move(devices));

  Eigen::VectorXd x(1), v(2);
  x << 1.0;
  v << 0.0, 0.0;
  const double dt = 0.05;
  NewtonOptions opts;
  opts.tol = 1e-14;
  step_trapezoidal(dae, x, v, dt, opts);
  const double expected = (1.0 + lambda * dt / 2.0) / (1.0 - lambda * dt / 2.0);
  CHECK(x(0) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("equilibrium is a fixed point of the step map") {
  auto ps = prepare_wscc();
  Eigen::VectorXd x = ps.x0, v = ps.v0;
  step_trapezoidal(*ps.dae, x, v, 1e-3);
  CHECK((x - ps.x0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((v - ps.v0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("assemble: consistent residual at the initialized point") {
  auto ps = prepare_wscc();
  Eigen::VectorXd res(ps.dae->n_alg());
  ps.dae->g(ps.x0, ps.v0, res);
  CHECK(res.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(ps.dae->n_states() == 27);
  CHECK(ps.dae->n_alg() == 18);
}

TEST_CASE("single classical machine against an infinite bus reduces to the swing equation") {
  net::Network n;
  n.buses.push_back({1, net::BusKind::slack, 1.0, 0.0, 0.0, {0.0, 0.0}, 230.0});
  n.buses.push_back({2, net::BusKind::pv, 1.02, 0.8, 0.0, {0.0, 0.0}, 230.0});
  n.branches.push_back({1, 2, 0.0, 0.2, 0.0, 1.0, true});

  dev::ClassicalSmParams cp;
  cp.h = 4.0;
  cp.d = 1.0;
  cp.x_total = 0.3;  // machine reactance; the line adds 0.2 outside
  std::vector<std::unique_ptr<dev::Device>> devices;
  devices.push_back(std::make_unique<dev::InfiniteBusDevice>("inf", 1, 1e8));
  auto machine = std::make_unique<dev::ClassicalSmDevice>("sm", 2, cp);
  dev::ClassicalSmDevice* sm = machine.get();
  devices.push_back(std::move(machine));
  auto ps = prepare(n, std::move(devices));

  // perturb the rotor and simulate
  Eigen::VectorXd x0 = ps.x0;
  const int off = ps.dae->device_offset(1);
  x0(off) += 0.05;
  solve_algebraic(*ps.dae, x0, ps.v0);
  Scenario sc;
  sc.dt = 1e-3;
  sc.dt_coarse = 1e-3;
  sc.horizon = 2.0;
  auto result = run(*ps.dae, x0, ps.v0, sc);
  REQUIRE(!result.failed);

  // along the trajectory, the DAE-produced derivatives equal the closed-form
  // swing equation against the fixed source behind x_total + x_line
  const std::complex<double> v_inf = ps.powerflow.v(0);
  dev::ClassicalSmParams eq = cp;
  eq.x_total = cp.x_total + 0.2;
  double max_dev = 0.0;
  for (std::size_t i = 0; i < result.t.size(); i += 50) {
    const double delta = result.x[i](off);
    const double omega = result.x[i](off + 1);
    Eigen::VectorXd dx(ps.dae->n_states());
    ps.dae->f(result.x[i], result.v[i], dx);
    auto [dd, dw] =
        dev::classical_sm_derivatives(eq, sm->e_prime(), sm->p_m(), delta, omega, v_inf);
    max_dev = std::max({max_dev, std::abs(dx(off) - dd), std::abs(dx(off + 1) - dw)});
  }
  CHECK(max_dev < 1e-6);
}

TEST_CASE("no-event run holds the equilibrium") {
  auto ps = prepare_wscc();
  Scenario sc;
  sc.horizon = 2.0;
  auto result = run(*ps.dae, ps.x0, ps.v0, sc);
  REQUIRE(!result.failed);
  double drift = 0.0;
  for (const auto& x : result.x) drift = std::max(drift, (x - ps.x0).cwiseAbs().maxCoeff());
  CHECK(drift < 1e-6);
}

TEST_CASE("zero-admittance fault is a bitwise no-op") {
  auto ps1 = prepare_wscc();
  Scenario plain;
  plain.horizon = 1.0;
  const auto base = run(*ps1.dae, ps1.x0, ps1.v0, plain);

  auto ps2 = prepare_wscc();
  Scenario ghost = plain;
  ghost.events.push_back({net::EventKind::apply_fault, 0.3, 5, {0.0, 0.0}, -1, -1});
  ghost.events.push_back({net::EventKind::clear_fault, 0.4, 5, {0.0, 0.0}, -1, -1});
  const auto with_ghost = run(*ps2.dae, ps2.x0, ps2.v0, ghost);

  REQUIRE(base.t.size() == with_ghost.t.size());
  for (std::size_t i = 0; i < base.t.size(); ++i) {
    CHECK((base.x[i] - with_ghost.x[i]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((base.v[i] - with_ghost.v[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("algebraic residual stays small across the fault scenario") {
  auto scenario = io::load_scenario(kFaultScn);
  scenario.horizon = 1.0;
  auto ps = prepare_wscc();
  auto result = run(*ps.dae, ps.x0, ps.v0, scenario);
  REQUIRE(!result.failed);
  // every accepted step, including through the fault window, against the
  // topology that was active at that step
  REQUIRE(result.g_residuals.size() == result.t.size());
  for (double r : result.g_residuals) CHECK(r < 1e-8);
}

TEST_CASE("step-halving self convergence is second order") {
  auto ps = prepare_wscc();
  Eigen::VectorXd x0 = ps.x0;
  x0(ps.dae->device_offset(1) + 1) += 0.002;  // kick sm2 rotor speed
  solve_algebraic(*ps.dae, x0, ps.v0);

  RunOptions opts;
  opts.newton.tol = 1e-12;
  auto final_state = [&](double dt) {
    auto ps_local = prepare_wscc();
    Scenario sc;
    sc.dt = dt;
    sc.dt_coarse = dt;
    sc.horizon = 1.0;
    auto r = run(*ps_local.dae, x0, ps.v0, sc, opts);
    REQUIRE(!r.failed);
    return r.x.back();
  };
  const auto xa = final_state(10e-3);
  const auto xb = final_state(5e-3);
  const auto xc = final_state(2.5e-3);
  const double ratio = (xa - xb).cwiseAbs().maxCoeff() / (xb - xc).cwiseAbs().maxCoeff();
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("library-level determinism: identical runs produce identical states") {
  auto scenario = io::load_scenario(kFaultScn);
  scenario.horizon = 0.5;
  auto ps1 = prepare_wscc();
  auto r1 = run(*ps1.dae, ps1.x0, ps1.v0, scenario);
  auto ps2 = prepare_wscc();
  auto r2 = run(*ps2.dae, ps2.x0, ps2.v0, scenario);
  REQUIRE(r1.t.size() == r2.t.size());
  for (std::size_t i = 0; i < r1.t.size(); ++i)
    CHECK((r1.x[i] - r2.x[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solver failure is reported with the failing timestamp") {
  auto scenario = io::load_scenario(kFaultScn);
  scenario.horizon = 1.0;
  auto ps = prepare_wscc();
  RunOptions opts;
  opts.newton.max_iter = 1;  // cannot converge through the discontinuity
  opts.max_dt_halvings = 1;
  auto result = run(*ps.dae, ps.x0, ps.v0, scenario, opts);
  CHECK(result.failed);
  CHECK(result.fail_time >= 0.0);
  CHECK(!result.fail_reason.empty());
  CHECK(result.t.size() > 1);  // partial trajectory retained
}

TEST_CASE("scenario validation") {
  Scenario sc;
  sc.horizon = 1.0;
  sc.events.push_back({net::EventKind::apply_fault, 1.5, 5, {1e4, 0.0}, -1, -1});
  CHECK_THROWS_AS(sc.validate(), ValidationError);
  sc.events.clear();
  sc.dt = 0.0;
  CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("off-grid event times snap with a warning") {
  auto ps = prepare_wscc();
  Scenario sc;
  sc.horizon = 0.5;
  sc.events.push_back({net::EventKind::apply_fault, 0.10037, 5, {1e4, 0.0}, -1, -1});
  sc.events.push_back({net::EventKind::clear_fault, 0.17, 5, {1e4, 0.0}, -1, -1});
  auto result = run(*ps.dae, ps.x0, ps.v0, sc);
  REQUIRE(!result.failed);
  bool snapped = false;
  for (const auto& w : result.warnings)
    if (w.find("snapped") != std::string::npos) snapped = true;
  CHECK(snapped);
}
