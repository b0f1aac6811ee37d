#include <doctest.h>

#include <cmath>
#include <cstring>

#include "psdyn/io.hpp"
#include "psdyn/network.hpp"

using namespace psdyn;
using namespace psdyn::net;

namespace {

const std::string kWscc = std::string(PSDYN_DATA_DIR) + "/wscc9.net";

Network two_bus(double load_p = 0.0, double load_q = 0.0) {
  Network n;
  n.buses.push_back({1, BusKind::slack, 1.0, 0.0, 0.0, {0.0, 0.0}, 230.0});
  n.buses.push_back({2, BusKind::pq, 1.0, -load_p, -load_q, {0.0, 0.0}, 230.0});
  n.branches.push_back({1, 2, 0.0, 0.1, 0.0, 1.0, true});
  return n;
}

// Element-by-element pi-model assembly, written independently of build_ybus.
YBus assemble_oracle(const Network& net) {
  const int n = static_cast<int>(net.buses.size());
  YBus y = YBus::Zero(n, n);
  for (int i = 0; i < n; ++i) y(i, i) += net.buses[i].shunt;
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    const int i = net.index_of(br.from);
    const int j = net.index_of(br.to);
    const std::complex<double> zs{br.r, br.x};
    const std::complex<double> ys = std::complex<double>(1.0, 0.0) / zs;
    y(i, i) += (ys + std::complex<double>(0.0, br.b_half)) / (br.tap * br.tap);
    y(j, j) += ys + std::complex<double>(0.0, br.b_half);
    y(i, j) += -ys / br.tap;
    y(j, i) += -ys / br.tap;
  }
  return y;
}

// Recomputed from scratch: per-bus complex power at the solved voltages.
std::complex<double> injected_power(const Network& net, const PowerFlowSolution& sol, int idx) {
  const YBus y = build_ybus(net);
  std::complex<double> i_sum{0.0, 0.0};
  for (int j = 0; j < y.cols(); ++j) i_sum += y(idx, j) * sol.v(j);
  return sol.v(idx) * std::conj(i_sum);
}

}  // namespace

TEST_CASE("ybus: hand-computed two-bus matrix") {
  const auto y = build_ybus(two_bus());
  CHECK(y(0, 0) == std::complex<double>(0.0, -10.0));
  CHECK(y(1, 1) == std::complex<double>(0.0, -10.0));
  CHECK(y(0, 1) == std::complex<double>(0.0, 10.0));
  CHECK(y(1, 0) == std::complex<double>(0.0, 10.0));
}

TEST_CASE("ybus: bundled nine-bus matches the independent assembly") {
  const auto loaded = io::load_network(kWscc);
  const auto y = build_ybus(loaded.network);
  const auto o = assemble_oracle(loaded.network);
  REQUIRE(y.rows() == 9);
  CHECK((y - o).cwiseAbs().maxCoeff() == 0.0);

  // off-diagonal coupling of line 4-5 is minus its series admittance
  const int i4 = loaded.network.index_of(4), i5 = loaded.network.index_of(5);
  const std::complex<double> ys = 1.0 / std::complex<double>(0.010, 0.085);
  CHECK(std::abs(y(i4, i5) + ys) < 1e-15);

  // reciprocity for a tap-1 network
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) CHECK(y(i, j) == y(j, i));
}

TEST_CASE("ybus: out-of-service branch contributes nothing") {
  auto n = two_bus();
  n.branches.push_back({1, 2, 0.05, 0.25, 0.01, 1.0, false});
  const auto y = build_ybus(n);
  const auto base = build_ybus(two_bus());
  CHECK((y - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ybus: disconnected bus raises SingularIsland") {
  Network n = two_bus();
  n.buses.push_back({3, BusKind::pq, 1.0, 0.0, 0.0, {0.0, 0.0}, 230.0});
  CHECK_THROWS_AS(build_ybus(n), SingularIsland);
}

TEST_CASE("network validation: exactly one slack, unique ids, nonzero x") {
  Network n = two_bus();
  n.buses[1].kind = BusKind::slack;
  CHECK_THROWS_AS(n.validate(), ValidationError);

  n = two_bus();
  n.buses[1].id = 1;
  CHECK_THROWS_AS(n.validate(), ValidationError);

  n = two_bus();
  n.branches[0].x = 0.0;
  CHECK_THROWS_AS(n.validate(), ValidationError);
}

TEST_CASE("power flow: no-load two-bus is flat") {
  const auto sol = solve_power_flow(two_bus());
  CHECK(sol.iterations == 0);
  CHECK(std::abs(sol.v(0) - 1.0) < 1e-12);
  CHECK(std::abs(sol.v(1) - 1.0) < 1e-12);
  CHECK(std::abs(sol.slack_p) < 1e-12);
}

TEST_CASE("power flow: bundled nine-bus converges and balances") {
  const auto loaded = io::load_network(kWscc);
  const auto sol = solve_power_flow(loaded.network, {1e-10, 20, 0.85});
  CHECK(sol.iterations <= 6);
  CHECK(sol.max_residual < 1e-8);
  CHECK(!sol.low_voltage);

  // independent mismatch evaluation at the solution
  double total_gen = 0.0, total_load = 0.0;
  for (std::size_t i = 0; i < loaded.network.buses.size(); ++i) {
    const auto& b = loaded.network.buses[i];
    const auto s = injected_power(loaded.network, sol, static_cast<int>(i));
    if (b.kind == BusKind::pq) {
      CHECK(std::abs(s.real() - b.p_inj) < 1e-8);
      CHECK(std::abs(s.imag() - b.q_inj) < 1e-8);
      total_load -= b.p_inj;
    } else if (b.kind == BusKind::pv) {
      CHECK(std::abs(s.real() - b.p_inj) < 1e-8);
      total_gen += s.real();
    } else {
      total_gen += s.real();
    }
  }
  const double losses = total_gen - total_load;
  CHECK(losses > 0.0);
  CHECK(losses < 0.1);
}

TEST_CASE("power flow: tenfold load collapses or flags low voltage") {
  auto loaded = io::load_network(kWscc);
  Network heavy = loaded.network;
  for (auto& b : heavy.buses) {
    if (b.kind == BusKind::pq) {
      b.p_inj *= 10.0;
      b.q_inj *= 10.0;
    }
  }
  bool collapsed = false, low_voltage = false;
  try {
    low_voltage = solve_power_flow(heavy, {1e-8, 20, 0.85}).low_voltage;
  } catch (const NumericalError&) {
    collapsed = true;
  }
  CHECK((collapsed || low_voltage));

  // continuation oracle: walk the loading up from nominal and record the last
  // scaling that still yields a healthy solution
  double last_healthy = 0.0;
  for (double scale = 1.0; scale <= 10.01; scale += 0.5) {
    Network stepped = loaded.network;
    for (auto& b : stepped.buses) {
      if (b.kind == BusKind::pq) {
        b.p_inj *= scale;
        b.q_inj *= scale;
      }
    }
    try {
      const auto s = solve_power_flow(stepped, {1e-8, 25, 0.85});
      if (!s.low_voltage) last_healthy = scale;
    } catch (const NumericalError&) {
      break;
    }
  }
  CHECK(last_healthy < 10.0);
}

TEST_CASE("loads to admittance: formula and fidelity") {
  // p=1, q=0 at |v|=1 gives a unit conductance
  {
    Network n = two_bus(1.0, 0.0);
    PowerFlowSolution fake;
    fake.v.resize(2);
    fake.v << 1.0, 1.0;
    const auto out = loads_to_admittance(n, fake);
    CHECK(out.buses[1].shunt == std::complex<double>(1.0, 0.0));
    CHECK(out.buses[1].p_inj == 0.0);
  }
  // p=0.9, q=0.3 at 0.975: shunt consumes exactly the original load
  {
    Network n = two_bus(0.9, 0.3);
    PowerFlowSolution fake;
    fake.v.resize(2);
    fake.v << 1.0, std::polar(0.975, -0.1);
    const auto out = loads_to_admittance(n, fake);
    const std::complex<double> y = out.buses[1].shunt;
    CHECK(std::abs(y - std::complex<double>(0.9, -0.3) / (0.975 * 0.975)) < 1e-15);
    const std::complex<double> s = std::norm(fake.v(1)) * std::conj(y);
    CHECK(std::abs(s - std::complex<double>(0.9, 0.3)) < 1e-12);
  }
  // zero load stays zero
  {
    Network n = two_bus(0.0, 0.0);
    PowerFlowSolution fake;
    fake.v.resize(2);
    fake.v << 1.0, 1.0;
    CHECK(loads_to_admittance(n, fake).buses[1].shunt == std::complex<double>(0.0, 0.0));
  }
}

TEST_CASE("loads to admittance: reruns to the same voltage profile") {
  const auto loaded = io::load_network(kWscc);
  const auto sol = solve_power_flow(loaded.network, {1e-10, 20, 0.85});
  const auto converted = loads_to_admittance(loaded.network, sol);
  const auto sol2 = solve_power_flow(converted, {1e-10, 20, 0.85});
  double max_dev = 0.0;
  for (int i = 0; i < sol.v.size(); ++i) max_dev = std::max(max_dev, std::abs(sol.v(i) - sol2.v(i)));
  CHECK(max_dev < 1e-8);
}

TEST_CASE("loads to admittance: near-zero voltage is rejected") {
  Network n = two_bus(1.0, 0.0);
  PowerFlowSolution fake;
  fake.v.resize(2);
  fake.v << 1.0, 1e-9;
  CHECK_THROWS_AS(loads_to_admittance(n, fake), ZeroVoltage);
}

TEST_CASE("events: apply then clear restores the exact bit pattern") {
  const auto loaded = io::load_network(kWscc);
  TopologyState topo(loaded.network);
  const YBus before = topo.ybus();

  Event fault{EventKind::apply_fault, 0.1, 5, {1e4, 0.0}, -1, -1};
  topo.apply(fault);
  const int i5 = loaded.network.index_of(5);
  CHECK(topo.ybus()(i5, i5) == before(i5, i5) + std::complex<double>(1e4, 0.0));

  Event clear = fault;
  clear.kind = EventKind::clear_fault;
  topo.apply(clear);
  CHECK(std::memcmp(before.data(), topo.ybus().data(),
                    sizeof(std::complex<double>) * static_cast<std::size_t>(before.size())) == 0);
}

TEST_CASE("events: tripping removes the off-diagonal coupling") {
  const auto loaded = io::load_network(kWscc);
  TopologyState topo(loaded.network);
  Event trip;
  trip.kind = EventKind::trip_line;
  trip.from = 5;
  trip.to = 7;
  topo.apply(trip);
  const int i5 = loaded.network.index_of(5), i7 = loaded.network.index_of(7);
  CHECK(topo.ybus()(i5, i7) == std::complex<double>(0.0, 0.0));
  CHECK(topo.ybus()(i7, i5) == std::complex<double>(0.0, 0.0));
}

TEST_CASE("events: unknown targets are rejected") {
  const auto loaded = io::load_network(kWscc);
  TopologyState topo(loaded.network);
  Event fault{EventKind::apply_fault, 0.1, 99, {1e4, 0.0}, -1, -1};
  CHECK_THROWS_AS(topo.apply(fault), UnknownBus);
  Event trip;
  trip.kind = EventKind::trip_line;
  trip.from = 1;
  trip.to = 9;
  CHECK_THROWS_AS(topo.apply(trip), UnknownBranch);
}
