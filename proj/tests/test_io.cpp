#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "psdyn/io.hpp"

using namespace psdyn;
using namespace psdyn::io;

namespace {

const std::string kWscc = std::string(PSDYN_DATA_DIR) + "/wscc9.net";
const std::string kFaultScn = std::string(PSDYN_DATA_DIR) + "/fault_bus5.scn";

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("load_network: bundled case parses completely") {
  const auto loaded = load_network(kWscc);
  CHECK(loaded.network.buses.size() == 9);
  CHECK(loaded.network.branches.size() == 9);
  CHECK(loaded.device_specs.size() == 3);
  CHECK(loaded.base_mva == 100.0);
  CHECK(loaded.network.buses[0].kind == net::BusKind::slack);
  CHECK(loaded.network.buses[4].p_inj == -1.25);
  CHECK(loaded.device_specs[2].type == "cig");
  CHECK(loaded.device_specs[2].bus == 3);
}

TEST_CASE("load_network: missing slack names the violated rule") {
  const auto path = write_temp("noslack.net",
                               "[buses]\n"
                               "1 pq 1.0 0 0 0 0 230\n"
                               "2 pq 1.0 0 0 0 0 230\n"
                               "[branches]\n"
                               "1 2 0.0 0.1 0 1.0\n");
  try {
    load_network(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("slack") != std::string::npos);
  }
}

TEST_CASE("load_network: malformed numbers carry the line number") {
  const auto path = write_temp("badnum.net",
                               "[buses]\n"
                               "1 slack 1.0 0 0 0 0 230\n"
                               "2 pq oops 0 0 0 0 230\n");
  try {
    load_network(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("load_network: unknown device parameter is rejected") {
  const auto path = write_temp("baddev.net",
                               "[buses]\n"
                               "1 slack 1.0 0 0 0 0 230\n"
                               "2 pv 1.0 0.5 0 0 0 230\n"
                               "[branches]\n"
                               "1 2 0.0 0.1 0 1.0\n"
                               "[devices]\n"
                               "g classical_sm bus=2 h=4 frobnicate=1\n");
  const auto loaded = load_network(path);
  CHECK_THROWS_AS(build_devices(loaded.device_specs), ParseError);
}

TEST_CASE("load_network: missing file is an io error") {
  CHECK_THROWS_AS(load_network("/nonexistent/net.file"), IoError);
}

TEST_CASE("load_scenario: bundled fault case") {
  const auto sc = load_scenario(kFaultScn);
  CHECK(std::filesystem::path(sc.network_path).filename() == "wscc9.net");
  CHECK(std::filesystem::exists(sc.network_path));  // resolved against the scenario dir
  CHECK(sc.horizon == 10.0);
  REQUIRE(sc.events.size() == 3);
  CHECK(sc.events[0].kind == net::EventKind::apply_fault);
  CHECK(sc.events[0].time == 0.1);
  CHECK(sc.events[0].admittance.real() == 1e4);
  CHECK(sc.events[1].kind == net::EventKind::clear_fault);
  CHECK(sc.events[1].time == doctest::Approx(0.17));
  CHECK(sc.events[2].kind == net::EventKind::trip_line);
  CHECK(sc.events[2].from == 5);
  CHECK(sc.events[2].to == 7);
  CHECK(sc.channels.size() == 6);
}

TEST_CASE("load_scenario: explicit dt without dt_coarse means a single fixed step") {
  const auto path = write_temp("fix.scn",
                               "network " + kWscc + "\n" +
                               "dt 0.002\nhorizon 1\n");
  const auto sc = load_scenario(path);
  CHECK(sc.dt == 0.002);
  CHECK(sc.dt_coarse == 0.002);
}

TEST_CASE("load_scenario: unknown keyword is rejected with its line") {
  const auto path = write_temp("badkw.scn", "network x.net\nwibble 3\n");
  try {
    load_scenario(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("build_devices: defaulted parameters are recorded for the run log") {
  DeviceSpec spec;
  spec.name = "g";
  spec.type = "classical_sm";
  spec.bus = 1;
  spec.params = {{"h", 4.0}};  // d and x defaulted
  auto built = build_devices({spec});
  REQUIRE(built.devices.size() == 1);
  CHECK(built.defaulted.size() == 2);
  bool mentions_x = false;
  for (const auto& line : built.defaulted)
    if (line.find("x defaulted") != std::string::npos) mentions_x = true;
  CHECK(mentions_x);
}

TEST_CASE("csv writers are deterministic byte-for-byte") {
  const auto loaded = load_network(kWscc);
  const auto sol = net::solve_power_flow(loaded.network);
  const auto p1 = (std::filesystem::temp_directory_path() / "pf_a.csv").string();
  const auto p2 = (std::filesystem::temp_directory_path() / "pf_b.csv").string();
  write_powerflow_csv(loaded.network, sol, p1);
  write_powerflow_csv(loaded.network, sol, p2);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(slurp(p1).rfind("bus,v_pu,theta_deg,p,q\n", 0) == 0);
  // nine data rows
  int rows = -1;
  for (char c : slurp(p1))
    if (c == '\n') ++rows;
  CHECK(rows == 9);
}

TEST_CASE("channel_value: devices, buses, and failure paths") {
  const auto loaded = load_network(kWscc);
  auto built = build_devices(loaded.device_specs);
  auto ps = sim::prepare(loaded.network, std::move(built.devices));
  sim::Scenario sc;
  sc.horizon = 0.01;
  auto result = sim::run(*ps.dae, ps.x0, ps.v0, sc);

  CHECK(channel_value(*ps.dae, result, 0, "sm1.omega") == 0.0);
  CHECK(channel_value(*ps.dae, result, 0, "v5") == doctest::Approx(std::abs(ps.powerflow.v(4))));
  CHECK(channel_value(*ps.dae, result, 0, "th5") == doctest::Approx(std::arg(ps.powerflow.v(4))));
  CHECK_THROWS_AS(channel_value(*ps.dae, result, 0, "nosuch.channel"), ValidationError);
  CHECK_THROWS_AS(channel_value(*ps.dae, result, 0, "bogus"), ValidationError);

  const auto defaults = default_channels(*ps.dae);
  REQUIRE(defaults.size() == 7);
  CHECK(defaults[0] == "sm1.omega");
  CHECK(defaults[2] == "cig3.freq_est");
  CHECK(defaults[4] == "sm1.id");
  CHECK(defaults[6] == "cig3.id");
}

TEST_CASE("emulation report rendering carries thresholds and verdicts") {
  const auto rep = an::emulation_report(an::preset_characterization("vsm"));
  const auto text = emulation_report_text(rep);
  CHECK(text.find("does NOT replicate") != std::string::npos);
  const auto structured = emulation_report_structured(rep);
  CHECK(structured.find("thresholds.energy_min = 0.1") != std::string::npos);
  CHECK(structured.find("energy.verdict = pass") != std::string::npos);
  CHECK(structured.find("damping.verdict = fail") != std::string::npos);
  CHECK(structured.find("overall = not-sm-equivalent") != std::string::npos);
}
