#pragma once

#include <map>
#include <string>
#include <vector>

#include "psdyn/analysis.hpp"
#include "psdyn/devices.hpp"
#include "psdyn/network.hpp"
#include "psdyn/simulation.hpp"

namespace psdyn::io {

// One [devices] entry from a network file: "name type key=value ...".
struct DeviceSpec {
  std::string name;
  std::string type;  // classical_sm | detailed_sm | cig | infinite_bus
  int bus = 0;
  std::map<std::string, double> params;
  int line = 0;
};

struct LoadedCase {
  net::Network network;
  std::vector<DeviceSpec> device_specs;
  double base_mva = 100.0;
};

// Structured-text network file with [buses], [branches], [devices] sections.
// Per-unit on the declared system base, angles in degrees in files.
LoadedCase load_network(const std::string& path);

// Scenario file: network reference, step schedule, horizon, timed events,
// output channel selection. The network path is resolved relative to the
// scenario file's directory.
sim::Scenario load_scenario(const std::string& path);

struct BuiltDevices {
  std::vector<std::unique_ptr<dev::Device>> devices;
  std::vector<std::string> defaulted;  // "name: key defaulted to value" lines for the run log
};

BuiltDevices build_devices(const std::vector<DeviceSpec>& specs);

std::string format_double(double v);

void write_powerflow_csv(const net::Network& net, const net::PowerFlowSolution& sol,
                         const std::string& path);

// Channel ids: "<device>.<output>" (see Device::output_names), "vN" for the
// voltage magnitude at bus N, "thN" for its angle in radians.
double channel_value(const sim::DaeSystem& dae, const sim::SimulationResult& result,
                     std::size_t row, const std::string& channel);

std::vector<std::string> default_channels(const sim::DaeSystem& dae);

void write_timeseries_csv(const sim::DaeSystem& dae, const sim::SimulationResult& result,
                          const std::vector<std::string>& channels, const std::string& path);

void write_modes_csv(const std::vector<an::ModeReport>& modes,
                     const std::vector<std::string>& labels, const std::string& path);

std::string emulation_report_text(const an::EmulationReport& rep);
std::string emulation_report_structured(const an::EmulationReport& rep);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace psdyn::io
