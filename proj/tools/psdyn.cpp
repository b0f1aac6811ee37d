#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "psdyn/analysis.hpp"
#include "psdyn/io.hpp"
#include "psdyn/network.hpp"
#include "psdyn/oscillator.hpp"
#include "psdyn/simulation.hpp"

namespace {

namespace fs = std::filesystem;
using psdyn::io::format_double;

std::string default_out_dir() {
  if (const char* env = std::getenv("PSDYN_OUT_DIR")) return env;
  return ".";
}

fs::path ensure_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw psdyn::IoError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

struct PowerflowArgs {
  std::string net_path;
  std::string out_dir = default_out_dir();
  double tol = 1e-8;
  int max_iter = 20;
};

int cmd_powerflow(const PowerflowArgs& a) {
  const auto loaded = psdyn::io::load_network(a.net_path);
  const auto sol = psdyn::net::solve_power_flow(loaded.network, {a.tol, a.max_iter});
  const fs::path out = ensure_out_dir(a.out_dir);
  psdyn::io::write_powerflow_csv(loaded.network, sol, (out / "powerflow.csv").string());
  std::cout << "power flow converged in " << sol.iterations
            << " iterations, max residual = " << format_double(sol.max_residual) << "\n";
  if (sol.low_voltage) std::cout << "warning: low-voltage solution (|v| below threshold)\n";
  std::cout << "wrote " << (out / "powerflow.csv").string() << "\n";
  return 0;
}

struct OscCompareArgs {
  std::string out_dir = default_out_dir();
  double k = 10.0;
  double step = 0.1;
  double horizon = 20.0;
  double dt = 1e-3;
  std::string preset_override;
  double c_override = -1.0;
  double d_override = -1.0;
};

int cmd_oscillator_compare(const OscCompareArgs& a) {
  if (!(a.horizon > 0.0)) throw psdyn::ValidationError("--horizon must be > 0");
  if (!(a.dt > 0.0)) throw psdyn::ValidationError("--dt must be > 0");
  if (!(a.k > 0.0)) throw psdyn::ValidationError("--k must be > 0");

  const psdyn::osc::Preset presets[] = {psdyn::osc::Preset::sm, psdyn::osc::Preset::vsm,
                                        psdyn::osc::Preset::pll};
  std::vector<psdyn::osc::OscillatorParams> params;
  std::vector<psdyn::osc::StepResponse> traces;
  std::vector<psdyn::osc::OscillatorMetrics> mets;
  for (const auto p : presets) {
    auto prm = psdyn::osc::preset_params(p, a.k);
    if (a.preset_override == psdyn::osc::to_string(p)) {
      if (a.c_override > 0.0) prm.c = a.c_override;
      if (a.d_override >= 0.0) prm.d = a.d_override;
    }
    params.push_back(prm);
    traces.push_back(psdyn::osc::step_response(prm, a.step, a.horizon, a.dt));
    mets.push_back(psdyn::osc::metrics(psdyn::osc::linearize(prm, psdyn::osc::equilibrium(prm))));
  }

  const fs::path out = ensure_out_dir(a.out_dir);

  std::string csv = "time";
  for (const auto p : presets) {
    csv += std::string(",") + psdyn::osc::to_string(p) + "_y";
    csv += std::string(",") + psdyn::osc::to_string(p) + "_ydot";
  }
  csv += "\n";
  for (std::size_t i = 0; i < traces[0].t.size(); ++i) {
    csv += format_double(traces[0].t[i]);
    for (std::size_t j = 0; j < 3; ++j)
      csv += "," + format_double(traces[j].y[i]) + "," + format_double(traces[j].ydot[i]);
    csv += "\n";
  }
  psdyn::io::write_text_file((out / "oscillator_compare.csv").string(), csv);

  std::string met = "preset,c,d,k,lambda1_re,lambda1_im,lambda2_re,lambda2_im,damping_class,"
                    "damping_ratio,natural_frequency_hz,energy_dissipation_ratio,"
                    "settling_time_2pct\n";
  for (std::size_t j = 0; j < 3; ++j) {
    met += std::string(psdyn::osc::to_string(presets[j])) + "," + format_double(params[j].c) +
           "," + format_double(params[j].d) + "," + format_double(a.k) + "," +
           format_double(mets[j].lambda1.real()) + "," + format_double(mets[j].lambda1.imag()) +
           "," + format_double(mets[j].lambda2.real()) + "," +
           format_double(mets[j].lambda2.imag()) + "," +
           psdyn::osc::to_string(mets[j].damping_class) + "," +
           format_double(mets[j].damping_ratio) + "," +
           format_double(mets[j].natural_frequency_hz) + "," +
           format_double(mets[j].energy_dissipation_ratio) + "," +
           format_double(mets[j].settling_time_2pct) + "\n";
  }
  psdyn::io::write_text_file((out / "oscillator_metrics.csv").string(), met);

  std::printf("%-8s %-8s %-8s %-10s %-12s %-14s\n", "preset", "c", "d", "dE/dPl", "class",
              "settling_2pct_s");
  for (std::size_t j = 0; j < 3; ++j) {
    std::printf("%-8s %-8g %-8g %-10.3g %-12s %-14.3g\n", psdyn::osc::to_string(presets[j]),
                params[j].c, params[j].d, mets[j].energy_dissipation_ratio,
                psdyn::osc::to_string(mets[j].damping_class), mets[j].settling_time_2pct);
  }
  std::cout << "wrote " << (out / "oscillator_compare.csv").string() << " and "
            << (out / "oscillator_metrics.csv").string() << "\n";
  return 0;
}

struct SimulateArgs {
  std::string scenario_path;
  std::string out_dir = default_out_dir();
  double dt = -1.0;
  double horizon = -1.0;
  double fault_y = -1.0;
  double newton_tol = 1e-9;
  double pf_tol = 1e-10;
  int max_newton_iter = 50;
};

int cmd_simulate(const SimulateArgs& a) {
  auto scenario = psdyn::io::load_scenario(a.scenario_path);
  if (a.dt > 0.0) {
    scenario.dt = a.dt;
    scenario.dt_coarse = a.dt;
  }
  if (a.horizon > 0.0) scenario.horizon = a.horizon;
  if (a.fault_y > 0.0) {
    for (auto& ev : scenario.events)
      if (ev.kind != psdyn::net::EventKind::trip_line) ev.admittance = {a.fault_y, 0.0};
  }
  scenario.validate();

  const auto loaded = psdyn::io::load_network(scenario.network_path);
  auto built = psdyn::io::build_devices(loaded.device_specs);
  auto ps = psdyn::sim::prepare(loaded.network, std::move(built.devices),
                                {.tol = a.pf_tol, .max_iter = 20});

  psdyn::sim::RunOptions ropts;
  ropts.newton.tol = a.newton_tol;
  ropts.newton.max_iter = a.max_newton_iter;
  auto result = psdyn::sim::run(*ps.dae, ps.x0, ps.v0, scenario, ropts);

  const fs::path out = ensure_out_dir(a.out_dir);
  const auto channels =
      scenario.channels.empty() ? psdyn::io::default_channels(*ps.dae) : scenario.channels;
  psdyn::io::write_timeseries_csv(*ps.dae, result, channels, (out / "simulation.csv").string());

  std::ostringstream log;
  log << "psdyn simulate run log\n";
  log << "scenario = " << a.scenario_path << "\n";
  log << "network = " << scenario.network_path << "\n";
  log << "dt = " << format_double(scenario.dt) << "\n";
  log << "dt_coarse = " << format_double(scenario.dt_coarse) << "\n";
  log << "dt_switch = " << format_double(scenario.dt_switch) << "\n";
  log << "horizon = " << format_double(scenario.horizon) << "\n";
  log << "newton_tol = " << format_double(a.newton_tol) << "\n";
  log << "powerflow_tol = " << format_double(a.pf_tol) << "\n";
  log << "events:\n";
  for (const auto& ev : scenario.events) {
    switch (ev.kind) {
      case psdyn::net::EventKind::apply_fault:
        log << "  apply_fault bus=" << ev.bus << " t=" << format_double(ev.time)
            << " y=" << format_double(ev.admittance.real()) << "\n";
        break;
      case psdyn::net::EventKind::clear_fault:
        log << "  clear_fault bus=" << ev.bus << " t=" << format_double(ev.time) << "\n";
        break;
      case psdyn::net::EventKind::trip_line:
        log << "  trip_line " << ev.from << "-" << ev.to << " t=" << format_double(ev.time)
            << "\n";
        break;
    }
  }
  log << "defaulted device parameters:\n";
  for (const auto& d : built.defaulted) log << "  " << d << "\n";
  log << "power flow: " << ps.powerflow.iterations
      << " iterations, max residual = " << format_double(ps.powerflow.max_residual) << "\n";
  log << "states = " << ps.dae->n_states() << ", algebraic = " << ps.dae->n_alg() << "\n";
  log << "steps = " << (result.t.size() - 1) << "\n";
  long total_iters = 0;
  int max_iters = 0;
  for (int it : result.newton_iters) {
    total_iters += it;
    max_iters = std::max(max_iters, it);
  }
  log << "newton iterations: total = " << total_iters << ", max per step = " << max_iters << "\n";
  for (const auto& w : result.warnings) log << "warning: " << w << "\n";
  log << "channels =";
  for (const auto& c : channels) log << " " << c;
  log << "\n";
  if (result.failed) {
    log << "status = FAILED at t=" << format_double(result.fail_time) << ": " << result.fail_reason
        << "\n";
  } else {
    log << "status = OK\n";
  }
  psdyn::io::write_text_file((out / "run.log").string(), log.str());

  std::cout << "wrote " << (out / "simulation.csv").string() << " and "
            << (out / "run.log").string() << "\n";
  if (result.failed) {
    std::cerr << "solver failed at t=" << format_double(result.fail_time) << ": "
              << result.fail_reason << " (partial results kept)\n";
    return 2;
  }
  return 0;
}

struct SmallSignalArgs {
  std::string net_path;
  std::string out_dir = default_out_dir();
  double h = 1e-6;
  double pf_tol = 1e-10;
  bool check_emulation = false;
  double overload = 1.2;
};

int cmd_smallsignal(const SmallSignalArgs& a) {
  const auto loaded = psdyn::io::load_network(a.net_path);
  auto built = psdyn::io::build_devices(loaded.device_specs);
  auto ps = psdyn::sim::prepare(loaded.network, std::move(built.devices),
                                {.tol = a.pf_tol, .max_iter = 20});

  const auto sm = psdyn::an::linearize_system(*ps.dae, ps.x0, ps.v0, a.h);
  const auto modes = psdyn::an::eigen_analysis(sm);
  const auto em = psdyn::an::electromechanical_modes(modes, sm.labels);

  const fs::path out = ensure_out_dir(a.out_dir);
  psdyn::io::write_modes_csv(modes, sm.labels, (out / "modes.csv").string());

  std::ostringstream rep;
  rep << "small-signal analysis: " << sm.a.rows() << " states, " << modes.size()
      << " eigenvalues\n";
  rep << "electromechanical modes (rotor-dominated, 0.1-3 Hz): " << em.size() << "\n";
  for (const auto idx : em) {
    const auto& m = modes[idx];
    rep << "  lambda = " << format_double(m.eigenvalue.real()) << " + j"
        << format_double(m.eigenvalue.imag()) << ", f = " << format_double(m.frequency_hz)
        << " Hz, zeta = " << format_double(100.0 * m.damping_ratio) << " %\n";
    std::vector<long> order(static_cast<std::size_t>(m.participation.size()));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<long>(j);
    std::sort(order.begin(), order.end(),
              [&](long x, long y) { return m.participation(x) > m.participation(y); });
    rep << "  participation:\n";
    for (std::size_t j = 0; j < std::min<std::size_t>(8, order.size()); ++j)
      rep << "    " << sm.labels[static_cast<std::size_t>(order[j])] << " = "
          << format_double(m.participation(order[j])) << "\n";
  }

  if (a.check_emulation) {
    if (em.empty())
      throw psdyn::NumericalError("--check-emulation: no electromechanical mode found");
    psdyn::an::DeviceCharacterization ch;
    ch.name = "system electromechanical mode";
    ch.dominant_lambda = modes[em.front()].eigenvalue;
    ch.overload_ratio = a.overload;
    const auto er = psdyn::an::emulation_report(ch);
    rep << "\n" << psdyn::io::emulation_report_text(er);
    rep << "\n" << psdyn::io::emulation_report_structured(er);
  }

  psdyn::io::write_text_file((out / "smallsignal.txt").string(), rep.str());
  std::cout << rep.str();
  std::cout << "wrote " << (out / "modes.csv").string() << " and "
            << (out / "smallsignal.txt").string() << "\n";
  return 0;
}

struct CheckEmulationArgs {
  std::string out_dir = default_out_dir();
  std::string preset;
  double c = -1.0, d = -1.0, k = 10.0;
  double overload = -1.0;
  int energy_available = -1;  // -1 unset, 0 false, 1 true
  psdyn::an::EmulationThresholds thresholds;
};

int cmd_check_emulation(const CheckEmulationArgs& a) {
  psdyn::an::DeviceCharacterization ch;
  if (!a.preset.empty()) {
    ch = psdyn::an::preset_characterization(a.preset, a.k);
  } else {
    ch.name = "custom";
    if (a.c > 0.0) ch.c = a.c;
    if (a.d >= 0.0) ch.d = a.d;
    if (a.k > 0.0) ch.k = a.k;
  }
  if (a.overload > 0.0) ch.overload_ratio = a.overload;
  if (a.energy_available >= 0) ch.energy_available = (a.energy_available != 0);

  const auto rep = psdyn::an::emulation_report(ch, a.thresholds);
  std::cout << psdyn::io::emulation_report_text(rep);
  const fs::path out = ensure_out_dir(a.out_dir);
  psdyn::io::write_text_file((out / "emulation.txt").string(),
                             psdyn::io::emulation_report_structured(rep));
  std::cout << "wrote " << (out / "emulation.txt").string() << "\n";
  return rep.sm_equivalent ? 0 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psdyn - power system dynamics toolkit: power flow, time-domain DAE simulation, "
               "small-signal analysis, and second-order oscillator comparison"};
  app.require_subcommand(1);

  PowerflowArgs pf;
  auto* pf_cmd = app.add_subcommand("powerflow", "Newton-Raphson power flow from a network file");
  pf_cmd->add_option("--net", pf.net_path, "network file")->required();
  pf_cmd->add_option("--out", pf.out_dir, "output directory");
  pf_cmd->add_option("--tol", pf.tol, "convergence tolerance on |dP|,|dQ|");
  pf_cmd->add_option("--max-iter", pf.max_iter, "iteration limit");

  OscCompareArgs oc;
  auto* oc_cmd = app.add_subcommand(
      "oscillator-compare", "step responses and energy/dissipation metrics of the SM/VSM/PLL "
                            "second-order presets");
  oc_cmd->add_option("--out", oc.out_dir, "output directory");
  oc_cmd->add_option("--k", oc.k, "restoring coefficient shared by the presets");
  oc_cmd->add_option("--step", oc.step, "power mismatch magnitude");
  oc_cmd->add_option("--horizon", oc.horizon, "simulated horizon, s");
  oc_cmd->add_option("--dt", oc.dt, "integration step, s");
  oc_cmd->add_option("--preset", oc.preset_override, "preset to override (sm|vsm|pll)");
  oc_cmd->add_option("--c", oc.c_override, "override c of the selected preset");
  oc_cmd->add_option("--d", oc.d_override, "override d of the selected preset");

  SimulateArgs si;
  auto* si_cmd = app.add_subcommand("simulate", "time-domain DAE simulation of a scenario");
  si_cmd->add_option("--scenario", si.scenario_path, "scenario file")->required();
  si_cmd->add_option("--out", si.out_dir, "output directory");
  si_cmd->add_option("--dt", si.dt, "override: single fixed step, s");
  si_cmd->add_option("--horizon", si.horizon, "override horizon, s");
  si_cmd->add_option("--fault-y", si.fault_y, "override fault shunt admittance, pu");
  si_cmd->add_option("--newton-tol", si.newton_tol, "Newton update tolerance");
  si_cmd->add_option("--max-newton-iter", si.max_newton_iter, "Newton iteration limit per step");
  si_cmd->add_option("--tol", si.pf_tol, "power flow tolerance for initialization");

  SmallSignalArgs ss;
  auto* ss_cmd =
      app.add_subcommand("smallsignal", "eigenvalues and participation factors at the operating "
                                        "point of a network file");
  ss_cmd->add_option("--net", ss.net_path, "network file")->required();
  ss_cmd->add_option("--out", ss.out_dir, "output directory");
  ss_cmd->add_option("--fd-step", ss.h, "finite-difference perturbation scale");
  ss_cmd->add_option("--tol", ss.pf_tol, "power flow tolerance for initialization");
  ss_cmd->add_flag("--check-emulation", ss.check_emulation,
                   "append an SM-emulation report for the dominant electromechanical mode");
  ss_cmd->add_option("--overload", ss.overload,
                     "overload capability ratio used by --check-emulation");

  CheckEmulationArgs ce;
  auto* ce_cmd = app.add_subcommand("check-emulation",
                                    "evaluate the SM-emulation conditions for a device");
  ce_cmd->add_option("--out", ce.out_dir, "output directory");
  ce_cmd->add_option("--preset", ce.preset, "device preset (sm|droop|vsm|pll)");
  ce_cmd->add_option("--c", ce.c, "inertia coefficient");
  ce_cmd->add_option("--d", ce.d, "damping coefficient");
  ce_cmd->add_option("--k", ce.k, "restoring coefficient");
  ce_cmd->add_option("--overload", ce.overload, "overload capability ratio");
  ce_cmd->add_option("--energy-available", ce.energy_available,
                     "declared fast-storage availability (0|1)");
  ce_cmd->add_option("--energy-min", ce.thresholds.energy_min, "dE/dPl threshold, s");
  ce_cmd->add_option("--damping-max", ce.thresholds.damping_max, "max damping ratio");
  ce_cmd->add_option("--overload-min", ce.thresholds.overload_min, "min overload ratio");
  ce_cmd->add_option("--time-band-lo", ce.thresholds.time_band_lo, "time-scale band low, s");
  ce_cmd->add_option("--time-band-hi", ce.thresholds.time_band_hi, "time-scale band high, s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*pf_cmd) return cmd_powerflow(pf);
    if (*oc_cmd) return cmd_oscillator_compare(oc);
    if (*si_cmd) return cmd_simulate(si);
    if (*ss_cmd) return cmd_smallsignal(ss);
    if (*ce_cmd) return cmd_check_emulation(ce);
  } catch (const psdyn::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const psdyn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const psdyn::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
