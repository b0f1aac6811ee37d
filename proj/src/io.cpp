#include "psdyn/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace psdyn::io {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    if (tok[0] == '#') break;
    tokens.push_back(tok);
  }
  return tokens;
}

double parse_number(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line) + ": expected a number, got '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line) + ": expected an integer, got '" + s +
                     "'");
  }
}

// "key=value" -> pair; throws otherwise.
std::pair<std::string, std::string> split_kv(const std::string& tok, const std::string& path,
                                             int line) {
  const auto eq = tok.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
    throw ParseError(path + ":" + std::to_string(line) + ": expected key=value, got '" + tok +
                     "'");
  return {tok.substr(0, eq), tok.substr(eq + 1)};
}

net::BusKind parse_bus_kind(const std::string& s, const std::string& path, int line) {
  if (s == "slack") return net::BusKind::slack;
  if (s == "pv") return net::BusKind::pv;
  if (s == "pq") return net::BusKind::pq;
  throw ParseError(path + ":" + std::to_string(line) + ": unknown bus kind '" + s +
                   "' (want slack|pv|pq)");
}

}  // namespace

LoadedCase load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open network file '" + path + "'");

  LoadedCase out;
  std::string section;
  std::string line;
  int lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;

    if (tokens[0].front() == '[') {
      section = tokens[0];
      continue;
    }
    if (section.empty()) {
      if (tokens[0] == "base_mva" && tokens.size() == 2) {
        out.base_mva = parse_number(tokens[1], path, lineno);
        continue;
      }
      throw ParseError(path + ":" + std::to_string(lineno) + ": content before any section");
    }

    if (section == "[buses]") {
      if (tokens.size() != 8)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": bus row needs 8 fields: id kind v_set p_inj q_inj g_shunt b_shunt "
                         "base_kv");
      net::Bus b;
      b.id = parse_int(tokens[0], path, lineno);
      b.kind = parse_bus_kind(tokens[1], path, lineno);
      b.v_set = parse_number(tokens[2], path, lineno);
      b.p_inj = parse_number(tokens[3], path, lineno);
      b.q_inj = parse_number(tokens[4], path, lineno);
      b.shunt = {parse_number(tokens[5], path, lineno), parse_number(tokens[6], path, lineno)};
      b.base_kv = parse_number(tokens[7], path, lineno);
      out.network.buses.push_back(b);
    } else if (section == "[branches]") {
      if (tokens.size() != 6)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": branch row needs 6 fields: from to r x b_half tap");
      net::Branch br;
      br.from = parse_int(tokens[0], path, lineno);
      br.to = parse_int(tokens[1], path, lineno);
      br.r = parse_number(tokens[2], path, lineno);
      br.x = parse_number(tokens[3], path, lineno);
      br.b_half = parse_number(tokens[4], path, lineno);
      br.tap = parse_number(tokens[5], path, lineno);
      out.network.branches.push_back(br);
    } else if (section == "[devices]") {
      if (tokens.size() < 3)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": device row needs: name type bus=N [key=value ...]");
      DeviceSpec spec;
      spec.name = tokens[0];
      spec.type = tokens[1];
      spec.line = lineno;
      bool have_bus = false;
      for (std::size_t i = 2; i < tokens.size(); ++i) {
        auto [key, value] = split_kv(tokens[i], path, lineno);
        if (key == "bus") {
          spec.bus = parse_int(value, path, lineno);
          have_bus = true;
        } else {
          spec.params[key] = parse_number(value, path, lineno);
        }
      }
      if (!have_bus)
        throw ParseError(path + ":" + std::to_string(lineno) + ": device needs bus=N");
      out.device_specs.push_back(std::move(spec));
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown section " + section);
    }
  }

  try {
    out.network.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return out;
}

sim::Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");

  sim::Scenario sc;
  bool have_dt = false, have_coarse = false;
  std::string line;
  int lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    const std::string& kw = tokens[0];

    if (kw == "network" && tokens.size() == 2) {
      const std::filesystem::path p(tokens[1]);
      sc.network_path =
          p.is_absolute() ? p.string()
                          : (std::filesystem::path(path).parent_path() / p).string();
    } else if (kw == "dt" && tokens.size() == 2) {
      sc.dt = parse_number(tokens[1], path, lineno);
      have_dt = true;
    } else if (kw == "dt_coarse" && tokens.size() == 2) {
      sc.dt_coarse = parse_number(tokens[1], path, lineno);
      have_coarse = true;
    } else if (kw == "dt_switch" && tokens.size() == 2) {
      sc.dt_switch = parse_number(tokens[1], path, lineno);
    } else if (kw == "horizon" && tokens.size() == 2) {
      sc.horizon = parse_number(tokens[1], path, lineno);
    } else if (kw == "fault") {
      double t = -1.0, duration = -1.0, y = 1e4;
      int bus = -1;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        auto [key, value] = split_kv(tokens[i], path, lineno);
        if (key == "bus")
          bus = parse_int(value, path, lineno);
        else if (key == "t")
          t = parse_number(value, path, lineno);
        else if (key == "duration")
          duration = parse_number(value, path, lineno);
        else if (key == "y")
          y = parse_number(value, path, lineno);
        else
          throw ParseError(path + ":" + std::to_string(lineno) + ": unknown fault field '" + key +
                           "'");
      }
      if (bus < 0 || t < 0.0 || duration <= 0.0)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": fault needs bus=N t=T duration=D");
      sc.events.push_back({net::EventKind::apply_fault, t, bus, {y, 0.0}, -1, -1});
      sc.events.push_back({net::EventKind::clear_fault, t + duration, bus, {y, 0.0}, -1, -1});
    } else if (kw == "trip") {
      double t = -1.0;
      int from = -1, to = -1;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        auto [key, value] = split_kv(tokens[i], path, lineno);
        if (key == "line") {
          const auto dash = value.find('-');
          if (dash == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) + ": trip line=A-B");
          from = parse_int(value.substr(0, dash), path, lineno);
          to = parse_int(value.substr(dash + 1), path, lineno);
        } else if (key == "t") {
          t = parse_number(value, path, lineno);
        } else {
          throw ParseError(path + ":" + std::to_string(lineno) + ": unknown trip field '" + key +
                           "'");
        }
      }
      if (from < 0 || t < 0.0)
        throw ParseError(path + ":" + std::to_string(lineno) + ": trip needs line=A-B t=T");
      net::Event ev;
      ev.kind = net::EventKind::trip_line;
      ev.time = t;
      ev.from = from;
      ev.to = to;
      sc.events.push_back(ev);
    } else if (kw == "output") {
      for (std::size_t i = 1; i < tokens.size(); ++i) sc.channels.push_back(tokens[i]);
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown keyword '" + kw + "'");
    }
  }
  // An explicit dt without a dt_coarse means a single fixed step.
  if (have_dt && !have_coarse) sc.dt_coarse = sc.dt;
  if (sc.network_path.empty())
    throw ParseError(path + ": scenario does not name a network file");
  std::stable_sort(sc.events.begin(), sc.events.end(),
                   [](const net::Event& a, const net::Event& b) { return a.time < b.time; });
  return sc;
}

namespace {

double take(std::map<std::string, double>& params, const std::string& key, double fallback,
            const std::string& name, std::vector<std::string>& defaulted) {
  const auto it = params.find(key);
  if (it == params.end()) {
    defaulted.push_back(name + ": " + key + " defaulted to " + format_double(fallback));
    return fallback;
  }
  const double v = it->second;
  params.erase(it);
  return v;
}

}  // namespace

BuiltDevices build_devices(const std::vector<DeviceSpec>& specs) {
  BuiltDevices out;
  for (DeviceSpec spec : specs) {
    auto& d = out.defaulted;
    if (spec.type == "classical_sm") {
      dev::ClassicalSmParams p;
      p.h = take(spec.params, "h", p.h, spec.name, d);
      p.d = take(spec.params, "d", p.d, spec.name, d);
      p.x_total = take(spec.params, "x", p.x_total, spec.name, d);
      out.devices.push_back(std::make_unique<dev::ClassicalSmDevice>(spec.name, spec.bus, p));
    } else if (spec.type == "detailed_sm") {
      dev::DetailedSmParams p;
      p.h = take(spec.params, "h", p.h, spec.name, d);
      p.d = take(spec.params, "d", p.d, spec.name, d);
      p.ra = take(spec.params, "ra", p.ra, spec.name, d);
      p.xd = take(spec.params, "xd", p.xd, spec.name, d);
      p.xdp = take(spec.params, "xdp", p.xdp, spec.name, d);
      p.xdpp = take(spec.params, "xdpp", p.xdpp, spec.name, d);
      p.xq = take(spec.params, "xq", p.xq, spec.name, d);
      p.xqp = take(spec.params, "xqp", p.xqp, spec.name, d);
      p.xqpp = take(spec.params, "xqpp", p.xqpp, spec.name, d);
      p.td0p = take(spec.params, "td0p", p.td0p, spec.name, d);
      p.td0pp = take(spec.params, "td0pp", p.td0pp, spec.name, d);
      p.tq0p = take(spec.params, "tq0p", p.tq0p, spec.name, d);
      p.tq0pp = take(spec.params, "tq0pp", p.tq0pp, spec.name, d);
      p.ka = take(spec.params, "ka", p.ka, spec.name, d);
      p.ta = take(spec.params, "ta", p.ta, spec.name, d);
      p.ke = take(spec.params, "ke", p.ke, spec.name, d);
      p.te = take(spec.params, "te", p.te, spec.name, d);
      p.kf = take(spec.params, "kf", p.kf, spec.name, d);
      p.tf = take(spec.params, "tf", p.tf, spec.name, d);
      p.rg = take(spec.params, "rg", p.rg, spec.name, d);
      p.tg = take(spec.params, "tg", p.tg, spec.name, d);
      p.tt = take(spec.params, "tt", p.tt, spec.name, d);
      out.devices.push_back(std::make_unique<dev::DetailedSmDevice>(spec.name, spec.bus, p));
    } else if (spec.type == "cig") {
      dev::CigParams p;
      p.pll.kp = take(spec.params, "kp", p.pll.kp, spec.name, d);
      p.pll.ki = take(spec.params, "ki", p.pll.ki, spec.name, d);
      p.droop.r = take(spec.params, "r", p.droop.r, spec.name, d);
      p.droop.t_f = take(spec.params, "tf", p.droop.t_f, spec.name, d);
      p.droop.t_d = take(spec.params, "td", p.droop.t_d, spec.name, d);
      p.ti = take(spec.params, "ti", p.ti, spec.name, d);
      p.i_max = take(spec.params, "imax", p.i_max, spec.name, d);
      out.devices.push_back(std::make_unique<dev::CigDevice>(spec.name, spec.bus, p));
    } else if (spec.type == "infinite_bus") {
      const double y = take(spec.params, "y_src", 1e8, spec.name, d);
      out.devices.push_back(std::make_unique<dev::InfiniteBusDevice>(spec.name, spec.bus, y));
    } else {
      throw ParseError("device " + spec.name + " (line " + std::to_string(spec.line) +
                       "): unknown type '" + spec.type + "'");
    }
    if (!spec.params.empty())
      throw ParseError("device " + spec.name + " (line " + std::to_string(spec.line) +
                       "): unknown parameter '" + spec.params.begin()->first + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_powerflow_csv(const net::Network& net, const net::PowerFlowSolution& sol,
                         const std::string& path) {
  std::string csv = "bus,v_pu,theta_deg,p,q\n";
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto v = sol.v(static_cast<int>(i));
    csv += std::to_string(net.buses[i].id) + "," + format_double(std::abs(v)) + "," +
           format_double(std::arg(v) * 180.0 / std::numbers::pi) + "," +
           format_double(sol.injection[i].real()) + "," + format_double(sol.injection[i].imag()) +
           "\n";
  }
  write_text_file(path, csv);
}

double channel_value(const sim::DaeSystem& dae, const sim::SimulationResult& result,
                     std::size_t row, const std::string& channel) {
  const auto dot = channel.find('.');
  if (dot != std::string::npos) {
    const std::string dev_name = channel.substr(0, dot);
    const std::string out_name = channel.substr(dot + 1);
    for (std::size_t k = 0; k < dae.devices().size(); ++k) {
      const auto& d = dae.devices()[k];
      if (d->name() != dev_name) continue;
      const int off = dae.device_offset(k);
      const std::complex<double> vb =
          sim::DaeSystem::bus_voltage(result.v[row], dae.device_bus(k));
      return d->output(out_name,
                       std::span<const double>(result.x[row].data() + off,
                                               static_cast<std::size_t>(d->state_count())),
                       vb);
    }
    throw ValidationError("channel '" + channel + "': no device named '" + dev_name + "'");
  }
  if (channel.rfind("v", 0) == 0) {
    const int bus = dae.topology().base().index_of(std::stoi(channel.substr(1)));
    return std::abs(sim::DaeSystem::bus_voltage(result.v[row], bus));
  }
  if (channel.rfind("th", 0) == 0) {
    const int bus = dae.topology().base().index_of(std::stoi(channel.substr(2)));
    return std::arg(sim::DaeSystem::bus_voltage(result.v[row], bus));
  }
  throw ValidationError("unknown channel '" + channel + "'");
}

std::vector<std::string> default_channels(const sim::DaeSystem& dae) {
  std::vector<std::string> ch;
  for (const auto& d : dae.devices()) {
    if (dynamic_cast<const dev::DetailedSmDevice*>(d.get()) ||
        dynamic_cast<const dev::ClassicalSmDevice*>(d.get()))
      ch.push_back(d->name() + ".omega");
  }
  for (const auto& d : dae.devices()) {
    if (dynamic_cast<const dev::CigDevice*>(d.get())) {
      ch.push_back(d->name() + ".freq_est");
      ch.push_back(d->name() + ".droop_norm");
    }
  }
  for (const auto& d : dae.devices()) {
    if (dynamic_cast<const dev::DetailedSmDevice*>(d.get())) ch.push_back(d->name() + ".id");
  }
  for (const auto& d : dae.devices()) {
    if (dynamic_cast<const dev::CigDevice*>(d.get())) ch.push_back(d->name() + ".id");
  }
  return ch;
}

void write_timeseries_csv(const sim::DaeSystem& dae, const sim::SimulationResult& result,
                          const std::vector<std::string>& channels, const std::string& path) {
  std::string csv = "time";
  for (const auto& c : channels) csv += "," + c;
  csv += "\n";
  for (std::size_t row = 0; row < result.t.size(); ++row) {
    csv += format_double(result.t[row]);
    for (const auto& c : channels) csv += "," + format_double(channel_value(dae, result, row, c));
    csv += "\n";
  }
  write_text_file(path, csv);
}

void write_modes_csv(const std::vector<an::ModeReport>& modes,
                     const std::vector<std::string>& labels, const std::string& path) {
  std::string csv = "re,im,frequency_hz,damping_pct,top_states\n";
  for (const auto& m : modes) {
    std::vector<long> order(static_cast<std::size_t>(m.participation.size()));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<long>(j);
    const std::size_t top = std::min<std::size_t>(5, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(top), order.end(),
                      [&](long a, long b) { return m.participation(a) > m.participation(b); });
    std::string tops;
    for (std::size_t j = 0; j < top; ++j) {
      if (j) tops += " ";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", m.participation(order[j]));
      tops += labels[static_cast<std::size_t>(order[j])] + "=" + buf;
    }
    csv += format_double(m.eigenvalue.real()) + "," + format_double(m.eigenvalue.imag()) + "," +
           format_double(m.frequency_hz) + "," + format_double(100.0 * m.damping_ratio) + "," +
           tops + (m.degenerate ? " (degenerate)" : "") + "\n";
  }
  write_text_file(path, csv);
}

namespace {

std::string verdict_str(const an::ConditionVerdict& v) { return v.pass ? "pass" : "fail"; }

}  // namespace

std::string emulation_report_text(const an::EmulationReport& rep) {
  const auto& th = rep.thresholds;
  std::ostringstream os;
  os << "SM-emulation check for '" << rep.device << "'\n";
  os << "  energy        " << verdict_str(rep.energy) << "  (" << rep.energy.basis << " = "
     << format_double(rep.energy.measured) << ", min " << format_double(th.energy_min) << " s)\n";
  os << "  time scale    " << verdict_str(rep.time_scale) << "  (" << rep.time_scale.basis
     << " = " << format_double(rep.time_scale.measured) << " s, band ["
     << format_double(th.time_band_lo) << ", " << format_double(th.time_band_hi) << "] s)\n";
  os << "  damping       " << verdict_str(rep.damping) << "  (" << rep.damping.basis << " = "
     << format_double(rep.damping.measured) << ", underdamped with zeta <= "
     << format_double(th.damping_max) << ")\n";
  os << "  short-circuit " << verdict_str(rep.short_circuit) << "  (" << rep.short_circuit.basis
     << " = " << format_double(rep.short_circuit.measured) << ", min "
     << format_double(th.overload_min) << ")\n";
  os << "  overall: " << (rep.sm_equivalent ? "replicates a conventional SM"
                                            : "does NOT replicate a conventional SM")
     << "\n";
  return os.str();
}

std::string emulation_report_structured(const an::EmulationReport& rep) {
  const auto& th = rep.thresholds;
  std::ostringstream os;
  os << "[emulation]\n";
  os << "device = " << rep.device << "\n";
  os << "thresholds.time_band_lo = " << format_double(th.time_band_lo) << "\n";
  os << "thresholds.time_band_hi = " << format_double(th.time_band_hi) << "\n";
  os << "thresholds.energy_min = " << format_double(th.energy_min) << "\n";
  os << "thresholds.damping_max = " << format_double(th.damping_max) << "\n";
  os << "thresholds.overload_min = " << format_double(th.overload_min) << "\n";
  const auto emit = [&](const char* name, const an::ConditionVerdict& v) {
    os << name << ".measured = " << format_double(v.measured) << "\n";
    os << name << ".basis = " << v.basis << "\n";
    os << name << ".verdict = " << verdict_str(v) << "\n";
  };
  emit("energy", rep.energy);
  emit("time_scale", rep.time_scale);
  emit("damping", rep.damping);
  emit("short_circuit", rep.short_circuit);
  os << "overall = " << (rep.sm_equivalent ? "sm-equivalent" : "not-sm-equivalent") << "\n";
  return os.str();
}

}  // namespace psdyn::io
