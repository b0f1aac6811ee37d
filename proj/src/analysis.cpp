#include "psdyn/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace psdyn::an {

StateMatrix linearize_system(const sim::DaeSystem& dae, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& v0, double h) {
  if (!(h > 0.0)) throw ValidationError("linearize_system: h must be > 0");
  const int nx = dae.n_states();
  const int nv = dae.n_alg();

  Eigen::VectorXd g0(nv);
  dae.g(x0, v0, g0);
  if (g0.size() && g0.cwiseAbs().maxCoeff() > 1e-8)
    throw ValidationError("linearize_system: point is not algebraically consistent");

  Eigen::MatrixXd fx(nx, nx), fy(nx, nv), gx(nv, nx), gy(nv, nv);
  Eigen::VectorXd fp(nx), fm(nx), gp(nv), gm(nv);
  Eigen::VectorXd x = x0, v = v0;

  for (int j = 0; j < nx; ++j) {
    const double hj = h * std::max(1.0, std::abs(x(j)));
    const double saved = x(j);
    x(j) = saved + hj;
    dae.f(x, v, fp);
    dae.g(x, v, gp);
    x(j) = saved - hj;
    dae.f(x, v, fm);
    dae.g(x, v, gm);
    x(j) = saved;
    fx.col(j) = (fp - fm) / (2.0 * hj);
    gx.col(j) = (gp - gm) / (2.0 * hj);
  }
  for (int j = 0; j < nv; ++j) {
    const double hj = h * std::max(1.0, std::abs(v(j)));
    const double saved = v(j);
    v(j) = saved + hj;
    dae.f(x, v, fp);
    dae.g(x, v, gp);
    v(j) = saved - hj;
    dae.f(x, v, fm);
    dae.g(x, v, gm);
    v(j) = saved;
    fy.col(j) = (fp - fm) / (2.0 * hj);
    gy.col(j) = (gp - gm) / (2.0 * hj);
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(gy);
  if (!lu.isInvertible())
    throw SingularAlgebraicJacobian("linearize_system: algebraic Jacobian g_y is singular");

  StateMatrix sm;
  sm.a = fx - fy * lu.solve(gx);
  sm.labels = dae.state_labels();
  return sm;
}

Eigen::MatrixXd participation_factors(const Eigen::MatrixXcd& right,
                                      const Eigen::MatrixXcd& left) {
  const long n = right.rows();
  if (right.cols() != n || left.rows() != n || left.cols() != n)
    throw DimensionMismatch("participation_factors: eigenvector sets must be n x n");
  Eigen::MatrixXd p(n, n);
  for (long i = 0; i < n; ++i) {  // mode i
    double sum = 0.0;
    for (long k = 0; k < n; ++k) {
      p(k, i) = std::abs(right(k, i) * left(i, k));
      sum += p(k, i);
    }
    if (sum > 0.0) p.col(i) /= sum;
  }
  return p;
}

std::vector<ModeReport> eigen_analysis(const StateMatrix& sm) {
  if (!sm.a.allFinite()) throw ValidationError("eigen_analysis: matrix has non-finite entries");
  const long n = sm.a.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> solver(sm.a);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigen_analysis: QR iteration failed to converge (||A|| = " +
                         std::to_string(sm.a.norm()) + ")");

  const Eigen::VectorXcd lam = solver.eigenvalues();
  const Eigen::MatrixXcd right = solver.eigenvectors();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(right);
  if (!lu.isInvertible())
    throw NumericalError("eigen_analysis: eigenvector matrix is singular (defective system)");
  const Eigen::MatrixXcd left = lu.inverse();

  const Eigen::MatrixXd p = participation_factors(right, left);

  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  std::vector<ModeReport> modes;
  modes.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    ModeReport m;
    m.eigenvalue = lam(i);
    m.frequency_hz = std::abs(lam(i).imag()) / (2.0 * std::numbers::pi);
    const double mag = std::abs(lam(i));
    m.damping_ratio = (mag > 0.0) ? -lam(i).real() / mag : 1.0;
    m.participation = p.col(i);
    for (long j = 0; j < n; ++j)
      if (j != i && std::abs(lam(i) - lam(j)) < 1e-9 * scale) m.degenerate = true;
    modes.push_back(std::move(m));
  }
  std::stable_sort(modes.begin(), modes.end(), [](const ModeReport& a, const ModeReport& b) {
    return a.damping_ratio < b.damping_ratio;
  });
  return modes;
}

bool is_rotor_speed_state(const std::string& label) {
  return label.size() >= 6 && label.compare(label.size() - 6, 6, ":omega") == 0;
}

bool is_rotor_state(const std::string& label) {
  if (is_rotor_speed_state(label)) return true;
  return label.size() >= 6 && label.compare(label.size() - 6, 6, ":delta") == 0;
}

std::vector<std::size_t> electromechanical_modes(const std::vector<ModeReport>& modes,
                                                 const std::vector<std::string>& labels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto& m = modes[i];
    if (m.eigenvalue.imag() <= 0.0) continue;  // one member per conjugate pair
    if (m.frequency_hz < 0.1 || m.frequency_hz > 3.0) continue;
    // Two largest participation factors must belong to rotor states.
    std::vector<long> order(static_cast<std::size_t>(m.participation.size()));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<long>(j);
    std::partial_sort(order.begin(), order.begin() + 2, order.end(), [&](long a, long b) {
      return m.participation(a) > m.participation(b);
    });
    if (is_rotor_state(labels[static_cast<std::size_t>(order[0])]) &&
        is_rotor_state(labels[static_cast<std::size_t>(order[1])]))
      out.push_back(i);
  }
  return out;
}

namespace {

std::complex<double> slowest_eigenvalue(double c, double d, double k) {
  const osc::LinearOscillator lin{c, d, k, k > 0.0};
  return osc::eigenvalues(lin).first;
}

}  // namespace

EmulationReport emulation_report(const DeviceCharacterization& ch, const EmulationThresholds& th) {
  EmulationReport rep;
  rep.device = ch.name;
  rep.thresholds = th;

  const bool have_cdk = ch.c && ch.d && ch.k;
  std::vector<std::string> missing;

  // Time scale: dominant time constant (and c/2 when known) inside the band.
  std::optional<std::complex<double>> lam = ch.dominant_lambda;
  if (!lam && have_cdk) lam = slowest_eigenvalue(*ch.c, *ch.d, *ch.k);
  if (!lam) {
    missing.push_back("dominant eigenvalue (or c, d, k)");
  } else {
    const double tau = (lam->real() < 0.0) ? 1.0 / std::abs(lam->real())
                                           : std::numeric_limits<double>::infinity();
    bool pass = tau >= th.time_band_lo && tau <= th.time_band_hi;
    std::string basis = "dominant 1/|Re(lambda)|";
    if (ch.c) {
      pass = pass && (*ch.c / 2.0 >= th.time_band_lo && *ch.c / 2.0 <= th.time_band_hi);
      basis += " and c/2";
    }
    rep.time_scale = {pass, tau, basis};
  }

  // Energy: exogenous storage flag when stated, dE/dPl ratio otherwise.
  if (ch.energy_available) {
    rep.energy = {*ch.energy_available, *ch.energy_available ? 1.0 : 0.0,
                  "declared storage availability"};
  } else if (ch.c && ch.d && *ch.d > 0.0) {
    const double ratio = *ch.c / (2.0 * *ch.d);
    rep.energy = {ratio >= th.energy_min, ratio, "dE/dPl = c/(2d)"};
  } else if (lam && lam->real() < 0.0 && std::abs(lam->imag()) > 0.0) {
    const double ratio = -1.0 / (4.0 * lam->real());
    rep.energy = {ratio >= th.energy_min, ratio, "dE/dPl = -1/(4 Re(lambda))"};
  } else {
    missing.push_back("energy availability (or c, d)");
  }

  // Damping: oscillatory with zeta at or below the threshold.
  if (have_cdk) {
    const auto [cls, zeta] = osc::damping_classification({*ch.c, *ch.d, *ch.k, true});
    rep.damping = {cls == osc::DampingClass::underdamped && zeta <= th.damping_max, zeta,
                   "zeta = d/(2 sqrt(ck))"};
  } else if (lam) {
    const double mag = std::abs(*lam);
    const double zeta = (mag > 0.0) ? -lam->real() / mag : 1.0;
    const bool oscillatory = std::abs(lam->imag()) > 0.0;
    rep.damping = {oscillatory && zeta <= th.damping_max, zeta, "mode damping ratio"};
  } else {
    missing.push_back("damping characterization");
  }

  // Short-circuit: overload capability ratio.
  if (ch.overload_ratio) {
    rep.short_circuit = {*ch.overload_ratio >= th.overload_min, *ch.overload_ratio,
                         "overload capability ratio"};
  } else {
    missing.push_back("overload ratio");
  }

  if (!missing.empty()) {
    std::string msg = "emulation_report: missing inputs:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw IncompleteCharacterization(msg);
  }

  rep.sm_equivalent =
      rep.energy.pass && rep.time_scale.pass && rep.damping.pass && rep.short_circuit.pass;
  return rep;
}

DeviceCharacterization preset_characterization(const std::string& name, double k) {
  DeviceCharacterization ch;
  ch.name = name;
  ch.k = k;
  if (name == "sm") {
    ch.c = 6.0;
    ch.d = 3.0;
    ch.overload_ratio = 6.0;  // conventional machine tolerates several times rated current
  } else if (name == "droop") {
    ch.c = 6.0;
    ch.d = 100.0;
    ch.overload_ratio = 1.2;
    ch.energy_available = false;  // plain droop has no committed fast storage
  } else if (name == "vsm") {
    ch.c = 6.0;
    ch.d = 100.0;
    ch.overload_ratio = 1.2;
    ch.energy_available = true;  // droop plus fast storage is what makes it a VSM
  } else if (name == "pll") {
    ch.c = 0.01;
    ch.d = 3.0;
    ch.overload_ratio = 1.2;
  } else {
    throw ValidationError("unknown emulation preset '" + name + "'");
  }
  return ch;
}

}  // namespace psdyn::an
