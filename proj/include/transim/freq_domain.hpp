#pragma once

// Steady-state response of the linear coupled-mode model.
//
// Conventions (used throughout the library):
//   d/dt a = A a + b c_in,   A_jj = -i Delta_j - kappa_j / 2,   A_jk = +i g_jk
// with Delta_j = omega_j - omega_drive for microwave and mechanical modes.
// The optical mode lives in the frame of (pump + omega_drive), so
// Delta_o = -pump_detuning - omega_drive; a red pump at -omega_m makes the
// optical sideband resonant when the drive sits at omega_m.
//
// |a|^2 counts quanta and |c_in|^2 quanta per second. A port couples with
// amplitude sqrt(kappa_ext / 2) on a two-sided feedline and sqrt(kappa_ext)
// on a one-sided (reflection) port, and the output field is
//   c_out,to = delta_{to,from} c_in - sqrt(kappa_eff,to) a_to,
// so S = delta - sqrt(kappa_eff,to kappa_eff,from) [(-A)^-1]_{to,from}.
// On resonance the feedline transmission is 1 - kappa_ee / kappa_e.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "transim/error.hpp"
#include "transim/grid.hpp"
#include "transim/model.hpp"

namespace transim {

struct DynamicalMatrix {
  Eigen::MatrixXcd A;
  Eigen::VectorXd ext_in;   // sqrt(kappa_eff) per mode, zero for modes without a port
  Eigen::VectorXd ext_out;
  std::vector<std::string> labels;

  Eigen::Index dim() const { return A.rows(); }
};

/// Port amplitude sqrt(kappa_eff) for the mode's geometry.
inline double port_amplitude(const Mode& m) {
  switch (m.port) {
    case PortGeometry::transmission_twosided: return std::sqrt(m.kappa_ext / 2.0);
    case PortGeometry::reflection_onesided: return std::sqrt(m.kappa_ext);
    case PortGeometry::none: return 0.0;
  }
  return 0.0;
}

/// Detuning of mode j from the drive in its own rotating frame.
inline double frame_detuning(const TransducerModel& model, std::size_t j, double drive_freq) {
  const Mode& m = model.modes()[j];
  if (m.kind == ModeKind::optical) return -model.pump().detuning - drive_freq;
  return m.omega - drive_freq;
}

namespace detail {

inline void require_connected(const TransducerModel& model) {
  const std::size_t n = model.size();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    auto i = stack.back();
    stack.pop_back();
    for (const auto& c : model.couplings()) {
      auto a = model.index_of(c.mode_a), b = model.index_of(c.mode_b);
      std::size_t other = a == i ? b : (b == i ? a : n);
      if (other < n && !seen[other]) {
        seen[other] = 1;
        stack.push_back(other);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw ModelError("coupling graph is disconnected: mode '" + model.modes()[i].label + "' is isolated");
}

}  // namespace detail

inline DynamicalMatrix build_dynamical_matrix(const TransducerModel& model, double drive_freq) {
  detail::require_connected(model);
  const auto n = static_cast<Eigen::Index>(model.size());
  DynamicalMatrix mat;
  mat.A = Eigen::MatrixXcd::Zero(n, n);
  mat.ext_in = Eigen::VectorXd::Zero(n);
  mat.ext_out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Mode& m = model.modes()[static_cast<std::size_t>(j)];
    const double delta = frame_detuning(model, static_cast<std::size_t>(j), drive_freq);
    mat.A(j, j) = cdouble(-total_linewidth(m) / 2.0, -delta);
    mat.ext_in(j) = port_amplitude(m);
    mat.ext_out(j) = port_amplitude(m);
    mat.labels.push_back(m.label);
  }
  for (const auto& c : model.couplings()) {
    const auto a = static_cast<Eigen::Index>(model.index_of(c.mode_a));
    const auto b = static_cast<Eigen::Index>(model.index_of(c.mode_b));
    mat.A(a, b) += cdouble(0.0, c.g);
    mat.A(b, a) += cdouble(0.0, c.g);
  }
  return mat;
}

namespace detail {

inline Eigen::Index label_index(const DynamicalMatrix& mat, const std::string& port) {
  for (std::size_t i = 0; i < mat.labels.size(); ++i)
    if (mat.labels[i] == port) return static_cast<Eigen::Index>(i);
  throw PortError("unknown port '" + port + "'");
}

inline Eigen::PartialPivLU<Eigen::MatrixXcd> factor_or_throw(const DynamicalMatrix& mat) {
  Eigen::MatrixXcd negA = -mat.A;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(negA);
  const double rc = lu.rcond();
  if (!(rc > 1e-14)) {
    std::ostringstream msg;
    msg << "dynamical matrix is singular (rcond=" << rc << ")";
    for (Eigen::Index j = 0; j < mat.dim(); ++j)
      if (std::abs(mat.A(j, j)) == 0.0) msg << "; mode '" << mat.labels[static_cast<std::size_t>(j)] << "' is lossless and resonant";
    throw NumericalError(msg.str());
  }
  return lu;
}

}  // namespace detail

/// Steady-state mode amplitudes for a drive c_in on the given port.
inline Eigen::VectorXcd steady_state(const DynamicalMatrix& mat, cdouble c_in, const std::string& port) {
  const auto p = detail::label_index(mat, port);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(mat.dim());
  b(p) = mat.ext_in(p) * c_in;
  if (c_in == cdouble(0.0, 0.0)) return b;
  return detail::factor_or_throw(mat).solve(b);
}

namespace detail {

inline Eigen::Index port_index(const DynamicalMatrix& mat, const std::string& port) {
  const auto i = label_index(mat, port);
  if (!(mat.ext_in(i) > 0.0)) throw PortError("mode '" + port + "' has no external coupling");
  return i;
}

inline cdouble s_from_lu(const DynamicalMatrix& mat, const Eigen::PartialPivLU<Eigen::MatrixXcd>& lu, Eigen::Index from,
                         Eigen::Index to) {
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(mat.dim());
  e(from) = 1.0;
  const Eigen::VectorXcd col = lu.solve(e);
  const cdouble direct = from == to ? cdouble(1.0, 0.0) : cdouble(0.0, 0.0);
  return direct - mat.ext_out(to) * mat.ext_in(from) * col(to);
}

}  // namespace detail

inline cdouble s_parameter(const DynamicalMatrix& mat, const std::string& from_port, const std::string& to_port) {
  const auto from = detail::port_index(mat, from_port);
  const auto to = detail::port_index(mat, to_port);
  return detail::s_from_lu(mat, detail::factor_or_throw(mat), from, to);
}

inline cdouble s_parameter(const TransducerModel& model, double probe_freq, const std::string& from_port,
                           const std::string& to_port) {
  return s_parameter(build_dynamical_matrix(model, probe_freq), from_port, to_port);
}

// ---------------------------------------------------------------------------
// Sweeps

enum class ControlAxis { coil_current, delta_e };

/// Model with the microwave resonator placed according to the control value:
/// delta_e is omega_e - omega_m of the transduction mode [rad/s]; coil_current
/// is in amperes and goes through the model's flux-tuning curve.
inline TransducerModel model_at_control(const TransducerModel& model, ControlAxis control, double value) {
  auto e = model.electrical_index();
  if (!e) throw ModelError("control sweep needs an electrical mode");
  const std::string& label = model.modes()[*e].label;
  if (control == ControlAxis::delta_e)
    return model.with_frequency(label, model.modes()[model.primary_mechanical_index()].omega + value);
  if (!model.flux_tuning()) throw ModelError("coil-current sweep needs a flux tuning curve");
  return model.with_frequency(label, flux_tuned_frequency(*model.flux_tuning(), value));
}

struct MapPorts {
  std::string from = "e";
  std::string to = "e";
};

/// S-parameter between two ports over (control, probe). Cells where the
/// matrix is singular are masked with NaN.
inline SweepGrid2D avoided_crossing_map(const TransducerModel& model, const std::vector<double>& probe,
                                        const std::vector<double>& control_values, ControlAxis control,
                                        const MapPorts& ports = {}) {
  if (probe.empty() || control_values.empty()) throw Error("sweep ranges must be non-empty");
  SweepGrid2D grid(probe, control_values);
  grid.x_name = "probe_hz";
  grid.y_name = control == ControlAxis::delta_e ? "delta_e_hz" : "coil_current_a";
  parallel_rows(grid.rows(), [&](std::size_t r) {
    const TransducerModel row_model = model_at_control(model, control, control_values[r]);
    for (std::size_t c = 0; c < probe.size(); ++c) {
      try {
        grid.at(r, c) = s_parameter(row_model, probe[c], ports.from, ports.to);
      } catch (const NumericalError&) {
        grid.at(r, c) = kMasked;
      }
    }
  });
  return grid;
}

/// Bidirectional waveguide-to-waveguide efficiency map. Each cell holds the
/// product S_oe * S_eo; its magnitude is the efficiency in photon units.
inline SweepGrid2D cw_efficiency_map(const TransducerModel& model, const std::vector<double>& probe,
                                     const std::vector<double>& control_values, ControlAxis control) {
  if (probe.empty() || control_values.empty()) throw Error("sweep ranges must be non-empty");
  auto e = model.electrical_index();
  auto o = model.optical_index();
  if (!e || !o) throw ModelError("efficiency map needs an electrical and an optical mode");
  SweepGrid2D grid(probe, control_values);
  grid.x_name = "probe_hz";
  grid.y_name = control == ControlAxis::delta_e ? "delta_e_hz" : "coil_current_a";
  const std::string el = model.modes()[*e].label, ol = model.modes()[*o].label;
  parallel_rows(grid.rows(), [&](std::size_t r) {
    const TransducerModel row_model = model_at_control(model, control, control_values[r]);
    for (std::size_t c = 0; c < probe.size(); ++c) {
      try {
        const auto mat = build_dynamical_matrix(row_model, probe[c]);
        const auto lu = detail::factor_or_throw(mat);
        const auto ie = detail::port_index(mat, el), io = detail::port_index(mat, ol);
        grid.at(r, c) = detail::s_from_lu(mat, lu, ie, io) * detail::s_from_lu(mat, lu, io, ie);
      } catch (const NumericalError&) {
        grid.at(r, c) = kMasked;
      }
    }
  });
  return grid;
}

// ---------------------------------------------------------------------------
// Derived scalars

struct Dip {
  double x = 0.0;      // refined position
  double value = 0.0;  // |S| at the sample minimum
  double depth = 0.0;  // (row max - value) / row max
};

/// Local minima of a sampled magnitude trace, refined by a parabola through
/// the three samples around each minimum. Dips shallower than min_depth
/// (relative to the row maximum) are dropped.
inline std::vector<Dip> find_dips(const std::vector<double>& xs, const std::vector<double>& mag, double min_depth = 1e-4) {
  std::vector<Dip> out;
  if (xs.size() < 3) return out;
  double top = 0.0;
  for (double v : mag)
    if (std::isfinite(v)) top = std::max(top, v);
  if (!(top > 0.0)) return out;
  for (std::size_t i = 1; i + 1 < mag.size(); ++i) {
    const double l = mag[i - 1], c = mag[i], r = mag[i + 1];
    if (!(std::isfinite(l) && std::isfinite(c) && std::isfinite(r))) continue;
    if (!(c < l && c <= r)) continue;
    const double depth = (top - c) / top;
    if (depth < min_depth) continue;
    double x = xs[i];
    const double denom = l - 2.0 * c + r;
    if (denom > 0.0) {
      const double h = 0.5 * (xs[i + 1] - xs[i - 1]);
      x = xs[i] + 0.5 * h * (l - r) / denom;
    }
    out.push_back({x, c, depth});
  }
  return out;
}

struct BranchSplitting {
  bool found = false;
  double splitting = 0.0;  // rad/s
  double control = 0.0;    // control value of the narrowest row
  double lower = 0.0;
  double upper = 0.0;
};

/// Narrowest separation of the two deepest dips across all rows of a map.
inline BranchSplitting min_branch_splitting(const SweepGrid2D& grid, double min_depth = 1e-4) {
  BranchSplitting best;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    auto dips = find_dips(grid.x, grid.row_abs(r), min_depth);
    if (dips.size() < 2) continue;
    std::partial_sort(dips.begin(), dips.begin() + 2, dips.end(), [](const Dip& a, const Dip& b) { return a.depth > b.depth; });
    const double lo = std::min(dips[0].x, dips[1].x), hi = std::max(dips[0].x, dips[1].x);
    if (!best.found || hi - lo < best.splitting) best = {true, hi - lo, grid.y[r], lo, hi};
  }
  return best;
}

struct GridPeak {
  double value = 0.0;  // max |cell|
  double x = 0.0;
  double y = 0.0;
};

inline GridPeak peak_magnitude(const SweepGrid2D& grid) {
  GridPeak p;
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const auto& v = grid.at(r, c);
      if (SweepGrid2D::masked(v)) continue;
      if (std::abs(v) > p.value) p = {std::abs(v), grid.x[c], grid.y[r]};
    }
  return p;
}

/// Lab-frame normal-mode frequencies (ascending) of the model: -Im of the
/// eigenvalues of A evaluated with a zero drive frequency.
inline std::vector<double> hybrid_frequencies(const TransducerModel& model) {
  const auto mat = build_dynamical_matrix(model, 0.0);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(mat.A, false);
  std::vector<double> f;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) f.push_back(-es.eigenvalues()(i).imag());
  std::sort(f.begin(), f.end());
  return f;
}

// ---------------------------------------------------------------------------
// Pump calibration

/// Intracavity photon number that makes the matched-resonance transduction
/// efficiency eta_e eta_o 4 C_em C_om / (1 + C_em + C_om)^2 equal to target.
/// Returns the lower-power solution. Throws when target is above the
/// reachable maximum.
inline double intracavity_photons_for_efficiency(const TransducerModel& model, double target) {
  auto e = model.electrical_index();
  auto o = model.optical_index();
  if (!e || !o) throw ModelError("pump calibration needs electrical and optical modes");
  const Mode& me = model.modes()[*e];
  const Mode& mo = model.modes()[*o];
  const Mode& mm = model.modes()[model.primary_mechanical_index()];
  const double c_em = cooperativity(model.coupling(me.label, mm.label), total_linewidth(me), total_linewidth(mm));
  const double c_om_per_photon = cooperativity(model.pump().g_om0, total_linewidth(mo), total_linewidth(mm));
  if (!(c_om_per_photon > 0.0)) throw DegenerateInputError("g_om0 is zero");
  const double k = target / (coupling_efficiency(me) * coupling_efficiency(mo));
  const double base = 1.0 + c_em;
  // k C^2 + (2 k base - 4 C_em) C + k base^2 = 0
  const double b = 2.0 * k * base - 4.0 * c_em;
  const double disc = b * b - 4.0 * k * k * base * base;
  if (!(k > 0.0) || disc < 0.0) throw DegenerateInputError("target efficiency is not reachable with this model");
  const double c_om = (-b - std::sqrt(disc)) / (2.0 * k);
  return c_om / c_om_per_photon;
}

namespace detail {

/// Maximum of f on [a, b] by golden-section search, assuming one peak inside.
template <class Fn>
std::pair<double, double> golden_max(Fn&& f, double a, double b, int iters = 60) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iters; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

/// Sampled maximum of f over xs followed by golden-section refinement.
template <class Fn>
std::pair<double, double> scan_max(Fn&& f, const std::vector<double>& xs, int iters = 60) {
  std::size_t ib = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = f(xs[i]);
    if (v > best) {
      best = v;
      ib = i;
    }
  }
  std::pair<double, double> out{xs[ib], best};
  if (ib > 0 && ib + 1 < xs.size()) {
    const auto refined = golden_max(f, xs[ib - 1], xs[ib + 1], iters);
    if (refined.second > out.second) out = refined;
  }
  return out;
}

}  // namespace detail

/// Largest bidirectional efficiency |S_oe S_eo| over drive frequency (within
/// +-span of the mechanical mode) and resonator detuning Delta_e (within
/// +-span). The returned x is the drive frequency, y the detuning.
inline GridPeak efficiency_peak(const TransducerModel& model, double span, std::size_t samples = 401) {
  auto e = model.electrical_index();
  auto o = model.optical_index();
  if (!e || !o) throw ModelError("efficiency peak needs an electrical and an optical mode");
  const double wm = model.modes()[model.primary_mechanical_index()].omega;
  const std::string el = model.modes()[*e].label, ol = model.modes()[*o].label;
  const auto probe = linspace(wm - span, wm + span, samples);
  auto along_probe = [&](double delta_e) {
    const auto tuned = model_at_control(model, ControlAxis::delta_e, delta_e);
    auto eff = [&](double w) {
      const auto mat = build_dynamical_matrix(tuned, w);
      const auto lu = detail::factor_or_throw(mat);
      const auto ie = detail::port_index(mat, el), io = detail::port_index(mat, ol);
      return std::abs(detail::s_from_lu(mat, lu, ie, io) * detail::s_from_lu(mat, lu, io, ie));
    };
    return detail::scan_max(eff, probe);
  };
  const auto [de, v] = detail::scan_max([&](double d) { return along_probe(d).second; }, linspace(-span, span, 41), 40);
  return {v, along_probe(de).first, de};
}

/// Intracavity photon number at which the efficiency peak (see
/// efficiency_peak) equals target. Bisection in log(n_c) on the
/// rising side of the efficiency curve.
inline double intracavity_photons_for_peak_efficiency(const TransducerModel& model, double target, double span,
                                                      std::size_t samples = 401) {
  if (!(target > 0.0 && target < 1.0)) throw DegenerateInputError("target efficiency must lie in (0, 1)");
  auto peak = [&](double n_c) { return efficiency_peak(model.with_intracavity_photons(n_c), span, samples).value; };
  double lo = 1e-6, hi = 1e-6;
  double v = peak(hi);
  if (v > target) throw DegenerateInputError("target efficiency is below the smallest reachable value");
  while (v < target) {
    lo = hi;
    hi *= 4.0;
    if (hi > 1e12) throw DegenerateInputError("target efficiency is not reachable with this model");
    const double nv = peak(hi);
    if (nv < v) throw DegenerateInputError("target efficiency is above the maximum reachable value");
    v = nv;
  }
  for (int it = 0; it < 100 && hi / lo > 1.0 + 1e-10; ++it) {
    const double mid = std::sqrt(lo * hi);
    (peak(mid) < target ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace transim
