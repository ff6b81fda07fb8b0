#pragma once

// Time evolution of the coupled-mode equations under piecewise-constant
// drives. On every interval where the set of active drives is fixed the
// solution is exact:
//   a(t) = e^{A (t - t_s)} (a(t_s) - p(t_s)) + p(t),
//   p(t) = sum_d -(A + i delta_d)^-1 b_d e^{-i delta_d t},
// with e^{A t} taken from the eigendecomposition of A. When A is defective
// (or a drive is resonant with an undamped mode) an adaptive Dormand-Prince
// integrator takes over.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "transim/error.hpp"
#include "transim/freq_domain.hpp"
#include "transim/grid.hpp"
#include "transim/model.hpp"

namespace transim {

struct RectWindow {
  double t_on = 0.0;
  double t_off = 0.0;
};

struct DriveTone {
  std::string port;
  double detuning = 0.0;   // rad/s relative to the frame frequency
  double amplitude = 0.0;  // sqrt(quanta / s)
  std::optional<RectWindow> window;  // empty = continuous

  static DriveTone cw(std::string port, double amplitude, double detuning = 0.0) {
    return {std::move(port), detuning, amplitude, std::nullopt};
  }
  static DriveTone rect(std::string port, double amplitude, double t_on, double t_off, double detuning = 0.0) {
    return {std::move(port), detuning, amplitude, RectWindow{t_on, t_off}};
  }
  /// Drive switched on at t_on and left on.
  static DriveTone step(std::string port, double amplitude, double t_on = 0.0, double detuning = 0.0) {
    return rect(std::move(port), amplitude, t_on, std::numeric_limits<double>::infinity(), detuning);
  }
  /// Rectangular pulse carrying one photon on average.
  static DriveTone single_photon_pulse(std::string port, double duration, double t_on = 0.0, double detuning = 0.0) {
    return rect(std::move(port), 1.0 / std::sqrt(duration), t_on, t_on + duration, detuning);
  }

  bool active_at(double t) const { return !window || (t >= window->t_on && t < window->t_off); }

  double photon_number() const {
    if (!window) return std::numeric_limits<double>::infinity();
    return amplitude * amplitude * (window->t_off - window->t_on);
  }

  void validate() const {
    if (!std::isfinite(amplitude) || amplitude < 0.0) throw ModelError("drive amplitude must be finite and >= 0");
    if (!std::isfinite(detuning)) throw ModelError("drive detuning must be finite");
    if (window && !(window->t_off > window->t_on)) throw ModelError("rectangular drive needs t_off > t_on");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::string> labels;
  std::vector<std::vector<cdouble>> amplitudes;  // [mode][sample]
  std::vector<std::vector<double>> occupations;  // |amplitudes|^2

  const std::vector<double>& occupation(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return occupations[i];
    throw ModelError("trajectory has no mode '" + label + "'");
  }

  double total_occupation(std::size_t k) const {
    double s = 0.0;
    for (const auto& o : occupations) s += o[k];
    return s;
  }
};

struct PropagateOptions {
  /// Rotating-frame reference [rad/s]; NaN selects the transduction mechanical mode.
  double frame_freq = std::numeric_limits<double>::quiet_NaN();
  std::optional<Eigen::VectorXcd> initial;
  bool force_integrator = false;
  double rtol = 1e-9;
  double atol = 1e-12;
  double max_eigvec_condition = 1e10;
};

namespace detail {

/// Adaptive Dormand-Prince 5(4) for d/dt y = f(t, y) on complex vectors.
template <class Rhs>
class Dopri5 {
 public:
  Dopri5(Rhs f, double rtol, double atol) : f_(std::move(f)), rtol_(rtol), atol_(atol) {}

  /// Advances y from t0 to t1 in place.
  void advance(Eigen::VectorXcd& y, double t0, double t1) {
    if (t1 <= t0) return;
    double t = t0;
    if (!(h_ > 0.0)) h_ = (t1 - t0) * 1e-3;
    Eigen::VectorXcd k1 = f_(t, y);
    int guard = 0;
    while (t < t1) {
      if (++guard > 10'000'000) throw NumericalError("integrator step limit exceeded");
      double h = std::min(h_, t1 - t);
      const bool last = h >= t1 - t;
      Eigen::VectorXcd k2 = f_(t + c2 * h, y + h * (a21 * k1));
      Eigen::VectorXcd k3 = f_(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
      Eigen::VectorXcd k4 = f_(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      Eigen::VectorXcd k5 = f_(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      Eigen::VectorXcd k6 = f_(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      Eigen::VectorXcd y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      Eigen::VectorXcd k7 = f_(t + h, y5);
      Eigen::VectorXcd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double en = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double sc = atol_ + rtol_ * std::max(std::abs(y(i)), std::abs(y5(i)));
        en = std::max(en, std::abs(err(i)) / sc);
      }
      if (en <= 1.0) {
        t = last ? t1 : t + h;
        y = y5;
        k1 = k7;
      }
      const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      const double proposed = h * factor;
      if (!(last && en <= 1.0 && proposed < h_)) h_ = proposed;
      if (h_ < 1e-300) throw NumericalError("integrator step size underflow");
    }
  }

 private:
  Rhs f_;
  double rtol_, atol_;
  double h_ = 0.0;

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

struct ActiveDrive {
  Eigen::VectorXcd b;  // input vector for unit phase
  double detuning;
  const DriveTone* tone;
};

}  // namespace detail

inline Trajectory propagate(const TransducerModel& model, const std::vector<DriveTone>& drives,
                            const std::vector<double>& t_grid, const PropagateOptions& opts = {}) {
  if (t_grid.empty()) throw Error("time grid is empty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!std::isfinite(t_grid[i])) throw ModelError("time grid contains non-finite values");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw Error("time grid must be strictly increasing");
  }
  for (const auto& d : drives) d.validate();

  const double frame = std::isnan(opts.frame_freq) ? model.modes()[model.primary_mechanical_index()].omega : opts.frame_freq;
  const DynamicalMatrix mat = build_dynamical_matrix(model, frame);
  if (!mat.A.allFinite()) throw ModelError("dynamical matrix has non-finite entries");
  const Eigen::Index n = mat.dim();

  std::vector<detail::ActiveDrive> all;
  for (const auto& d : drives) {
    const auto p = detail::label_index(mat, d.port);
    if (!(mat.ext_in(p) > 0.0)) throw PortError("mode '" + d.port + "' has no external coupling to drive");
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
    b(p) = mat.ext_in(p) * d.amplitude;
    all.push_back({std::move(b), d.detuning, &d});
  }

  // Switch times strictly inside the grid split it into constant segments.
  std::vector<double> cuts{t_grid.front()};
  for (const auto& d : drives)
    if (d.window)
      for (double s : {d.window->t_on, d.window->t_off})
        if (s > t_grid.front() && s < t_grid.back()) cuts.push_back(s);
  cuts.push_back(t_grid.back());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Eigendecomposition, shared by all segments.
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(mat.A);
  const Eigen::VectorXcd lambda = es.eigenvalues();
  const Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::PartialPivLU<Eigen::MatrixXcd> vlu(V);
  const Eigen::MatrixXcd Vinv = vlu.inverse();
  const double cond = V.cwiseAbs().rowwise().sum().maxCoeff() * Vinv.cwiseAbs().rowwise().sum().maxCoeff();
  const double scale = std::max(1.0, mat.A.cwiseAbs().maxCoeff());
  bool use_eigen = !opts.force_integrator && std::isfinite(cond) && cond < opts.max_eigvec_condition;

  Trajectory traj;
  traj.times = t_grid;
  traj.labels = mat.labels;
  traj.amplitudes.assign(static_cast<std::size_t>(n), std::vector<cdouble>(t_grid.size()));
  traj.occupations.assign(static_cast<std::size_t>(n), std::vector<double>(t_grid.size()));

  Eigen::VectorXcd state = opts.initial ? *opts.initial : Eigen::VectorXcd::Zero(n);
  if (state.size() != n) throw ModelError("initial state has the wrong dimension");

  auto record = [&](std::size_t k, const Eigen::VectorXcd& a) {
    for (Eigen::Index j = 0; j < n; ++j) {
      traj.amplitudes[static_cast<std::size_t>(j)][k] = a(j);
      traj.occupations[static_cast<std::size_t>(j)][k] = std::norm(a(j));
    }
  };
  record(0, state);

  std::size_t k = 1;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double ts = cuts[s], te = cuts[s + 1];
    const double mid = 0.5 * (ts + te);
    std::vector<const detail::ActiveDrive*> active;
    for (const auto& d : all)
      if (d.tone->active_at(mid)) active.push_back(&d);

    // Particular solutions; a resonant undamped drive forces the integrator.
    std::vector<Eigen::VectorXcd> u;
    bool seg_eigen = use_eigen;
    if (seg_eigen)
      for (const auto* d : active) {
        bool resonant = false;
        for (Eigen::Index i = 0; i < n; ++i)
          if (std::abs(lambda(i) + cdouble(0.0, d->detuning)) < 1e-12 * scale) resonant = true;
        if (resonant) {
          seg_eigen = false;
          break;
        }
        Eigen::MatrixXcd M = mat.A;
        M.diagonal().array() += cdouble(0.0, d->detuning);
        u.push_back(-M.partialPivLu().solve(d->b));
      }

    if (seg_eigen) {
      auto particular = [&](double t) {
        Eigen::VectorXcd p = Eigen::VectorXcd::Zero(n);
        for (std::size_t i = 0; i < active.size(); ++i) p += u[i] * std::exp(cdouble(0.0, -active[i]->detuning * t));
        return p;
      };
      const Eigen::VectorXcd modal = Vinv * (state - particular(ts));
      auto at = [&](double t) {
        Eigen::VectorXcd w = modal;
        for (Eigen::Index i = 0; i < n; ++i) w(i) *= std::exp(lambda(i) * (t - ts));
        return Eigen::VectorXcd(V * w + particular(t));
      };
      for (; k < t_grid.size() && t_grid[k] <= te; ++k) record(k, at(t_grid[k]));
      state = at(te);
    } else {
      auto rhs = [&](double t, const Eigen::VectorXcd& y) {
        Eigen::VectorXcd dy = mat.A * y;
        for (const auto* d : active) dy += d->b * std::exp(cdouble(0.0, -d->detuning * t));
        return dy;
      };
      detail::Dopri5<decltype(rhs)> solver(rhs, opts.rtol, opts.atol);
      double t = ts;
      for (; k < t_grid.size() && t_grid[k] <= te; ++k) {
        solver.advance(state, t, t_grid[k]);
        t = t_grid[k];
        record(k, state);
      }
      solver.advance(state, t, te);
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------

/// |a_m(t)|^2 of the transduction mechanical mode for a step drive switched on
/// at t = 0 on the electrical port, on mechanical resonance, one row per
/// resonator detuning Delta_e = omega_e - omega_m.
inline SweepGrid2D step_response_family(const TransducerModel& model, const std::vector<double>& delta_e,
                                        const std::vector<double>& t_grid, double amplitude = 1.0) {
  auto e = model.electrical_index();
  if (!e) throw ModelError("step response needs an electrical mode");
  const std::string port = model.modes()[*e].label;
  SweepGrid2D grid(t_grid, delta_e);
  grid.x_name = "time_s";
  grid.y_name = "delta_e_hz";
  parallel_rows(grid.rows(), [&](std::size_t r) {
    const auto row_model = model_at_control(model, ControlAxis::delta_e, delta_e[r]);
    const auto m = row_model.primary_mechanical_index();
    const auto traj = propagate(row_model, {DriveTone::step(port, amplitude, t_grid.front())}, t_grid);
    for (std::size_t c = 0; c < t_grid.size(); ++c) grid.at(r, c) = traj.occupations[m][c];
  });
  return grid;
}

/// Closed-form |a_m(t)|^2 of the two-mode model for a unit step drive on the
/// electrical mode at t = 0 (from rest), with drive coupling amplitude b.
inline double two_mode_step_occupation(double g, double kappa_e, double kappa_m, double delta_e, double delta_m, double b,
                                       double t) {
  const cdouble p(-kappa_e / 2.0, -delta_e), s(-kappa_m / 2.0, -delta_m), q(0.0, g);
  const cdouble det = p * s - q * q;
  const cdouble ss_e = -b * s / det, ss_m = b * q / det;
  const cdouble mu = 0.5 * (p + s), d = 0.5 * (p - s);
  const cdouble w = std::sqrt(d * d + q * q);
  const cdouble ch = std::cosh(w * t);
  const cdouble sh = std::abs(w * t) < 1e-8 ? cdouble(t, 0.0) : std::sinh(w * t) / w;
  const cdouble prop_m = std::exp(mu * t) * (ch * ss_m + sh * (q * ss_e - d * ss_m));
  return std::norm(ss_m - prop_m);
}

struct LoadingResult {
  double efficiency = 0.0;
  double t_peak = 0.0;
};

namespace detail {

inline double slowest_decay(const TransducerModel& model) {
  double k = std::numeric_limits<double>::infinity();
  for (const auto& m : model.modes())
    if (total_linewidth(m) > 0.0) k = std::min(k, total_linewidth(m));
  return std::isfinite(k) ? k : 0.0;
}

inline std::vector<double> pulse_window(const TransducerModel& model, const DriveTone& pulse, std::size_t samples) {
  const double k = slowest_decay(model);
  const double len = pulse.window->t_off - pulse.window->t_on;
  const double tail = k > 0.0 ? std::min(10.0 / k, 50.0 * len) : 10.0 * len;
  return linspace(pulse.window->t_on, pulse.window->t_off + tail, samples);
}

}  // namespace detail

/// Peak occupation of the transduction mechanical mode (or `target`) after a
/// one-photon pulse, on the pulse's own frame (the transduction mode).
inline LoadingResult loading_efficiency(const TransducerModel& model, const DriveTone& pulse,
                                        std::optional<std::string> target = std::nullopt) {
  pulse.validate();
  if (!pulse.window) throw Error("loading efficiency needs a rectangular pulse");
  const double n = pulse.photon_number();
  if (std::abs(n - 1.0) > 1e-9)
    throw Error("loading efficiency needs a pulse carrying exactly one photon (amplitude^2 * duration = " +
                std::to_string(n) + ")");
  const std::size_t m = target ? model.index_of(*target) : model.primary_mechanical_index();
  auto t = detail::pulse_window(model, pulse, 4001);
  const auto coarse = propagate(model, {pulse}, t);
  const auto& occ = coarse.occupations[m];
  std::size_t best = static_cast<std::size_t>(std::max_element(occ.begin(), occ.end()) - occ.begin());
  LoadingResult r{occ[best], t[best]};
  if (best > 0 && best + 1 < t.size()) {
    auto fine_t = linspace(t[best - 1], t[best + 1], 401);
    std::vector<double> grid;
    if (fine_t.front() > t.front()) grid.push_back(t.front());
    grid.insert(grid.end(), fine_t.begin(), fine_t.end());
    const auto fine = propagate(model, {pulse}, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (fine.occupations[m][i] > r.efficiency) r = {fine.occupations[m][i], grid[i]};
  }
  return r;
}

/// max_t | |a_m|^2_1 - |a_m|^2_2 | / max_t |a_m|^2_1 for the same pulse on two
/// models sharing the transduction mode.
inline double long_pulse_insensitivity_check(const TransducerModel& model_1mode, const TransducerModel& model_2mode,
                                             const DriveTone& pulse) {
  pulse.validate();
  if (!pulse.window) throw Error("insensitivity check needs a rectangular pulse");
  const auto t = detail::pulse_window(model_1mode, pulse, 4001);
  const auto a = propagate(model_1mode, {pulse}, t);
  const auto b = propagate(model_2mode, {pulse}, t);
  const auto& oa = a.occupations[model_1mode.primary_mechanical_index()];
  const auto& ob = b.occupations[model_2mode.primary_mechanical_index()];
  double diff = 0.0, top = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    diff = std::max(diff, std::abs(oa[i] - ob[i]));
    top = std::max(top, oa[i]);
  }
  if (!(top > 0.0)) throw DegenerateInputError("reference model is never loaded");
  return diff / top;
}

/// Mean spacing of successive local maxima, if there are at least two.
inline std::optional<double> oscillation_period(const std::vector<double>& times, const std::vector<double>& values) {
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < values.size(); ++i)
    if (values[i] > values[i - 1] && values[i] >= values[i + 1]) peaks.push_back(times[i]);
  if (peaks.size() < 2) return std::nullopt;
  return (peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
}

}  // namespace transim
