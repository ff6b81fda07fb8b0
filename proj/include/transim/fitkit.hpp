#pragma once

// Parameter extraction: resonance notches, avoided crossings, step-response
// families, exponential recovery versus repetition rate and quadratic flux
// tuning. All rates are angular (rad/s); times in seconds.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "transim/error.hpp"
#include "transim/freq_domain.hpp"
#include "transim/grid.hpp"
#include "transim/levmar.hpp"
#include "transim/model.hpp"
#include "transim/noise_thermo.hpp"
#include "transim/time_domain.hpp"

namespace transim {

namespace detail {

inline void require_sigma(const std::vector<double>& sigma, std::size_t n) {
  if (sigma.empty()) return;
  if (sigma.size() != n) throw FitError("sigma must have one entry per data point");
  for (double s : sigma)
    if (!(s > 0.0) || !std::isfinite(s)) throw FitError("sigma must be positive and finite");
}

inline double weight(const std::vector<double>& sigma, std::size_t i) { return sigma.empty() ? 1.0 : 1.0 / sigma[i]; }

inline std::vector<double> logspace(double a, double b, std::size_t n) {
  std::vector<double> out = linspace(std::log(a), std::log(b), n);
  for (double& v : out) v = std::exp(v);
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline Eigen::VectorXd to_vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lorentzian notch

struct Spectrum {
  std::vector<double> omega;
  std::vector<double> mag;    // |S|, linear
  std::vector<double> sigma;  // optional
};

struct NotchOptions {
  PortGeometry geometry = PortGeometry::transmission_twosided;
  bool overcoupled = false;  // one-sided ports only: pick the over-coupled root for the guess
  std::optional<Eigen::VectorXd> guess;  // omega0, kappa_tot, kappa_ext, background
  LmOptions lm;
};

inline double notch_model(double omega, double omega0, double kappa_tot, double kappa_ext, double background,
                          PortGeometry geometry) {
  const double k_eff = geometry == PortGeometry::reflection_onesided ? kappa_ext : kappa_ext / 2.0;
  return background * std::abs(1.0 - k_eff / cdouble(kappa_tot / 2.0, omega - omega0));
}

/// Fits |S| of a single resonance seen through a feedline (two-sided) or in
/// reflection (one-sided). Parameters: omega0, kappa_tot, kappa_ext,
/// background; derived kappa_int and the fractional depth at resonance.
inline FitResult fit_lorentzian_notch(const Spectrum& s, const NotchOptions& opt = {}) {
  const std::size_t n = s.omega.size();
  if (n < 10 || s.mag.size() != n) throw FitError("notch fit needs at least 10 matched points");
  if (opt.geometry == PortGeometry::none) throw FitError("notch fit needs a port geometry");
  detail::require_sigma(s.sigma, n);

  Eigen::VectorXd x0(4);
  if (opt.guess) {
    x0 = *opt.guess;
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.omega[a] < s.omega[b]; });
    const std::size_t edge = std::max<std::size_t>(1, n / 10);
    std::vector<double> rim;
    for (std::size_t i = 0; i < edge; ++i) {
      rim.push_back(s.mag[order[i]]);
      rim.push_back(s.mag[order[n - 1 - i]]);
    }
    const double bg = detail::median(rim);
    const auto imin = static_cast<std::size_t>(std::min_element(s.mag.begin(), s.mag.end()) - s.mag.begin());
    const double depth = bg > 0.0 ? 1.0 - s.mag[imin] / bg : 0.0;
    const double lo = *std::min_element(s.mag.begin(), s.mag.end()), hi = *std::max_element(s.mag.begin(), s.mag.end());
    if (!(bg > 0.0) || depth < 1e-6 || hi - lo <= 1e-9 * hi)
      throw FitError("no resonance dip found: the spectrum is flat");
    // Half-depth points of |S|^2 sit at omega0 +- kappa_tot / 2.
    const double half = 0.5 * (bg * bg + s.mag[imin] * s.mag[imin]);
    double left = s.omega[order.front()], right = s.omega[order.back()];
    std::size_t pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), imin) - order.begin());
    for (std::size_t k = pos; k-- > 0;)
      if (s.mag[order[k]] * s.mag[order[k]] >= half) {
        left = s.omega[order[k]];
        break;
      }
    for (std::size_t k = pos; k < n; ++k)
      if (s.mag[order[k]] * s.mag[order[k]] >= half) {
        right = s.omega[order[k]];
        break;
      }
    const double kappa = std::max(right - left, 1e-12 * std::abs(s.omega[imin]));
    double kext = depth * kappa;
    if (opt.geometry == PortGeometry::reflection_onesided) kext = (opt.overcoupled ? 2.0 - depth : depth) * kappa / 2.0;
    x0 = detail::to_vec({s.omega[imin], kappa, kext, bg});
  }

  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r(static_cast<Eigen::Index>(i)) =
          (notch_model(s.omega[i], p(0), p(1), p(2), p(3), opt.geometry) - s.mag[i]) * detail::weight(s.sigma, i);
    return r;
  };
  LmOptions lm = opt.lm;
  lm.lower = detail::to_vec({-std::numeric_limits<double>::infinity(), 1e-300, 0.0, 1e-300});
  // Scale omega0 by the linewidth so that the step in omega0 is a fraction of kappa.
  lm.scale = detail::to_vec({std::max(std::abs(x0(1)), 1e-300), std::abs(x0(1)), std::max(std::abs(x0(2)), 1e-3 * std::abs(x0(1))),
                             std::abs(x0(3))});
  x0(2) = std::min(x0(2), x0(1));
  const auto res = levenberg_marquardt(resid, x0, lm);
  FitResult fr = make_fit_result({"omega0", "kappa_tot", "kappa_ext", "background"}, res, n);
  fr.derived["kappa_int"] = fr.params[1] - fr.params[2];
  fr.derived_sigma["kappa_int"] = std::sqrt(std::max(0.0, fr.covariance(1, 1) + fr.covariance(2, 2) - 2.0 * fr.covariance(1, 2)));
  fr.derived["depth"] = 1.0 - notch_model(fr.params[0], fr.params[0], fr.params[1], fr.params[2], 1.0, opt.geometry);
  if (fr.params[2] > fr.params[1]) fr.flags.push_back("kappa_ext_exceeds_kappa_tot");
  const double span = *std::max_element(s.omega.begin(), s.omega.end()) - *std::min_element(s.omega.begin(), s.omega.end());
  if (span < 3.0 * fr.params[1]) fr.flags.push_back("span_below_three_linewidths");
  if (!fr.converged) throw FitNotConverged("notch fit did not converge: " + fr.status, fr);
  return fr;
}

// ---------------------------------------------------------------------------
// Avoided crossing

struct CrossingOptions {
  ControlAxis control = ControlAxis::delta_e;
  double min_depth = 0.02;
  /// delta_e: g, omega_m, omega_e0.  coil_current: g, omega_m, omega0, c2.
  std::optional<Eigen::VectorXd> guess;
  LmOptions lm;
};

/// Undamped hybrid branches for bare frequencies omega_e and omega_m.
inline std::pair<double, double> crossing_branches(double g, double omega_e, double omega_m) {
  const double mid = 0.5 * (omega_e + omega_m);
  const double half = std::sqrt(g * g + 0.25 * (omega_e - omega_m) * (omega_e - omega_m));
  return {mid - half, mid + half};
}

namespace detail {

struct BranchPoint {
  double control;
  double freq;
  int branch;  // -1 lower, +1 upper, 0 nearest
};

inline double electrical_at(const Eigen::VectorXd& p, ControlAxis control, double y) {
  return control == ControlAxis::delta_e ? p(2) + y : p(2) - p(3) * y * y;
}

}  // namespace detail

/// Fits the undamped branch frequencies to the dips of an avoided-crossing
/// map. Rows with two or more dips contribute their two deepest dips as the
/// lower and upper branch; rows with a single dip are matched to the nearer
/// branch.
inline FitResult fit_avoided_crossing(const SweepGrid2D& grid, const CrossingOptions& opt = {}) {
  grid.check_shape();
  if (grid.cols() < 3 || grid.rows() < 3) throw FitError("avoided-crossing fit needs at least 3 x 3 samples");
  const double step = std::abs(grid.x[1] - grid.x[0]);
  std::vector<detail::BranchPoint> pts;
  double best_split = std::numeric_limits<double>::infinity(), best_mid = 0.0, best_y = 0.0;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    auto dips = find_dips(grid.x, grid.row_abs(r), opt.min_depth);
    if (dips.empty()) continue;
    std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.depth > b.depth; });
    if (dips.size() >= 2) {
      const double lo = std::min(dips[0].x, dips[1].x), hi = std::max(dips[0].x, dips[1].x);
      pts.push_back({grid.y[r], lo, -1});
      pts.push_back({grid.y[r], hi, +1});
      if (hi - lo < best_split) {
        best_split = hi - lo;
        best_mid = 0.5 * (hi + lo);
        best_y = grid.y[r];
      }
    } else {
      pts.push_back({grid.y[r], dips[0].x, 0});
    }
  }
  const bool coil = opt.control == ControlAxis::coil_current;
  const std::size_t n_par = coil ? 4 : 3;
  if (pts.size() <= n_par) throw FitError("too few resonance dips in the map to fit a crossing");

  Eigen::VectorXd x0(static_cast<Eigen::Index>(n_par));
  if (opt.guess) {
    if (opt.guess->size() != x0.size()) throw FitError("crossing guess has the wrong length");
    x0 = *opt.guess;
  } else {
    double g0 = step, wm = 0.0;
    if (std::isfinite(best_split)) {
      g0 = std::max(0.5 * best_split, step);
      wm = best_mid;
    } else {
      std::vector<double> f;
      for (const auto& p : pts) f.push_back(p.freq);
      wm = detail::median(f);
      best_y = grid.y[grid.rows() / 2];
    }
    if (!coil) {
      x0 = detail::to_vec({g0, wm, wm - best_y});
    } else {
      // Electrical track: the dip farther from omega_m in every row, fitted as a parabola.
      std::vector<double> ii, ff;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& p = pts[k];
        if (p.branch == 0) {
          ii.push_back(p.control);
          ff.push_back(p.freq);
        } else if (p.branch == -1 && k + 1 < pts.size()) {
          const auto& q = pts[k + 1];
          const double far = std::abs(p.freq - wm) > std::abs(q.freq - wm) ? p.freq : q.freq;
          if (std::abs(far - wm) > 3.0 * g0) {
            ii.push_back(p.control);
            ff.push_back(far);
          }
        }
      }
      Eigen::MatrixXd X(static_cast<Eigen::Index>(ii.size()), 2);
      Eigen::VectorXd Y(static_cast<Eigen::Index>(ii.size()));
      for (std::size_t k = 0; k < ii.size(); ++k) {
        X(static_cast<Eigen::Index>(k), 0) = 1.0;
        X(static_cast<Eigen::Index>(k), 1) = -ii[k] * ii[k];
        Y(static_cast<Eigen::Index>(k)) = ff[k];
      }
      if (ii.size() < 3) throw FitError("cannot guess the tuning curve; supply an initial guess");
      const Eigen::VectorXd c = X.colPivHouseholderQr().solve(Y);
      x0 = detail::to_vec({g0, wm, c(0), c(1)});
    }
  }

  const std::size_t n = pts.size();
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      const auto [lo, hi] = crossing_branches(p(0), detail::electrical_at(p, opt.control, pts[k].control), p(1));
      double model = pts[k].branch < 0 ? lo : hi;
      if (pts[k].branch == 0) model = std::abs(pts[k].freq - lo) < std::abs(pts[k].freq - hi) ? lo : hi;
      r(static_cast<Eigen::Index>(k)) = (model - pts[k].freq) / step;
    }
    return r;
  };
  LmOptions lm = opt.lm;
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(x0.size(), -std::numeric_limits<double>::infinity());
  lower(0) = 0.0;
  lm.lower = lower;
  // Frequencies move on the scale of the grid step, not of their absolute value.
  Eigen::VectorXd scale = Eigen::VectorXd::Constant(x0.size(), step);
  scale(0) = std::max(x0(0), step);
  if (coil) scale(3) = std::max(std::abs(x0(3)), 1.0);
  lm.scale = scale;
  const auto res = levenberg_marquardt(resid, x0, lm);
  std::vector<std::string> names = coil ? std::vector<std::string>{"g", "omega_m", "omega0", "c2"}
                                        : std::vector<std::string>{"g", "omega_m", "omega_e0"};
  FitResult fr = make_fit_result(names, res, n);
  fr.derived["splitting"] = 2.0 * fr.params[0];
  fr.derived_sigma["splitting"] = 2.0 * fr.sigmas[0];
  if (!std::isfinite(fr.sigmas[1])) fr.flags.push_back("omega_m_unidentifiable");

  const double y_lo = *std::min_element(grid.y.begin(), grid.y.end());
  const double y_hi = *std::max_element(grid.y.begin(), grid.y.end());
  const Eigen::VectorXd p = res.x;
  const double d_lo = detail::electrical_at(p, opt.control, y_lo) - p(1);
  const double d_hi = detail::electrical_at(p, opt.control, y_hi) - p(1);
  double d_mid = d_lo;
  if (coil && y_lo < 0.0 && y_hi > 0.0) d_mid = detail::electrical_at(p, opt.control, 0.0) - p(1);
  const bool crosses = d_lo * d_hi <= 0.0 || d_lo * d_mid <= 0.0 || d_hi * d_mid <= 0.0;
  if (!crosses) throw FitError("the crossing lies outside the scanned control window");
  if (!fr.converged) throw FitNotConverged("crossing fit did not converge: " + fr.status, fr);
  return fr;
}

// ---------------------------------------------------------------------------
// Step response

struct StepFitOptions {
  double kappa_m = 0.0;  // known mechanical linewidth, rad/s
  double delta_m = 0.0;  // drive detuning from the mechanical mode
  std::optional<Eigen::VectorXd> guess;  // g, kappa_e, scale
  std::vector<double> sigma;  // optional, row-major like the grid values
  LmOptions lm;
};

struct StepFitReport {
  FitResult joint;
  std::vector<FitResult> per_trace;
};

namespace detail {

inline double step_model(const Eigen::VectorXd& p, const StepFitOptions& opt, double delta_e, double t) {
  return p(2) * two_mode_step_occupation(p(0), p(1), opt.kappa_m, delta_e, opt.delta_m, 1.0, t);
}

inline void add_cem(FitResult& fr, double kappa_m) {
  const double g = fr.params[0], ke = fr.params[1];
  const double c = cooperativity(g, ke, kappa_m);
  const double dg = 2.0 * c / g, dk = -c / ke;
  const double var = dg * dg * fr.covariance(0, 0) + dk * dk * fr.covariance(1, 1) + 2.0 * dg * dk * fr.covariance(0, 1);
  fr.derived["C_em"] = c;
  fr.derived_sigma["C_em"] = std::sqrt(std::max(0.0, var));
}

/// Fit of selected rows of a step-response grid.
inline FitResult fit_step_rows(const SweepGrid2D& grid, const std::vector<std::size_t>& rows, const StepFitOptions& opt) {
  std::vector<std::size_t> cells;
  double top = 0.0;
  for (auto r : rows)
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const double v = grid.at(r, c).real();
      if (!std::isfinite(v)) continue;
      cells.push_back(r * grid.cols() + c);
      top = std::max(top, std::abs(v));
    }
  if (cells.size() < 4 || !(top > 0.0)) throw FitError("step-response data are empty or identically zero");
  const std::size_t nc = grid.cols();
  auto w = [&](std::size_t cell) { return opt.sigma.empty() ? 1.0 / top : 1.0 / opt.sigma[cell]; };

  auto model_shape = [&](double g, double ke, std::size_t cell) {
    return two_mode_step_occupation(g, ke, opt.kappa_m, grid.y[cell / nc], opt.delta_m, 1.0, grid.x[cell % nc]);
  };
  // Best linear scale for fixed (g, kappa_e) and the resulting cost.
  auto profile = [&](double g, double ke) {
    double smm = 0.0, smd = 0.0, sdd = 0.0;
    for (auto cell : cells) {
      const double m = model_shape(g, ke, cell) * w(cell), d = grid.values[cell].real() * w(cell);
      smm += m * m;
      smd += m * d;
      sdd += d * d;
    }
    const double scale = smm > 0.0 ? smd / smm : 0.0;
    return std::pair{scale, sdd - 2.0 * scale * smd + scale * scale * smm};
  };

  Eigen::VectorXd x0(3);
  if (opt.guess) {
    x0 = *opt.guess;
  } else {
    // Coarse log-grid scan; the trace length sets the slowest resolvable rate.
    const double span = grid.x.back() - grid.x.front();
    const double base = kTwoPi / span;
    const double k0 = std::max(opt.kappa_m, base);
    double best = std::numeric_limits<double>::infinity();
    for (double g : logspace(0.5 * base, 100.0 * base, 41))
      for (double ke : logspace(0.1 * k0, 30.0 * k0, 31)) {
        const auto [scale, cost] = profile(g, ke);
        if (scale > 0.0 && cost < best) {
          best = cost;
          x0 = to_vec({g, ke, scale});
        }
      }
    if (!std::isfinite(best)) throw FitError("could not find a starting point for the step-response fit");
  }
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto cell = cells[k];
      r(static_cast<Eigen::Index>(k)) = (step_model(p, opt, grid.y[cell / nc], grid.x[cell % nc]) - grid.values[cell].real()) * w(cell);
    }
    return r;
  };
  LmOptions lm = opt.lm;
  lm.lower = to_vec({0.0, 1e-300, 0.0});
  const auto res = levenberg_marquardt(resid, x0, lm);
  FitResult fr = make_fit_result({"g", "kappa_e", "scale"}, res, cells.size());
  add_cem(fr, opt.kappa_m);
  return fr;
}

}  // namespace detail

/// Fits the two-mode step response |a_m(t)|^2 (drive switched on at t = 0,
/// system at rest) to a family of traces, one row per Delta_e. The joint fit
/// shares g, kappa_e and an overall scale across rows; per-trace fits are
/// reported alongside.
inline StepFitReport fit_step_response(const SweepGrid2D& grid, const StepFitOptions& opt, bool per_trace = true) {
  grid.check_shape();
  if (!(opt.kappa_m > 0.0)) throw FitError("step-response fit needs the mechanical linewidth");
  if (!opt.sigma.empty()) detail::require_sigma(opt.sigma, grid.values.size());
  if (grid.rows() == 0 || grid.cols() < 4) throw FitError("step-response grid is too small");
  std::vector<std::size_t> all(grid.rows());
  std::iota(all.begin(), all.end(), 0);
  StepFitReport rep;
  rep.joint = detail::fit_step_rows(grid, all, opt);
  if (!rep.joint.converged) throw FitNotConverged("step-response fit did not converge: " + rep.joint.status, rep.joint);
  if (per_trace && grid.rows() > 1) {
    StepFitOptions o = opt;
    if (!o.guess) o.guess = detail::to_vec({rep.joint.params[0], rep.joint.params[1], rep.joint.params[2]});
    for (std::size_t r = 0; r < grid.rows(); ++r) {
      try {
        rep.per_trace.push_back(detail::fit_step_rows(grid, {r}, o));
      } catch (const FitError& e) {
        FitResult bad;
        bad.names = {"g", "kappa_e", "scale"};
        bad.params.assign(3, std::numeric_limits<double>::quiet_NaN());
        bad.sigmas.assign(3, std::numeric_limits<double>::quiet_NaN());
        bad.status = e.what();
        rep.per_trace.push_back(bad);
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Exponential recovery

struct RecoveryData {
  std::vector<double> rep_rate;  // Hz
  std::vector<double> noise;
  std::vector<double> sigma;  // optional
};

inline double recovery_shape(double rep_rate, double tau) {
  return 1.0 / std::expm1(1.0 / (rep_rate * tau));
}

/// Fits n(f) = n_base + n_heat x / (1 - x), x = exp(-1 / (f tau)).
/// Parameters tau, n_heat, n_base. Flags tau_unidentifiable when the heating
/// term is not resolved and wide_sigma when the knee f ~ 1/tau lies outside
/// the sampled rates or tau is poorly constrained.
inline FitResult fit_exp_recovery(const RecoveryData& d, const LmOptions& lm_opt = {}) {
  const std::size_t n = d.rep_rate.size();
  if (n < 5 || d.noise.size() != n) throw FitError("recovery fit needs at least 5 repetition rates");
  detail::require_sigma(d.sigma, n);
  for (double f : d.rep_rate)
    if (!(f > 0.0)) throw FitError("repetition rates must be positive");
  const double f_lo = *std::min_element(d.rep_rate.begin(), d.rep_rate.end());
  const double f_hi = *std::max_element(d.rep_rate.begin(), d.rep_rate.end());

  // Profile tau on a log grid with the two linear amplitudes solved exactly.
  auto linear = [&](double tau) {
    double s11 = 0.0, s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::pow(detail::weight(d.sigma, i), 2), h = recovery_shape(d.rep_rate[i], tau);
      s11 += w;
      s12 += w * h;
      s22 += w * h * h;
      b1 += w * d.noise[i];
      b2 += w * h * d.noise[i];
    }
    const double det = s11 * s22 - s12 * s12;
    double base = b1 / s11, heat = 0.0;
    if (det > 1e-14 * s11 * s22) {
      base = (s22 * b1 - s12 * b2) / det;
      heat = (s11 * b2 - s12 * b1) / det;
    }
    if (heat < 0.0) {
      heat = 0.0;
      base = b1 / s11;
    }
    if (base < 0.0) {
      base = 0.0;
      heat = s22 > 0.0 ? std::max(0.0, b2 / s22) : 0.0;
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (base + heat * recovery_shape(d.rep_rate[i], tau) - d.noise[i]) * detail::weight(d.sigma, i);
      cost += r * r;
    }
    return std::tuple{base, heat, cost};
  };
  Eigen::VectorXd x0(3);
  double best = std::numeric_limits<double>::infinity();
  for (double tau : detail::logspace(0.02 / f_hi, 50.0 / f_lo, 301)) {
    const auto [base, heat, cost] = linear(tau);
    if (cost < best * (1.0 - 1e-12)) {
      best = cost;
      x0 = detail::to_vec({tau, heat, base});
    }
  }
  const double amp = std::max({std::abs(x0(1)), std::abs(x0(2)), 1e-300});
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r(static_cast<Eigen::Index>(i)) =
          (p(2) + p(1) * recovery_shape(d.rep_rate[i], p(0)) - d.noise[i]) * detail::weight(d.sigma, i);
    return r;
  };
  LmOptions lm = lm_opt;
  lm.lower = detail::to_vec({1e-300, 0.0, 0.0});
  lm.scale = detail::to_vec({x0(0), amp, amp});
  const auto res = levenberg_marquardt(resid, x0, lm);
  FitResult fr = make_fit_result({"tau", "n_heat", "n_base"}, res, n);
  const double tau = fr.params[0];
  if (!(fr.params[1] > 2.0 * fr.sigmas[1]) || !std::isfinite(fr.sigmas[0])) fr.flags.push_back("tau_unidentifiable");
  const double knee = 1.0 / (5.0 * tau);
  if (knee < f_lo || knee > f_hi || !(fr.sigmas[0] < 0.25 * tau)) fr.flags.push_back("wide_sigma");
  return fr;
}

// ---------------------------------------------------------------------------
// Flux tuning

struct TuningData {
  std::vector<double> current;  // A
  std::vector<double> omega;    // rad/s
  std::vector<double> sigma;    // optional
};

/// Weighted linear least squares for omega(I) = omega0 - c2 I^2.
inline FitResult fit_flux_tuning(const TuningData& d) {
  const std::size_t n = d.current.size();
  if (d.omega.size() != n) throw FitError("currents and frequencies differ in length");
  if (n < 3) throw FitError("flux-tuning fit needs at least 3 currents");
  detail::require_sigma(d.sigma, n);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  double i2_min = std::numeric_limits<double>::infinity(), i2_max = -i2_min;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = detail::weight(d.sigma, i), i2 = d.current[i] * d.current[i];
    const auto k = static_cast<Eigen::Index>(i);
    X(k, 0) = w;
    X(k, 1) = -w * i2;
    y(k) = w * d.omega[i];
    i2_min = std::min(i2_min, i2);
    i2_max = std::max(i2_max, i2);
  }
  if (!(i2_max - i2_min > 1e-12 * std::max(i2_max, 1e-300)))
    throw FitError("all currents have the same magnitude; omega0 and c2 are degenerate");
  // Column scaling keeps the normal matrix well conditioned for amperes vs rad/s.
  const Eigen::Vector2d cs(X.col(0).norm(), X.col(1).norm());
  const Eigen::MatrixXd Xs = X * cs.cwiseInverse().asDiagonal();
  const Eigen::VectorXd bs = Xs.colPivHouseholderQr().solve(y);
  const Eigen::Vector2d beta = bs.cwiseQuotient(cs);
  const Eigen::VectorXd r = X * beta - y;
  const Eigen::Matrix2d cov_s = (Xs.transpose() * Xs).inverse();
  const Eigen::Matrix2d cov = cs.cwiseInverse().asDiagonal() * cov_s * cs.cwiseInverse().asDiagonal();
  FitResult fr;
  fr.names = {"omega0", "c2"};
  fr.params = {beta(0), beta(1)};
  fr.n_data = n;
  fr.chi2_reduced = n > 2 ? r.squaredNorm() / static_cast<double>(n - 2) : 0.0;
  fr.covariance = cov * fr.chi2_reduced;
  fr.sigmas = {std::sqrt(fr.covariance(0, 0)), std::sqrt(fr.covariance(1, 1))};
  fr.residual_norm = r.norm();
  fr.initial_residual_norm = y.norm();
  fr.converged = true;
  fr.status = "linear least squares";
  return fr;
}

// ---------------------------------------------------------------------------
// Lorentzian peak

struct PeakData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;  // optional
};

/// y = offset + amplitude / (1 + (2 (x - center) / width)^2).
inline FitResult fit_lorentzian_peak(const PeakData& d, const LmOptions& lm_opt = {}) {
  const std::size_t n = d.x.size();
  if (n < 5 || d.y.size() != n) throw FitError("peak fit needs at least 5 matched points");
  detail::require_sigma(d.sigma, n);
  const auto imax = static_cast<std::size_t>(std::max_element(d.y.begin(), d.y.end()) - d.y.begin());
  const double base = *std::min_element(d.y.begin(), d.y.end());
  const double amp = d.y[imax] - base;
  if (!(amp > 0.0)) throw FitError("no peak found: the data are flat");
  double left = *std::min_element(d.x.begin(), d.x.end()), right = *std::max_element(d.x.begin(), d.x.end());
  double w_lo = d.x[imax], w_hi = d.x[imax];
  for (std::size_t i = 0; i < n; ++i)
    if (d.y[i] - base >= 0.5 * amp) {
      w_lo = std::min(w_lo, d.x[i]);
      w_hi = std::max(w_hi, d.x[i]);
    }
  const double width = std::max(w_hi - w_lo, 1e-3 * (right - left));
  auto resid = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double u = 2.0 * (d.x[i] - p(1)) / p(2);
      r(static_cast<Eigen::Index>(i)) = (p(3) + p(0) / (1.0 + u * u) - d.y[i]) * detail::weight(d.sigma, i);
    }
    return r;
  };
  LmOptions lm = lm_opt;
  lm.lower = detail::to_vec({0.0, -std::numeric_limits<double>::infinity(), 1e-300, -std::numeric_limits<double>::infinity()});
  lm.scale = detail::to_vec({amp, width, width, std::max(std::abs(base), amp)});
  const auto res = levenberg_marquardt(resid, detail::to_vec({amp, d.x[imax], width, base}), lm);
  FitResult fr = make_fit_result({"amplitude", "center", "width", "offset"}, res, n);
  if (!fr.converged) throw FitNotConverged("peak fit did not converge: " + fr.status, fr);
  return fr;
}

}  // namespace transim
