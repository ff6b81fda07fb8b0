#pragma once

// Calibration arithmetic for the four-port CW efficiency, the pulsed
// efficiency, the microwave input-line loss budget and the sideband power
// correction.

#include <cmath>
#include <vector>

#include "transim/error.hpp"
#include "transim/units.hpp"

namespace transim {

inline constexpr double kDefaultAlpha = 0.73;

/// Linear magnitudes |S| of the four measured paths at matched frequencies.
struct FourPortRecord {
  double s_ee = 0.0;
  double s_oo = 0.0;
  double s_oe = 0.0;
  double s_eo = 0.0;
  double alpha = kDefaultAlpha;
};

/// eta_CW = 2 alpha |S_oe| |S_eo| / (|S_ee| |S_oo|). The microwave and
/// optical line gains appear once in each numerator and denominator term and
/// cancel.
inline double cw_efficiency(const FourPortRecord& r) {
  for (double v : {r.s_ee, r.s_oo, r.s_oe, r.s_eo})
    if (!(v >= 0.0) || !std::isfinite(v)) throw CalibrationError("S-parameter magnitudes must be finite and >= 0");
  if (!(r.alpha > 0.0 && r.alpha <= 1.0)) throw CalibrationError("alpha must lie in (0, 1]");
  if (!(r.s_ee > 0.0) || !(r.s_oo > 0.0)) throw CalibrationError("reference paths S_ee and S_oo must be non-zero");
  return 2.0 * r.alpha * r.s_oe * r.s_eo / (r.s_ee * r.s_oo);
}

/// Amplitude gains of the four external lines (input/output, microwave/optical).
struct LineGains {
  double mw_in = 1.0;
  double mw_out = 1.0;
  double opt_in = 1.0;
  double opt_out = 1.0;
};

/// Four-port record that an ideal measurement of a device with on-chip
/// magnitudes |S_oe|, |S_eo| would produce through the given lines. The
/// optical reflection reference carries both EOM sidebands, reduced by alpha.
inline FourPortRecord synthesize_four_port(double device_s_oe, double device_s_eo, const LineGains& g,
                                           double alpha = kDefaultAlpha) {
  FourPortRecord r;
  r.alpha = alpha;
  r.s_ee = g.mw_in * g.mw_out;
  r.s_oo = 2.0 * alpha * g.opt_in * g.opt_out;
  r.s_oe = g.mw_in * device_s_oe * g.opt_out;
  r.s_eo = g.opt_in * device_s_eo * g.mw_out;
  return r;
}

/// eta_pulsed = n_det hbar omega / (eta_MW eta_det P t).
inline double pulsed_efficiency(double n_det, double omega_drive, double eta_mw, double eta_det, double p_pulse,
                                double t_pulse) {
  const double denom = eta_mw * eta_det * p_pulse * t_pulse;
  if (!(denom > 0.0) || !(omega_drive > 0.0)) throw CalibrationError("pulsed efficiency needs positive inputs");
  if (!(n_det >= 0.0)) throw CalibrationError("detected photon number must be non-negative");
  return n_det * photon_energy(omega_drive) / denom;
}

/// Mean input microwave photons reaching the chip.
inline double input_microwave_photons(double omega_drive, double eta_mw, double p_pulse, double t_pulse) {
  return eta_mw * p_pulse * t_pulse / photon_energy(omega_drive);
}

// ---------------------------------------------------------------------------
// Loss budget

struct DbValue {
  double value = 0.0;  // dB of loss, >= 0
  double sigma = 0.0;
};

struct LossBudget {
  DbValue circulator;
  DbValue unattenuated_line;
  DbValue drive_line;
  DbValue segment;
};

inline void check_loss(const DbValue& v) {
  if (!(v.value >= 0.0)) throw CalibrationError("losses must be given as non-negative dB");
  if (!(v.sigma >= 0.0)) throw CalibrationError("uncertainties must be non-negative");
}

/// Root-sum-square of independent dB uncertainties.
inline DbValue add_losses(std::initializer_list<DbValue> parts) {
  DbValue out;
  double var = 0.0;
  for (const auto& p : parts) {
    check_loss(p);
    out.value += p.value;
    var += p.sigma * p.sigma;
  }
  out.sigma = std::sqrt(var);
  return out;
}

/// Loss of one unattenuated line from a through measurement of two of them
/// joined by the circulator.
inline DbValue unattenuated_line_loss(const DbValue& two_line_through, const DbValue& circulator) {
  check_loss(two_line_through);
  check_loss(circulator);
  if (circulator.value > two_line_through.value) throw CalibrationError("circulator loss exceeds the through loss");
  return {(two_line_through.value - circulator.value) / 2.0,
          std::sqrt(two_line_through.sigma * two_line_through.sigma + circulator.sigma * circulator.sigma) / 2.0};
}

/// Drive-line attenuation from a through measurement of drive line plus one
/// unattenuated line: subtract circulator and unattenuated-line losses.
inline DbValue drive_line_loss(const DbValue& drive_plus_line_through, const DbValue& circulator,
                               const DbValue& unattenuated) {
  check_loss(drive_plus_line_through);
  const DbValue sub = add_losses({circulator, unattenuated});
  return {drive_plus_line_through.value - sub.value,
          std::sqrt(drive_plus_line_through.sigma * drive_plus_line_through.sigma + sub.sigma * sub.sigma)};
}

/// Total input attenuation to the chip: drive line plus the connecting segment.
inline DbValue line_loss_budget(const LossBudget& b) {
  check_loss(b.circulator);
  check_loss(b.unattenuated_line);
  return add_losses({b.drive_line, b.segment});
}

/// Value of f at eta_MW and at eta_MW shifted by +-sigma dB.
struct Band {
  double low = 0.0;
  double nominal = 0.0;
  double high = 0.0;
};

template <class Fn>
Band evaluate_band_db(Fn&& f, double eta_mw_db, double sigma_db) {
  const double a = f(db_to_linear(eta_mw_db - sigma_db));
  const double b = f(db_to_linear(eta_mw_db + sigma_db));
  return {std::min(a, b), f(db_to_linear(eta_mw_db)), std::max(a, b)};
}

// ---------------------------------------------------------------------------

/// Factor by which the blue-detuned pump power must be raised: the ratio of
/// the red to blue fitted detection peaks at large, sideband-independent
/// mechanical occupation.
inline double sideband_power_correction(double fitted_peak_blue, double fitted_peak_red) {
  if (!(fitted_peak_blue > 0.0) || !(fitted_peak_red > 0.0))
    throw CalibrationError("fitted sideband peaks must be positive");
  return fitted_peak_red / fitted_peak_blue;
}

}  // namespace transim
