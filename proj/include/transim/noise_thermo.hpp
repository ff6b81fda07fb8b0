#pragma once

// Photon-counting layer: detection chain, sideband-asymmetry thermometry,
// input-referred added noise, click probabilities and residual heating at
// high repetition rates.

#include <cmath>
#include <string>
#include <vector>

#include "transim/error.hpp"
#include "transim/units.hpp"

namespace transim {

struct DetectionChain {
  double eta_fiber = 1.0;
  double eta_filter = 1.0;
  double eta_snspd = 1.0;
  double dark_rate = 0.0;  // counts / s
};

inline double detection_efficiency(const DetectionChain& chain) {
  for (double e : {chain.eta_fiber, chain.eta_filter, chain.eta_snspd})
    if (!(e >= 0.0 && e <= 1.0)) throw Error("detection efficiencies must lie in [0, 1]");
  if (!(chain.dark_rate >= 0.0)) throw Error("dark rate must be non-negative");
  return chain.eta_fiber * chain.eta_filter * chain.eta_snspd;
}

// ---------------------------------------------------------------------------
// Sideband asymmetry

/// Relative anti-Stokes (red pump) and Stokes (blue pump) scattering rates
/// for a mechanical occupation n: proportional to n and n + 1.
struct SidebandRates {
  double red;
  double blue;
};

inline SidebandRates sideband_rates(double n_th, double scale = 1.0) { return {scale * n_th, scale * (n_th + 1.0)}; }

/// Thermal occupation from red/blue detection probabilities. The blue rate is
/// multiplied by power_correction (the factor by which blue detection would
/// rise had the blue intracavity power been equalized); dark probability per
/// gate is subtracted from both before inverting r = red/blue as r / (1 - r).
inline double occupation_from_asymmetry(double p_red, double p_blue, double power_correction = 1.0,
                                        double dark_per_gate = 0.0) {
  if (!(power_correction > 0.0)) throw Error("power correction must be positive");
  const double red = p_red - dark_per_gate;
  const double blue = (p_blue - dark_per_gate) * power_correction;
  if (!(red > 0.0) || !(blue > 0.0))
    throw InsufficientStatisticsError("no counts above the dark level on one sideband");
  const double r = red / blue;
  if (r >= 1.0) throw UnphysicalAsymmetryError("red/blue ratio " + std::to_string(r) + " is not below 1");
  return r / (1.0 - r);
}

/// Input-referred added noise N_add = n_th / eta_em.
inline double added_noise(double n_th, double eta_em) {
  if (!(eta_em > 0.0)) throw DegenerateInputError("added noise needs a non-zero loading efficiency");
  return n_th / eta_em;
}

// ---------------------------------------------------------------------------
// Pulsed detection

struct PulsedExperiment {
  double pulse_energy = 0.0;  // J, optical
  double rep_rate = 100e3;    // Hz
  double t_pulse_mw = 60e-9;  // s
  double t_pulse_opt = 40e-9; // s, also the detection gate
  double n_mic = 0.0;         // mean input microwave photons
  double scatter_prob = 0.0;  // per quantum
};

struct TransductionFactors {
  double eta_em = 0.0;
  double eta_om = 0.0;
  double n_add = 0.0;
};

enum class ClickConversion { linear, poisson };

/// Mean detected photons per pulse: eta_det eta_om (eta_em n_mic + N_add),
/// plus dark counts in the optical gate when include_dark is set. With the
/// Poisson flag the mean is turned into a click probability 1 - exp(-mean).
inline double click_probability(const PulsedExperiment& exp, const TransductionFactors& f, const DetectionChain& chain,
                                ClickConversion conv = ClickConversion::linear, bool include_dark = false) {
  const double eta_det = detection_efficiency(chain);
  if (!(f.eta_em >= 0.0 && f.eta_em <= 1.0) || !(f.eta_om >= 0.0 && f.eta_om <= 1.0))
    throw Error("transduction efficiencies must lie in [0, 1]");
  if (!(f.n_add >= 0.0) || !(exp.n_mic >= 0.0)) throw Error("photon numbers must be non-negative");
  double mean = eta_det * f.eta_om * (f.eta_em * exp.n_mic + f.n_add);
  if (include_dark) mean += chain.dark_rate * exp.t_pulse_opt;
  return conv == ClickConversion::poisson ? -std::expm1(-mean) : mean;
}

/// Slope and intercept of the linear click model in n_mic.
struct ClickLine {
  double slope;
  double intercept;
};

inline ClickLine click_line(const TransductionFactors& f, const DetectionChain& chain) {
  const double k = detection_efficiency(chain) * f.eta_om;
  return {k * f.eta_em, k * f.n_add};
}

// ---------------------------------------------------------------------------
// Repetition rate

struct ThermalModel {
  double n_heat = 0.0;  // phonons left by each optical pulse
  double tau = 0.0;     // recovery time, s
  double n_base = 0.0;  // occupation with no carry-over
};

/// Steady-state occupation seen by a pulse when residual phonons from all
/// earlier pulses decay with time constant tau: n_base + n_heat x / (1 - x),
/// x = exp(-1 / (rep_rate tau)).
inline double pre_pulse_occupation(const ThermalModel& m, double rep_rate) {
  if (!(m.tau > 0.0)) throw Error("recovery time must be positive");
  if (!(rep_rate > 0.0)) throw Error("repetition rate must be positive");
  if (m.n_heat < 0.0 || m.n_base < 0.0) throw Error("thermal model parameters must be non-negative");
  const double x = std::exp(-1.0 / (rep_rate * m.tau));
  return m.n_base + m.n_heat * x / (-std::expm1(-1.0 / (rep_rate * m.tau)));
}

inline constexpr double kReferenceRepRate = 50e3;

/// Noise relative to its value at the reference repetition rate (50 kHz).
inline double rep_rate_noise(const ThermalModel& m, double rep_rate, double reference_rate = kReferenceRepRate) {
  const double ref = pre_pulse_occupation(m, reference_rate);
  if (!(ref > 0.0)) throw DegenerateInputError("reference noise level is zero");
  return pre_pulse_occupation(m, rep_rate) / ref;
}

// ---------------------------------------------------------------------------
// Scattering probability

struct ScatterProbability {
  double value = 0.0;
  bool linearity_warning = false;  // set above 0.1, where the linear model breaks down
};

/// Linear-in-energy scattering probability p_s = gain * E with
/// gain = eta_o 4 g_om0^2 / kappa_o^2 * photons_per_joule.
inline double scatter_conversion_gain(double g_om0, double kappa_o, double eta_o, double photons_per_joule) {
  if (!(kappa_o > 0.0) || !(g_om0 >= 0.0) || !(eta_o >= 0.0) || !(photons_per_joule > 0.0))
    throw Error("scatter gain inputs must be positive");
  return eta_o * 4.0 * g_om0 * g_om0 / (kappa_o * kappa_o) * photons_per_joule;
}

inline ScatterProbability sideband_scatter_probability(double pulse_energy, double conversion_gain) {
  if (!(pulse_energy >= 0.0) || !(conversion_gain >= 0.0)) throw Error("pulse energy and gain must be non-negative");
  const double p = conversion_gain * pulse_energy;
  return {p, p > 0.1};
}

/// g_om0 from (pulse energy, scattering probability) pairs: the slope of a
/// weighted least-squares line through the origin, inverted through the gain.
struct ScatterFit {
  double g_om0 = 0.0;
  double sigma = 0.0;
  double slope = 0.0;
};

inline ScatterFit fit_g_om0_from_scatter(const std::vector<double>& energy, const std::vector<double>& prob,
                                         const std::vector<double>& sigma, double kappa_o, double eta_o,
                                         double photons_per_joule) {
  if (energy.size() != prob.size() || energy.size() != sigma.size() || energy.size() < 2)
    throw InsufficientStatisticsError("scatter fit needs at least two matched points");
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw Error("sigma must be positive");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sxx += w * energy[i] * energy[i];
    sxy += w * energy[i] * prob[i];
  }
  if (!(sxx > 0.0)) throw DegenerateInputError("all pulse energies are zero");
  const double slope = sxy / sxx;
  const double slope_sigma = std::sqrt(1.0 / sxx);
  const double unit = scatter_conversion_gain(1.0, kappa_o, eta_o, photons_per_joule);  // gain per g_om0^2
  if (!(slope > 0.0)) throw DegenerateInputError("scatter probability does not grow with energy");
  const double g = std::sqrt(slope / unit);
  return {g, 0.5 * g * slope_sigma / slope, slope};
}

}  // namespace transim
