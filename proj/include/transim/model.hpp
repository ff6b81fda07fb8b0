#pragma once

// Domain types for a coupled-mode transducer: bosonic modes, pairwise
// couplings and the optical pump, plus the closed-form derived quantities
// (linewidths, port efficiencies, cooperativities, flux tuning).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "transim/error.hpp"

namespace transim {

enum class ModeKind { electrical, mechanical, optical };

/// How the mode's external channel is wired. A two-sided feedline couples
/// only half of kappa_ext into each direction.
enum class PortGeometry { transmission_twosided, reflection_onesided, none };

inline std::string_view to_string(ModeKind k) {
  switch (k) {
    case ModeKind::electrical: return "electrical";
    case ModeKind::mechanical: return "mechanical";
    case ModeKind::optical: return "optical";
  }
  return "?";
}

inline std::string_view to_string(PortGeometry g) {
  switch (g) {
    case PortGeometry::transmission_twosided: return "transmission_twosided";
    case PortGeometry::reflection_onesided: return "reflection_onesided";
    case PortGeometry::none: return "none";
  }
  return "?";
}

struct Mode {
  std::string label;
  ModeKind kind = ModeKind::mechanical;
  double omega = 0.0;      // rad/s
  double kappa_int = 0.0;  // rad/s
  double kappa_ext = 0.0;  // rad/s
  PortGeometry port = PortGeometry::none;

  void validate() const {
    if (label.empty()) throw ModelError("mode label must not be empty");
    if (!std::isfinite(omega) || !std::isfinite(kappa_int) || !std::isfinite(kappa_ext))
      throw ModelError("mode '" + label + "' has non-finite parameters");
    if (omega <= 0.0) throw ModelError("mode '" + label + "' needs omega > 0");
    if (kappa_int < 0.0 || kappa_ext < 0.0)
      throw ModelError("mode '" + label + "' has a negative loss rate");
  }
};

struct Coupling {
  std::string mode_a;
  std::string mode_b;
  double g = 0.0;  // rad/s
};

struct PumpConfig {
  double detuning = 0.0;             // rad/s from the optical resonance, negative = red
  double intracavity_photons = 0.0;  // n_c
  double g_om0 = 0.0;                // single-photon optomechanical rate, rad/s
};

/// Quadratic kinetic-inductance tuning of the microwave resonator with coil current.
struct FluxTuningCurve {
  double omega0 = 0.0;  // rad/s at zero current
  double c2 = 0.0;      // rad/s per A^2
};

// ---------------------------------------------------------------------------
// Closed-form quantities

inline double total_linewidth(const Mode& m) { return m.kappa_int + m.kappa_ext; }

/// Fraction of the mode's loss that goes to the measured port.
/// Two-sided feedlines use kappa_ext / (2 kappa), one-sided ports kappa_ext / kappa.
inline double coupling_efficiency(const Mode& m) {
  const double k = total_linewidth(m);
  if (k <= 0.0) throw DegenerateInputError("coupling efficiency of mode '" + m.label + "' with zero linewidth");
  switch (m.port) {
    case PortGeometry::transmission_twosided: return m.kappa_ext / (2.0 * k);
    case PortGeometry::reflection_onesided: return m.kappa_ext / k;
    case PortGeometry::none: return 0.0;
  }
  return 0.0;
}

/// C = 4 g^2 / (kappa_a kappa_b).
inline double cooperativity(double g, double kappa_a, double kappa_b) {
  if (!(kappa_a > 0.0) || !(kappa_b > 0.0))
    throw DegenerateInputError("cooperativity needs strictly positive linewidths");
  return 4.0 * g * g / (kappa_a * kappa_b);
}

inline double flux_tuned_frequency(const FluxTuningCurve& curve, double current) {
  return curve.omega0 - curve.c2 * current * current;
}

inline double pump_enhanced_gom(const PumpConfig& pump) {
  if (!(pump.intracavity_photons >= 0.0))
    throw ModelError("intracavity photon number must be non-negative");
  return pump.g_om0 * std::sqrt(pump.intracavity_photons);
}

// ---------------------------------------------------------------------------

/// A validated set of modes, couplings and pump settings. Any coupling that
/// joins the optical mode to a mechanical mode carries the pump-enhanced rate
/// g_om0 * sqrt(n_c); the constructor installs it.
class TransducerModel {
 public:
  TransducerModel() = default;

  TransducerModel(std::vector<Mode> modes, std::vector<Coupling> couplings, PumpConfig pump = {},
                  std::optional<FluxTuningCurve> tuning = std::nullopt)
      : modes_(std::move(modes)), couplings_(std::move(couplings)), pump_(pump), tuning_(tuning) {
    validate();
    install_pump();
  }

  const std::vector<Mode>& modes() const { return modes_; }
  const std::vector<Coupling>& couplings() const { return couplings_; }
  const PumpConfig& pump() const { return pump_; }
  const std::optional<FluxTuningCurve>& flux_tuning() const { return tuning_; }
  std::size_t size() const { return modes_.size(); }

  /// Named scalars carried along for reporting (e.g. alternative g_em presets).
  const std::map<std::string, double>& metadata() const { return metadata_; }
  TransducerModel& set_metadata(const std::string& key, double value) {
    metadata_[key] = value;
    return *this;
  }

  std::optional<std::size_t> find(std::string_view label) const {
    for (std::size_t i = 0; i < modes_.size(); ++i)
      if (modes_[i].label == label) return i;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view label) const {
    auto i = find(label);
    if (!i) throw ModelError("unknown mode label '" + std::string(label) + "'");
    return *i;
  }

  const Mode& mode(std::string_view label) const { return modes_[index_of(label)]; }

  std::optional<std::size_t> first_of_kind(ModeKind kind) const {
    for (std::size_t i = 0; i < modes_.size(); ++i)
      if (modes_[i].kind == kind) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> electrical_index() const { return first_of_kind(ModeKind::electrical); }
  std::optional<std::size_t> optical_index() const { return first_of_kind(ModeKind::optical); }

  /// The transduction mechanical mode: the one coupled to the optical mode
  /// when there is one, otherwise the first mechanical mode declared.
  std::size_t primary_mechanical_index() const {
    if (auto o = optical_index()) {
      for (const auto& c : couplings_) {
        auto a = index_of(c.mode_a), b = index_of(c.mode_b);
        if (a == *o && modes_[b].kind == ModeKind::mechanical) return b;
        if (b == *o && modes_[a].kind == ModeKind::mechanical) return a;
      }
    }
    auto m = first_of_kind(ModeKind::mechanical);
    if (!m) throw ModelError("model has no mechanical mode");
    return *m;
  }

  /// Coupling rate between two modes, zero when they are not coupled.
  double coupling(std::string_view a, std::string_view b) const {
    for (const auto& c : couplings_)
      if ((c.mode_a == a && c.mode_b == b) || (c.mode_a == b && c.mode_b == a)) return c.g;
    return 0.0;
  }

  TransducerModel with_mode(const Mode& replacement) const {
    auto modes = modes_;
    modes[index_of(replacement.label)] = replacement;
    return rebuilt(std::move(modes), couplings_, pump_);
  }

  TransducerModel with_frequency(std::string_view label, double omega) const {
    Mode m = mode(label);
    m.omega = omega;
    return with_mode(m);
  }

  /// Sets (or adds) the coupling between two modes. Optical couplings are
  /// controlled through the pump and cannot be set directly.
  TransducerModel with_coupling(std::string_view a, std::string_view b, double g) const {
    auto couplings = couplings_;
    bool found = false;
    for (auto& c : couplings)
      if ((c.mode_a == a && c.mode_b == b) || (c.mode_a == b && c.mode_b == a)) {
        c.g = g;
        found = true;
      }
    if (!found) couplings.push_back({std::string(a), std::string(b), g});
    return rebuilt(modes_, std::move(couplings), pump_);
  }

  TransducerModel with_pump(const PumpConfig& pump) const { return rebuilt(modes_, couplings_, pump); }

  TransducerModel with_intracavity_photons(double n_c) const {
    PumpConfig p = pump_;
    p.intracavity_photons = n_c;
    return with_pump(p);
  }

  TransducerModel with_flux_tuning(std::optional<FluxTuningCurve> tuning) const {
    TransducerModel m = *this;
    m.tuning_ = tuning;
    return m;
  }

  /// Copy without the optical mode, with its backaction folded into the
  /// mechanical linewidth as Gamma_om = 4 g_om^2 / kappa_o.
  TransducerModel with_optical_backaction() const {
    auto o = optical_index();
    if (!o) return *this;
    const double kappa_o = total_linewidth(modes_[*o]);
    const std::string& olabel = modes_[*o].label;
    std::vector<Mode> modes;
    std::vector<Coupling> couplings;
    for (const auto& m : modes_) {
      if (m.label == olabel) continue;
      Mode copy = m;
      const double g = coupling(olabel, m.label);
      if (g > 0.0 && kappa_o > 0.0) copy.kappa_int += 4.0 * g * g / kappa_o;
      modes.push_back(copy);
    }
    for (const auto& c : couplings_)
      if (c.mode_a != olabel && c.mode_b != olabel) couplings.push_back(c);
    TransducerModel out(std::move(modes), std::move(couplings), PumpConfig{}, tuning_);
    out.metadata_ = metadata_;
    return out;
  }

 private:
  TransducerModel rebuilt(std::vector<Mode> modes, std::vector<Coupling> couplings, PumpConfig pump) const {
    TransducerModel m(std::move(modes), std::move(couplings), pump, tuning_);
    m.metadata_ = metadata_;
    return m;
  }

  void validate() const {
    if (modes_.empty()) throw ModelError("model has no modes");
    int n_el = 0, n_opt = 0;
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      modes_[i].validate();
      for (std::size_t j = 0; j < i; ++j)
        if (modes_[j].label == modes_[i].label) throw ModelError("duplicate mode label '" + modes_[i].label + "'");
      n_el += modes_[i].kind == ModeKind::electrical;
      n_opt += modes_[i].kind == ModeKind::optical;
    }
    if (n_el > 1) throw ModelError("at most one electrical mode is supported");
    if (n_opt > 1) throw ModelError("at most one optical mode is supported");
    for (const auto& c : couplings_) {
      if (!find(c.mode_a) || !find(c.mode_b))
        throw ModelError("coupling refers to unknown mode '" + (find(c.mode_a) ? c.mode_b : c.mode_a) + "'");
      if (c.mode_a == c.mode_b) throw ModelError("self-coupling on mode '" + c.mode_a + "'");
      if (!std::isfinite(c.g) || c.g < 0.0) throw ModelError("coupling rates must be finite and non-negative");
    }
    if (!std::isfinite(pump_.detuning) || !std::isfinite(pump_.g_om0) || pump_.g_om0 < 0.0)
      throw ModelError("invalid pump configuration");
    if (!(pump_.intracavity_photons >= 0.0) || !std::isfinite(pump_.intracavity_photons))
      throw ModelError("intracavity photon number must be non-negative");
  }

  void install_pump() {
    auto o = optical_index();
    if (!o) return;
    const double g_om = pump_enhanced_gom(pump_);
    for (auto& c : couplings_)
      if (c.mode_a == modes_[*o].label || c.mode_b == modes_[*o].label) c.g = g_om;
  }

  std::vector<Mode> modes_;
  std::vector<Coupling> couplings_;
  PumpConfig pump_;
  std::optional<FluxTuningCurve> tuning_;
  std::map<std::string, double> metadata_;
};

}  // namespace transim
